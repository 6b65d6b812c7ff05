//! Dataset containers, loaders and batch assembly.

pub mod cifar;
pub mod packed;
pub mod source;
pub mod speech;

pub use packed::PackedImages;
pub use source::{ClipSource, FlipCrop, ImageSource, InputSource, LabeledData, Normalization};
