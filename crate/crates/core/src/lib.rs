//! Single-datum knowledge distillation.
//!
//! Generate a large augmented dataset from one image or one audio clip, train
//! a randomly initialized student to match a frozen teacher's
//! temperature-softened outputs on it, then compress and analyze the result.

pub mod audioforge;
pub mod compress;
pub mod data;
pub mod distillery;
pub mod error;
pub mod lens;
pub mod modelzoo;
pub mod patchforge;
pub mod run;
pub mod seed;
pub mod util;

pub use error::{Error, Result};
