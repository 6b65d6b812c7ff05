use std::path::Path;

use image::{DynamicImage, GenericImageView};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed;

/// A decoded RGB source image. Immutable once constructed.
#[derive(Clone)]
pub struct SourceImage {
    pub name: String,
    pub height: usize,
    pub width: usize,
    /// Row-major, channel-last RGB.
    pixels: Vec<u8>,
    content_hash: String,
}

impl std::fmt::Debug for SourceImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SourceImage")
            .field("name", &self.name)
            .field("height", &self.height)
            .field("width", &self.width)
            .field("content_hash", &self.content_hash)
            .finish()
    }
}

/// Provenance summary carried in dataset manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub content_hash: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Reject anything that is not 8-bit RGB instead of converting it.
    pub strict: bool,
}

/// Digest of a decoded HxWx3 buffer. The dimensions are part of the digest so
/// that two rasters with the same bytes but different shapes never collide.
pub fn pixel_hash(height: usize, width: usize, pixels: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((height as u64).to_le_bytes());
    hasher.update((width as u64).to_le_bytes());
    hasher.update(pixels);
    hex::encode(hasher.finalize())
}

impl SourceImage {
    pub fn from_rgb(name: impl Into<String>, height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::precondition("source image must be non-empty"));
        }
        if pixels.len() != height * width * 3 {
            return Err(Error::precondition(format!(
                "pixel buffer has {} bytes, expected {}x{}x3",
                pixels.len(),
                height,
                width
            )));
        }
        let content_hash = pixel_hash(height, width, &pixels);
        Ok(Self {
            name: name.into(),
            height,
            width,
            pixels,
            content_hash,
        })
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    pub fn info(&self) -> SourceInfo {
        SourceInfo {
            name: self.name.clone(),
            height: self.height,
            width: self.width,
            content_hash: self.content_hash.clone(),
        }
    }

    /// Decode an image file into an RGB source image.
    pub fn load(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".to_string());
        Self::from_dynamic(name, img, opts).map_err(|e| match e {
            Error::Precondition(reason) => Error::Load {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn from_dynamic(name: String, img: DynamicImage, opts: LoadOptions) -> Result<Self> {
        let (w, h) = img.dimensions();
        let rgb = match img {
            DynamicImage::ImageRgb8(buf) => buf,
            other => {
                if opts.strict {
                    return Err(Error::precondition(format!(
                        "expected 8-bit RGB, found {:?}",
                        other.color()
                    )));
                }
                tracing::warn!(
                    color = ?other.color(),
                    "source image '{name}' is not 8-bit RGB, converting to 3 channels"
                );
                other.to_rgb8()
            }
        };
        Self::from_rgb(name, h as usize, w as usize, rgb.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("buffer size checked at construction");
        buf.save(path)?;
        Ok(())
    }
}

/// I.i.d. uniform 8-bit noise image, deterministic in `seed`.
pub fn make_noise_image(height: usize, width: usize, seed: u64) -> Result<SourceImage> {
    if height == 0 || width == 0 {
        return Err(Error::precondition("noise image dimensions must be positive"));
    }
    let mut rng = seed::named_stream(seed, "noise-image", 0);
    let mut pixels = vec![0u8; height * width * 3];
    rng.fill_bytes(&mut pixels);
    SourceImage::from_rgb(format!("noise-{seed}"), height, width, pixels)
}
