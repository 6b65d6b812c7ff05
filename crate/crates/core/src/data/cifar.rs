//! CIFAR-10 / CIFAR-100 binary-format loader with optional download.
//!
//! Expected layout under the data root:
//! `cifar-10-batches-bin/{data_batch_1..5,test_batch}.bin` and
//! `cifar-100-binary/{train,test}.bin`.

use std::fs::{self, File};
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use md5::{Digest, Md5};

use super::packed::PackedImages;
use crate::error::{Error, Result};

pub const IMAGE_BYTES: usize = 32 * 32 * 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifarKind {
    Cifar10,
    Cifar100,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl CifarKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "").as_str() {
            "cifar10" => Ok(Self::Cifar10),
            "cifar100" => Ok(Self::Cifar100),
            _ => Err(Error::config(format!("unknown dataset `{name}` (expected cifar10 or cifar100)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Cifar10 => "cifar10",
            Self::Cifar100 => "cifar100",
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Self::Cifar10 => 10,
            Self::Cifar100 => 100,
        }
    }

    fn dir(self) -> &'static str {
        match self {
            Self::Cifar10 => "cifar-10-batches-bin",
            Self::Cifar100 => "cifar-100-binary",
        }
    }

    fn archive(self) -> (&'static str, &'static str) {
        match self {
            Self::Cifar10 => (
                "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz",
                "c32a1d4ab5d03f1284b67883e8d87530",
            ),
            Self::Cifar100 => (
                "https://www.cs.toronto.edu/~kriz/cifar-100-binary.tar.gz",
                "03b5dce01913d631647c71ecec9e9cb8",
            ),
        }
    }

    /// Bytes per record: label byte(s) + image.
    fn record_len(self) -> usize {
        match self {
            Self::Cifar10 => 1 + IMAGE_BYTES,
            Self::Cifar100 => 2 + IMAGE_BYTES,
        }
    }

    fn files(self, split: Split) -> Vec<(&'static str, usize)> {
        match (self, split) {
            (Self::Cifar10, Split::Train) => vec![
                ("data_batch_1.bin", 10_000),
                ("data_batch_2.bin", 10_000),
                ("data_batch_3.bin", 10_000),
                ("data_batch_4.bin", 10_000),
                ("data_batch_5.bin", 10_000),
            ],
            (Self::Cifar10, Split::Test) => vec![("test_batch.bin", 10_000)],
            (Self::Cifar100, Split::Train) => vec![("train.bin", 50_000)],
            (Self::Cifar100, Split::Test) => vec![("test.bin", 10_000)],
        }
    }

    pub fn class_names(self) -> Vec<String> {
        match self {
            Self::Cifar10 => ["airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            Self::Cifar100 => (0..100).map(|i| format!("class{i}")).collect(),
        }
    }
}

/// Decoded split: HWC u8 images and labels.
#[derive(Debug, Clone)]
pub struct CifarSplit {
    pub images: PackedImages,
    pub labels: Vec<i64>,
    pub kind: CifarKind,
}

/// Decode records from a binary batch. Stored images are planar (CHW);
/// output is interleaved HWC.
pub fn decode_records(kind: CifarKind, bytes: &[u8], images: &mut PackedImages, labels: &mut Vec<i64>) -> Result<()> {
    let rl = kind.record_len();
    if bytes.len() % rl != 0 {
        return Err(Error::format("cifar", format!("{} bytes is not a multiple of the {rl}-byte record", bytes.len())));
    }
    let label_off = rl - IMAGE_BYTES - 1;
    let mut hwc = vec![0u8; IMAGE_BYTES];
    for rec in bytes.chunks_exact(rl) {
        let label = rec[label_off] as i64;
        if label as usize >= kind.num_classes() {
            return Err(Error::format("cifar", format!("label {label} out of range")));
        }
        let px = &rec[rl - IMAGE_BYTES..];
        for c in 0..3 {
            for i in 0..1024 {
                hwc[i * 3 + c] = px[c * 1024 + i];
            }
        }
        images.push(&hwc);
        labels.push(label);
    }
    Ok(())
}

fn split_dir(root: &Path, kind: CifarKind) -> PathBuf {
    root.join(kind.dir())
}

/// Load a split from `root`, downloading the archive first if allowed and
/// the files are missing.
pub fn load_cifar(root: &Path, kind: CifarKind, split: Split, download: bool) -> Result<CifarSplit> {
    let dir = split_dir(root, kind);
    let files = kind.files(split);
    if files.iter().any(|(f, _)| !dir.join(f).exists()) {
        if !download {
            return Err(Error::MissingPrerequisite(format!(
                "{} not found under {}; pass --download or place the binary release there",
                kind.name(),
                root.display()
            )));
        }
        download_cifar(root, kind)?;
    }
    let mut images = PackedImages::with_capacity(32, 32, 3, files.iter().map(|f| f.1).sum());
    let mut labels = Vec::new();
    for (f, count) in files {
        let path = dir.join(f);
        let bytes = fs::read(&path).map_err(|e| Error::Load { path: path.clone(), reason: e.to_string() })?;
        if bytes.len() != count * kind.record_len() {
            return Err(Error::Checksum {
                path,
                expected: format!("{} bytes", count * kind.record_len()),
                actual: format!("{} bytes", bytes.len()),
            });
        }
        decode_records(kind, &bytes, &mut images, &mut labels)?;
    }
    Ok(CifarSplit { images, labels, kind })
}

/// MD5 of a file, hex encoded.
pub fn md5_file(path: &Path) -> Result<String> {
    let mut r = BufReader::new(File::open(path)?);
    let mut h = Md5::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Fetch and unpack the official archive into `root`, verifying its MD5.
pub fn download_cifar(root: &Path, kind: CifarKind) -> Result<()> {
    let (url, md5) = kind.archive();
    fs::create_dir_all(root)?;
    let archive = root.join(url.rsplit('/').next().unwrap_or("cifar.tar.gz"));
    if !archive.exists() || md5_file(&archive)? != md5 {
        tracing::info!(url, "downloading");
        let partial = archive.with_extension("partial");
        let mut resp = ureq::get(url)
            .call()
            .map_err(|e| Error::Load { path: archive.clone(), reason: format!("download failed: {e}") })?;
        let mut reader = resp.body_mut().as_reader();
        let mut out = File::create(&partial)?;
        std::io::copy(&mut reader, &mut out)?;
        out.flush()?;
        fs::rename(&partial, &archive)?;
    }
    let actual = md5_file(&archive)?;
    if actual != md5 {
        return Err(Error::Checksum { path: archive, expected: md5.into(), actual });
    }
    let gz = flate2::read::GzDecoder::new(File::open(&archive)?);
    tar::Archive::new(gz).unpack(root)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_planar_to_interleaved() {
        let mut rec = vec![7u8];
        for c in 0..3u8 {
            rec.extend(std::iter::repeat_n(c * 10, 1024));
        }
        let mut images = PackedImages::new(32, 32, 3);
        let mut labels = Vec::new();
        decode_records(CifarKind::Cifar10, &rec, &mut images, &mut labels).unwrap();
        assert_eq!(labels, vec![7]);
        assert_eq!(&images.record(0)[..6], &[0, 10, 20, 0, 10, 20]);
    }

    #[test]
    fn cifar100_uses_fine_label() {
        let mut rec = vec![3u8, 42];
        rec.extend(std::iter::repeat_n(0u8, IMAGE_BYTES));
        let mut images = PackedImages::new(32, 32, 3);
        let mut labels = Vec::new();
        decode_records(CifarKind::Cifar100, &rec, &mut images, &mut labels).unwrap();
        assert_eq!(labels, vec![42]);
    }

    #[test]
    fn bad_sizes_and_missing_files() {
        let mut images = PackedImages::new(32, 32, 3);
        let mut labels = Vec::new();
        assert!(decode_records(CifarKind::Cifar10, &[0u8; 100], &mut images, &mut labels).is_err());
        let dir = tempfile::tempdir().unwrap();
        let err = load_cifar(dir.path(), CifarKind::Cifar10, Split::Test, false).unwrap_err();
        assert!(err.is_user_error());
        let d = dir.path().join("cifar-10-batches-bin");
        fs::create_dir_all(&d).unwrap();
        fs::write(d.join("test_batch.bin"), vec![0u8; 3073 * 5]).unwrap();
        assert!(matches!(
            load_cifar(dir.path(), CifarKind::Cifar10, Split::Test, false),
            Err(Error::Checksum { .. })
        ));
    }
}
