//! Labeled audio from a class-per-directory tree of WAV files, such as the
//! Speech Commands release (`<root>/<word>/<file>.wav` with
//! `validation_list.txt` / `testing_list.txt` split files).

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::audioforge::{dsp, read_wav_mono, PackedClips, TARGET_RATE};
use crate::error::{Error, Result};

use super::cifar::Split;

#[derive(Debug, Clone)]
pub struct AudioSplit {
    pub clips: PackedClips,
    pub labels: Vec<i64>,
    pub class_names: Vec<String>,
}

fn read_list(path: &Path) -> Result<HashSet<String>> {
    if !path.exists() {
        return Ok(HashSet::new());
    }
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.replace('\\', "/"))
        .collect())
}

/// Load one split. Every clip is resampled to 16 kHz and zero-padded or
/// truncated to `seconds`. Directories starting with `_` are skipped.
pub fn load_audio_folder(root: &Path, split: Split, seconds: f64) -> Result<AudioSplit> {
    if !root.is_dir() {
        return Err(Error::MissingPrerequisite(format!("audio dataset directory {} not found", root.display())));
    }
    let val = read_list(&root.join("validation_list.txt"))?;
    let test = read_list(&root.join("testing_list.txt"))?;
    let mut class_names: Vec<String> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| !n.starts_with('_'))
        .collect();
    class_names.sort();
    if class_names.len() < 2 {
        return Err(Error::format("audio dataset", format!("{} has fewer than 2 class directories", root.display())));
    }
    let len = (seconds * TARGET_RATE as f64).round() as usize;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (label, class) in class_names.iter().enumerate() {
        let mut files: Vec<_> = fs::read_dir(root.join(class))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        for path in files {
            let rel = format!("{class}/{}", path.file_name().unwrap_or_default().to_string_lossy());
            let in_split = match split {
                Split::Test => test.contains(&rel),
                Split::Train => !test.contains(&rel) && !val.contains(&rel),
            };
            if !in_split {
                continue;
            }
            let (rate, samples) = read_wav_mono(&path)?;
            let samples = if rate == TARGET_RATE { samples } else { dsp::resample(&samples, rate, TARGET_RATE) };
            data.extend(dsp::fit_length(samples, len));
            labels.push(label as i64);
        }
    }
    Ok(AudioSplit {
        clips: PackedClips { count: labels.len(), samples_per_clip: len, sample_rate: TARGET_RATE, data },
        labels,
        class_names,
    })
}
