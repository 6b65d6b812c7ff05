//! Per-class learning curves against how often the teacher predicts each
//! class on the training data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::InputSource;
use crate::distillery::eval::argmax_rows;
use crate::error::{Error, Result};
use crate::modelzoo::Classifier;
use crate::run::EpochRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassReport {
    pub class_names: Vec<String>,
    pub epochs: Vec<u64>,
    /// `curves[c][e]` is class `c` accuracy after `epochs[e]`.
    pub curves: Vec<Vec<f64>>,
    /// Teacher top-1 count per class over one pass of the training data.
    pub frequency: Vec<u64>,
}

impl PerClassReport {
    pub fn final_accuracy(&self) -> Vec<f64> {
        self.curves.iter().map(|c| c.last().copied().unwrap_or(0.0)).collect()
    }

    /// `(frequency, final accuracy)` pairs, one per class.
    pub fn scatter(&self) -> Vec<(f64, f64)> {
        self.frequency.iter().zip(self.final_accuracy()).map(|(&f, a)| (f as f64, a)).collect()
    }
}

/// Count of each class as the teacher's argmax over one pass of `train`.
/// With a seed, inputs are drawn with training-time augmentation.
pub fn teacher_frequency(
    teacher: &dyn Classifier,
    train: &dyn InputSource,
    seed: Option<u64>,
    batch_size: usize,
) -> Result<Vec<u64>> {
    let mut freq = vec![0u64; teacher.num_classes()];
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let idx: Vec<usize> = (0..train.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let x = train.batch(chunk, rng.as_mut())?;
        let logits = tch::no_grad(|| teacher.logits(&x, false));
        for c in argmax_rows(&logits)? {
            freq[c as usize] += 1;
        }
    }
    Ok(freq)
}

pub fn per_class_report(
    records: &[EpochRecord],
    frequency: Vec<u64>,
    class_names: Vec<String>,
) -> Result<PerClassReport> {
    let c = frequency.len();
    if records.is_empty() || records.iter().any(|r| r.per_class_top1.is_none()) {
        return Err(Error::MissingPrerequisite(
            "metrics log has no per-class accuracy; re-run distill with --per-class-eval".into(),
        ));
    }
    let mut curves = vec![Vec::with_capacity(records.len()); c];
    for r in records {
        let pc = r.per_class_top1.as_ref().unwrap();
        if pc.len() != c {
            return Err(Error::precondition(format!(
                "epoch {} logs {} classes, teacher predicts {c}",
                r.epoch,
                pc.len()
            )));
        }
        for (curve, &v) in curves.iter_mut().zip(pc) {
            curve.push(v);
        }
    }
    let class_names = if class_names.len() == c { class_names } else { (0..c).map(|i| i.to_string()).collect() };
    Ok(PerClassReport { class_names, epochs: records.iter().map(|r| r.epoch).collect(), curves, frequency })
}
