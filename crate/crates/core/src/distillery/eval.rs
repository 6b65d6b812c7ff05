//! Top-1 evaluation on labeled data.

use serde::{Deserialize, Serialize};
use tch::Tensor;

use crate::data::LabeledData;
use crate::error::{Error, Result};
use crate::modelzoo::Classifier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub top1: f64,
    pub count: usize,
    /// Accuracy per true class (NaN-free: classes without examples get 0).
    pub per_class_top1: Vec<f64>,
    pub per_class_count: Vec<usize>,
}

/// Inference-mode accuracy of `model` on `data`.
pub fn evaluate(model: &dyn Classifier, data: &LabeledData, batch_size: usize) -> Result<EvalResult> {
    if model.num_classes() != data.num_classes {
        return Err(Error::precondition(format!(
            "model predicts {} classes, data has {}",
            model.num_classes(),
            data.num_classes
        )));
    }
    let c = data.num_classes;
    let mut correct = vec![0usize; c];
    let mut total = vec![0usize; c];
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let x = data.source.batch(chunk, None)?;
        let pred = tch::no_grad(|| model.logits(&x, false)).argmax(-1, false);
        let pred = Vec::<i64>::try_from(&pred)?;
        for (&i, p) in chunk.iter().zip(pred) {
            let y = data.labels[i] as usize;
            total[y] += 1;
            if p as usize == y {
                correct[y] += 1;
            }
        }
    }
    let n: usize = total.iter().sum();
    let hit: usize = correct.iter().sum();
    Ok(EvalResult {
        top1: if n == 0 { 0.0 } else { hit as f64 / n as f64 },
        count: n,
        per_class_top1: correct.iter().zip(&total).map(|(&a, &b)| if b == 0 { 0.0 } else { a as f64 / b as f64 }).collect(),
        per_class_count: total,
    })
}

/// Argmax class of each row.
pub fn argmax_rows(logits: &Tensor) -> Result<Vec<i64>> {
    Ok(Vec::<i64>::try_from(&logits.argmax(-1, false))?)
}
