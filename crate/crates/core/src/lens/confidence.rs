//! Histograms of temperature-softened top-1 confidence.

use tch::{Kind, Tensor};

use super::hist::Histogram;
use crate::data::InputSource;
use crate::error::Result;
use crate::modelzoo::Classifier;

/// Max entry of `soften(row, tau)` for every row of `logits`.
pub fn max_confidence(logits: &Tensor, tau: f64) -> Result<Vec<f64>> {
    let p = (logits.to_kind(Kind::Double) / tau).softmax(-1, Kind::Double);
    let (m, _) = p.max_dim(-1, false);
    Ok(Vec::<f64>::try_from(&m)?)
}

/// Confidence of `model` on every input of `source` (inference mode, no
/// augmentation), histogrammed over `[0, 1]`.
pub fn confidence_histogram(
    model: &dyn Classifier,
    source: &dyn InputSource,
    tau: f64,
    bins: usize,
    batch_size: usize,
) -> Result<(Histogram, Vec<f64>)> {
    let mut hist = Histogram::new(0.0, 1.0, bins)?;
    let idx: Vec<usize> = (0..source.len()).collect();
    let mut all = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        let x = source.batch(chunk, None)?;
        let logits = tch::no_grad(|| model.logits(&x, false));
        for c in max_confidence(&logits, tau)? {
            hist.add(c);
            all.push(c);
        }
    }
    Ok((hist, all))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_land_in_tenth_bin() {
        let logits = Tensor::zeros([7, 10], (tch::Kind::Float, tch::Device::Cpu));
        let c = max_confidence(&logits, 8.0).unwrap();
        assert!(c.iter().all(|v| (v - 0.1).abs() < 1e-12));
        let h = Histogram::from_values(c, 0.0, 1.0, 20).unwrap();
        assert_eq!(h.counts[2], 7);
        assert_eq!(h.total(), 7);
    }
}
