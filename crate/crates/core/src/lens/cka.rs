//! Linear centered kernel alignment between activation matrices.

use ndarray::{Array2, Axis};
use tch::Tensor;

use crate::error::{Error, Result};
use crate::modelzoo::{to_vec_f32, Model};

/// `n x d` activations of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub layer: String,
    pub data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(layer: impl Into<String>, data: Array2<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::precondition("feature matrix has non-finite entries"));
        }
        Ok(Self { layer: layer.into(), data })
    }

    /// Flatten a `(N, ...)` activation tensor, averaging spatial dims of
    /// 4-D maps so each row is a channel vector.
    pub fn from_activation(layer: impl Into<String>, t: &Tensor) -> Result<Self> {
        let t = if t.dim() == 4 { t.mean_dim(&[2i64, 3][..], false, tch::Kind::Float) } else { t.flatten(1, -1) };
        let s = t.size();
        let (n, d) = (s[0] as usize, s[1] as usize);
        let v: Vec<f64> = to_vec_f32(&t).into_iter().map(f64::from).collect();
        let data = Array2::from_shape_vec((n, d), v).map_err(|e| Error::precondition(e.to_string()))?;
        Self::new(layer, data)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }
}

fn center(x: &Array2<f64>) -> Array2<f64> {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    x - &mean
}

fn frob2(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// `‖YᵀX‖²_F / (‖XᵀX‖_F ‖YᵀY‖_F)` on column-centred inputs; 0 when a
/// denominator term vanishes.
pub fn linear_cka(x: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::precondition(format!("row counts differ: {} vs {}", x.nrows(), y.nrows())));
    }
    if x.nrows() < 2 {
        return Err(Error::precondition("linear CKA needs at least 2 rows"));
    }
    let xc = center(x);
    let yc = center(y);
    let num = frob2(&yc.t().dot(&xc));
    let dx = frob2(&xc.t().dot(&xc)).sqrt();
    let dy = frob2(&yc.t().dot(&yc)).sqrt();
    if dx == 0.0 || dy == 0.0 {
        return Ok(0.0);
    }
    Ok(num / (dx * dy))
}

/// Tapped activations of `model` on `probe`, one matrix per tap.
pub fn layer_features(model: &Model, probe: &Tensor) -> Result<Vec<FeatureMatrix>> {
    let (_, taps) = model.forward_taps(probe);
    model.tap_names().into_iter().zip(taps.iter()).map(|(n, t)| FeatureMatrix::from_activation(n, t)).collect()
}

/// `taps_a x taps_b` matrix of linear CKA values.
pub fn cka_heatmap(a: &Model, b: &Model, probe: &Tensor) -> Result<Vec<Vec<f64>>> {
    let fa = layer_features(a, probe)?;
    let fb = layer_features(b, probe)?;
    cka_matrix(&fa, &fb)
}

pub fn cka_matrix(fa: &[FeatureMatrix], fb: &[FeatureMatrix]) -> Result<Vec<Vec<f64>>> {
    fa.iter().map(|x| fb.iter().map(|y| linear_cka(&x.data, &y.data)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_degenerate() {
        let x = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64 + i as f64 * 0.1);
        assert!((linear_cka(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let z = Array2::<f64>::zeros((6, 2));
        assert_eq!(linear_cka(&x, &z).unwrap(), 0.0);
        assert!(linear_cka(&x, &Array2::zeros((5, 3))).is_err());
    }
}
