//! Fixed-range histograms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Values outside `[edges[0], edges[bins]]` (clamped into the end bins
    /// are not counted here).
    pub out_of_range: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::config(format!("histogram needs bins >= 1 and lo < hi, got {bins} over [{lo}, {hi}]")));
        }
        let edges = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
        Ok(Self { edges, counts: vec![0; bins], out_of_range: 0 })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Bin of `v`; the upper edge belongs to the last bin.
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        let lo = self.edges[0];
        let hi = *self.edges.last().unwrap();
        if !(v >= lo && v <= hi) {
            return None;
        }
        let b = ((v - lo) / (hi - lo) * self.bins() as f64).floor() as usize;
        Some(b.min(self.bins() - 1))
    }

    pub fn add(&mut self, v: f64) {
        match self.bin_of(v) {
            Some(b) => self.counts[b] += 1,
            None => self.out_of_range += 1,
        }
    }

    pub fn from_values(values: impl IntoIterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Result<Self> {
        let mut h = Self::new(lo, hi, bins)?;
        for v in values {
            h.add(v);
        }
        Ok(h)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.out_of_range
    }

    /// Number of separated peaks after 3-tap smoothing. A peak counts if it
    /// reaches `min_frac` of the tallest bin and the valley separating it
    /// from the previous counted peak dips below `dip` times the lower of
    /// the two.
    pub fn mode_count(&self, min_frac: f64, dip: f64) -> usize {
        let c: Vec<f64> = self.counts.iter().map(|&v| v as f64).collect();
        let n = c.len();
        let s: Vec<f64> = (0..n)
            .map(|i| {
                let a = if i > 0 { c[i - 1] } else { c[i] };
                let b = if i + 1 < n { c[i + 1] } else { c[i] };
                (a + 2.0 * c[i] + b) / 4.0
            })
            .collect();
        let max = s.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return 0;
        }
        let mut modes = 0;
        let mut last_peak: Option<(usize, f64)> = None;
        for i in 0..n {
            let left = if i > 0 { s[i - 1] } else { f64::NEG_INFINITY };
            let right = if i + 1 < n { s[i + 1] } else { f64::NEG_INFINITY };
            if s[i] < max * min_frac || s[i] < left || s[i] < right {
                continue;
            }
            match last_peak {
                None => {
                    modes = 1;
                    last_peak = Some((i, s[i]));
                }
                Some((j, h)) => {
                    let valley = s[j..=i].iter().cloned().fold(f64::INFINITY, f64::min);
                    if valley < dip * h.min(s[i]) {
                        modes += 1;
                        last_peak = Some((i, s[i]));
                    } else if s[i] > h {
                        last_peak = Some((i, s[i]));
                    }
                }
            }
        }
        modes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_sum_and_edges_monotone() {
        let h = Histogram::from_values([0.0, 0.1, 0.55, 1.0, 1.5], 0.0, 1.0, 10).unwrap();
        assert_eq!(h.total(), 5);
        assert_eq!(h.out_of_range, 1);
        assert_eq!(h.counts[9], 1);
        assert_eq!(h.counts[5], 1);
        assert!(h.edges.windows(2).all(|w| w[0] < w[1]));
        assert!(Histogram::new(1.0, 0.0, 3).is_err());
    }

    #[test]
    fn mode_counting() {
        let gauss = |mu: f64| (0..20).map(move |i| (-(i as f64 - mu).powi(2) / 4.0).exp());
        let mut h = Histogram::new(0.0, 1.0, 20).unwrap();
        for (i, v) in gauss(10.0).enumerate() {
            h.counts[i] = (v * 1000.0) as u64;
        }
        assert_eq!(h.mode_count(0.1, 0.8), 1);
        for (i, v) in gauss(4.0).zip(gauss(15.0)).map(|(a, b)| a + b).enumerate() {
            h.counts[i] = (v * 1000.0) as u64;
        }
        assert_eq!(h.mode_count(0.1, 0.8), 2);
    }
}
