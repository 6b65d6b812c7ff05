//! Reduced-fidelity teacher supervision: full probabilities, the top-k
//! entries only, or the argmax alone.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tch::Tensor;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SignalMode {
    Full,
    TopK(usize),
    Hard,
}

impl FromStr for SignalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        match s.as_str() {
            "full" => return Ok(Self::Full),
            "hard" => return Ok(Self::Hard),
            _ => {}
        }
        let k = s.strip_prefix("top").map(|r| r.trim_start_matches(['-', '_']).trim_start_matches('k').trim_start_matches([':', '=']));
        match k.and_then(|k| k.parse::<usize>().ok()) {
            Some(k) if k >= 1 => Ok(Self::TopK(k)),
            _ => Err(Error::config(format!("unknown signal mode `{s}` (expected full, top<k> or hard)"))),
        }
    }
}

impl TryFrom<String> for SignalMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SignalMode> for String {
    fn from(m: SignalMode) -> String {
        m.to_string()
    }
}

impl fmt::Display for SignalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Full => f.write_str("full"),
            Self::TopK(k) => write!(f, "top{k}"),
            Self::Hard => f.write_str("hard"),
        }
    }
}

/// Teacher probabilities after degradation.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSignal {
    pub mode: SignalMode,
    pub probs: Vec<f64>,
}

/// Indices of the `k` largest entries, ties broken toward the lower index.
pub fn top_k_indices(p: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Degrade with renormalized top-k.
pub fn degrade_signal(probs: &[f64], mode: SignalMode) -> Result<TeacherSignal> {
    degrade_signal_with(probs, mode, true)
}

/// Degrade; with `renorm = false` the retained top-k masses are passed
/// through unnormalized.
pub fn degrade_signal_with(probs: &[f64], mode: SignalMode, renorm: bool) -> Result<TeacherSignal> {
    let c = probs.len();
    let out = match mode {
        SignalMode::Full => probs.to_vec(),
        SignalMode::TopK(k) => {
            if k == 0 || k > c {
                return Err(Error::config(format!("top-{k} needs 1 <= k <= {c} classes")));
            }
            let keep = top_k_indices(probs, k);
            let mass: f64 = keep.iter().map(|&i| probs[i]).sum();
            let mut out = vec![0.0; c];
            for i in keep {
                out[i] = if renorm && mass > 0.0 { probs[i] / mass } else { probs[i] };
            }
            out
        }
        SignalMode::Hard => {
            let mut out = vec![0.0; c];
            out[top_k_indices(probs, 1)[0]] = 1.0;
            out
        }
    };
    Ok(TeacherSignal { mode, probs: out })
}

/// Row-wise degradation of an `(N, C)` probability tensor.
pub fn degrade_batch(probs: &Tensor, mode: SignalMode, renorm: bool) -> Result<Tensor> {
    if mode == SignalMode::Full {
        return Ok(probs.shallow_clone());
    }
    let size = probs.size();
    let c = *size.last().unwrap_or(&0) as usize;
    let flat = crate::modelzoo::to_vec_f32(probs);
    let mut out = Vec::with_capacity(flat.len());
    for row in flat.chunks(c.max(1)) {
        let row: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        out.extend(degrade_signal_with(&row, mode, renorm)?.probs.into_iter().map(|v| v as f32));
    }
    Ok(Tensor::from_slice(&out).view(size.as_slice()))
}
