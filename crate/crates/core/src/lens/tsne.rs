//! Two-dimensional t-SNE: PCA to at most 50 dimensions, sparse k-nearest
//! neighbour affinities calibrated to a target perplexity, and gradient
//! descent with early exaggeration. Repulsion is exact for small inputs and
//! Barnes-Hut approximated (θ = 0.5) otherwise.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub pca_dims: usize,
    pub theta: f64,
    /// Inputs up to this size use exact repulsion.
    pub exact_below: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self { perplexity: 30.0, iterations: 1000, pca_dims: 50, theta: 0.5, exact_below: 2000 }
    }
}

const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;

/// Project rows onto the top `k` principal components.
pub fn pca(x: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let d = x[0].len();
    if d <= k {
        return x.to_vec();
    }
    let mut mean = vec![0.0; d];
    for r in x {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| x[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let basis = DMatrix::from_fn(d, k, |i, j| eig.eigenvectors[(i, order[j])]);
    let proj = centered * basis;
    (0..n).map(|i| (0..k).map(|j| proj[(i, j)]).collect()).collect()
}

fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Symmetric sparse affinities as `(i, j, p_ij)` triples with `i != j`.
fn affinities(x: &[Vec<f64>], perplexity: f64) -> Vec<Vec<(usize, f64)>> {
    let n = x.len();
    let k = ((3.0 * perplexity).ceil() as usize).min(n - 1);
    let target = perplexity.ln();
    let cond: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(usize, f64)> = (0..n).filter(|&j| j != i).map(|j| (j, sqdist(&x[i], &x[j]))).collect();
            d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d.truncate(k);
            let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
            let dmin = d.first().map_or(0.0, |v| v.1);
            let mut w = vec![0.0; d.len()];
            for _ in 0..200 {
                let mut sum = 0.0;
                let mut hsum = 0.0;
                for (wi, &(_, dj)) in w.iter_mut().zip(&d) {
                    *wi = (-(dj - dmin) * beta).exp();
                    sum += *wi;
                    hsum += *wi * (dj - dmin);
                }
                let entropy = sum.ln() + beta * hsum / sum;
                if (entropy - target).abs() < 1e-5 {
                    break;
                }
                if entropy > target {
                    lo = beta;
                    beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
            }
            let sum: f64 = w.iter().sum();
            d.iter().zip(&w).map(|(&(j, _), &wi)| (j, wi / sum)).collect()
        })
        .collect();
    let mut sym: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
    for (i, row) in cond.iter().enumerate() {
        for &(j, p) in row {
            *sym[i].entry(j).or_default() += p / (2.0 * n as f64);
            *sym[j].entry(i).or_default() += p / (2.0 * n as f64);
        }
    }
    sym.into_iter().map(|m| m.into_iter().collect()).collect()
}

#[derive(Debug, Clone)]
struct Node {
    cx: f64,
    cy: f64,
    half: f64,
    mass: f64,
    comx: f64,
    comy: f64,
    point: Option<usize>,
    children: Option<[usize; 4]>,
}

struct QuadTree {
    nodes: Vec<Node>,
}

impl QuadTree {
    fn build(y: &[[f64; 2]]) -> Self {
        let (mut minx, mut maxx, mut miny, mut maxy) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in y {
            minx = minx.min(p[0]);
            maxx = maxx.max(p[0]);
            miny = miny.min(p[1]);
            maxy = maxy.max(p[1]);
        }
        let half = ((maxx - minx).max(maxy - miny) / 2.0).max(1e-9) * 1.0001;
        let root = Node {
            cx: (minx + maxx) / 2.0,
            cy: (miny + maxy) / 2.0,
            half,
            mass: 0.0,
            comx: 0.0,
            comy: 0.0,
            point: None,
            children: None,
        };
        let mut t = Self { nodes: vec![root] };
        for (i, p) in y.iter().enumerate() {
            t.insert(0, i, p, y, 0);
        }
        t
    }

    fn quadrant(n: &Node, p: &[f64; 2]) -> usize {
        (usize::from(p[0] >= n.cx)) | (usize::from(p[1] >= n.cy) << 1)
    }

    fn insert(&mut self, at: usize, i: usize, p: &[f64; 2], y: &[[f64; 2]], depth: usize) {
        {
            let n = &mut self.nodes[at];
            let m = n.mass;
            n.comx = (n.comx * m + p[0]) / (m + 1.0);
            n.comy = (n.comy * m + p[1]) / (m + 1.0);
            n.mass = m + 1.0;
        }
        if self.nodes[at].mass == 1.0 {
            self.nodes[at].point = Some(i);
            return;
        }
        // Coincident points stop subdividing; they stay aggregated here.
        if depth > 48 {
            return;
        }
        if self.nodes[at].children.is_none() {
            let n = self.nodes[at].clone();
            let h = n.half / 2.0;
            let mut ids = [0; 4];
            for (q, id) in ids.iter_mut().enumerate() {
                let cx = if q & 1 == 1 { n.cx + h } else { n.cx - h };
                let cy = if q & 2 == 2 { n.cy + h } else { n.cy - h };
                *id = self.nodes.len();
                self.nodes.push(Node { cx, cy, half: h, mass: 0.0, comx: 0.0, comy: 0.0, point: None, children: None });
            }
            self.nodes[at].children = Some(ids);
            if let Some(old) = self.nodes[at].point.take() {
                let q = Self::quadrant(&self.nodes[at], &y[old]);
                self.insert(ids[q], old, &y[old], y, depth + 1);
            }
        }
        let ids = self.nodes[at].children.unwrap();
        let q = Self::quadrant(&self.nodes[at], p);
        self.insert(ids[q], i, p, y, depth + 1);
    }

    /// Accumulate (Σ q², Σ q² (y_i - com) , Σ q) contributions for point `i`.
    fn repulse(&self, at: usize, i: usize, p: &[f64; 2], theta: f64, f: &mut [f64; 2], zq: &mut f64) {
        let n = &self.nodes[at];
        if n.mass == 0.0 || (n.point == Some(i) && n.children.is_none()) {
            return;
        }
        let dx = p[0] - n.comx;
        let dy = p[1] - n.comy;
        let d2 = dx * dx + dy * dy;
        let summarize = n.children.is_none() || (2.0 * n.half) / d2.sqrt() < theta;
        if summarize {
            let mut mass = n.mass;
            if n.children.is_none() && n.point.is_none() {
                // Aggregated coincident points may include `i` itself.
                if d2 == 0.0 {
                    mass -= 1.0;
                }
            }
            let q = 1.0 / (1.0 + d2);
            *zq += mass * q;
            f[0] += mass * q * q * dx;
            f[1] += mass * q * q * dy;
        } else if let Some(ch) = n.children {
            for c in ch {
                self.repulse(c, i, p, theta, f, zq);
            }
        }
    }
}

/// Embed rows of `x` (n x d) into 2-D.
pub fn embed_2d(x: &[Vec<f64>], seed: u64, cfg: &TsneConfig) -> Result<Vec<[f64; 2]>> {
    let n = x.len();
    if n < 5 {
        return Err(Error::precondition(format!("t-SNE needs at least 5 points, got {n}")));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::precondition("t-SNE input rows must be finite and of equal, nonzero length"));
    }
    let perp = cfg.perplexity.min((n - 1) as f64 / 3.0).max(1.0);
    let xr = pca(x, cfg.pca_dims);
    let p = affinities(&xr, perp);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut vel = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let lr = (n as f64 / EXAGGERATION).max(50.0);
    let exact = n <= cfg.exact_below;

    for it in 0..cfg.iterations {
        let exag = if it < EXAGGERATION_ITERS { EXAGGERATION } else { 1.0 };
        let momentum = if it < EXAGGERATION_ITERS { 0.5 } else { 0.8 };
        let (rep, z): (Vec<[f64; 2]>, f64) = if exact {
            let rows: Vec<([f64; 2], f64)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut f = [0.0; 2];
                    let mut zq = 0.0;
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        let dx = y[i][0] - y[j][0];
                        let dy = y[i][1] - y[j][1];
                        let q = 1.0 / (1.0 + dx * dx + dy * dy);
                        zq += q;
                        f[0] += q * q * dx;
                        f[1] += q * q * dy;
                    }
                    (f, zq)
                })
                .collect();
            let z = rows.iter().map(|r| r.1).sum();
            (rows.into_iter().map(|r| r.0).collect(), z)
        } else {
            let tree = QuadTree::build(&y);
            let rows: Vec<([f64; 2], f64)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut f = [0.0; 2];
                    let mut zq = 0.0;
                    tree.repulse(0, i, &y[i], cfg.theta, &mut f, &mut zq);
                    (f, zq)
                })
                .collect();
            let z = rows.iter().map(|r| r.1).sum();
            (rows.into_iter().map(|r| r.0).collect(), z)
        };
        let z = z.max(f64::MIN_POSITIVE);
        let grads: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut a = [0.0; 2];
                for &(j, pij) in &p[i] {
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    let q = 1.0 / (1.0 + dx * dx + dy * dy);
                    a[0] += exag * pij * q * dx;
                    a[1] += exag * pij * q * dy;
                }
                [4.0 * (a[0] - rep[i][0] / z), 4.0 * (a[1] - rep[i][1] / z)]
            })
            .collect();
        for i in 0..n {
            for k in 0..2 {
                let g = grads[i][k];
                gains[i][k] = if (g > 0.0) != (vel[i][k] > 0.0) { gains[i][k] + 0.2 } else { (gains[i][k] * 0.8).max(0.01) };
                vel[i][k] = momentum * vel[i][k] - lr * gains[i][k] * g;
                y[i][k] += vel[i][k];
            }
        }
        let (mx, my) = y.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0] / n as f64, b + p[1] / n as f64));
        for p in y.iter_mut() {
            p[0] -= mx;
            p[1] -= my;
        }
    }
    if y.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Diverged("t-SNE produced non-finite coordinates".into()));
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clusters(n_per: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut x = Vec::new();
        let mut lab = Vec::new();
        for c in 0..3 {
            for _ in 0..n_per {
                x.push((0..10).map(|k| if k == c { 10.0 } else { 0.0 } + noise.sample(&mut rng)).collect());
                lab.push(c);
            }
        }
        (x, lab)
    }

    fn separation(y: &[[f64; 2]], lab: &[usize]) -> bool {
        // every point's nearest neighbour has its own label
        (0..y.len()).all(|i| {
            let j = (0..y.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    let da = (y[i][0] - y[a][0]).powi(2) + (y[i][1] - y[a][1]).powi(2);
                    let db = (y[i][0] - y[b][0]).powi(2) + (y[i][1] - y[b][1]).powi(2);
                    da.total_cmp(&db)
                })
                .unwrap();
            lab[i] == lab[j]
        })
    }

    #[test]
    fn separates_clusters_and_is_reproducible() {
        let (x, lab) = clusters(30);
        let cfg = TsneConfig { iterations: 400, ..Default::default() };
        let a = embed_2d(&x, 1, &cfg).unwrap();
        let b = embed_2d(&x, 1, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 90);
        assert!(separation(&a, &lab));
        let bh = embed_2d(&x, 1, &TsneConfig { exact_below: 0, ..cfg }).unwrap();
        assert!(separation(&bh, &lab));
        assert!(embed_2d(&x[..4], 1, &TsneConfig::default()).is_err());
    }

    #[test]
    fn pca_keeps_dominant_direction() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 0.01 * (i % 3) as f64, 0.0]).collect();
        let p = pca(&x, 1);
        let spread = p.iter().map(|r| r[0]).fold(f64::NEG_INFINITY, f64::max) - p.iter().map(|r| r[0]).fold(f64::INFINITY, f64::min);
        assert!((spread - 19.0).abs() < 0.05);
    }
}
