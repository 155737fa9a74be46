//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((m, d), |_| gauss(rng))
}

pub fn toy_fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}

// Geometry.

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

pub fn brute_cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let c = dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
    (1.0 - c).clamp(0.0, 2.0)
}

pub fn brute_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for k in 0..d {
            mean[k] += r[k];
        }
    }
    mean.iter().map(|v| v / rows.len() as f64).collect()
}

pub fn brute_mcd(m: &Array2<f64>) -> f64 {
    let r = rows(m);
    let mut total = 0.0;
    let mut pairs = 0;
    for i in 0..r.len() {
        for j in (i + 1)..r.len() {
            total += brute_cosine_distance(&r[i], &r[j]);
            pairs += 1;
        }
    }
    total / pairs as f64
}

pub fn brute_ci(m: &Array2<f64>) -> f64 {
    let r = rows(m);
    let mean = brute_mean(&r);
    let unit: Vec<Vec<f64>> = r
        .iter()
        .map(|row| {
            let c: Vec<f64> = row.iter().zip(&mean).map(|(a, b)| a - b).collect();
            let n = dot(&c, &c).sqrt();
            c.iter().map(|v| v / n).collect()
        })
        .collect();
    let mut total = 0.0;
    let mut pairs = 0;
    for i in 0..unit.len() {
        for j in (i + 1)..unit.len() {
            total += 1.0 - dot(&unit[i], &unit[j]);
            pairs += 1;
        }
    }
    total / pairs as f64
}

pub fn brute_iss(m: &Array2<f64>) -> f64 {
    let r = rows(m);
    let mean = brute_mean(&r);
    let mut total = 0.0;
    for row in &r {
        total += dot(row, &mean) / (dot(row, row).sqrt() * dot(&mean, &mean).sqrt());
    }
    total / r.len() as f64
}

pub fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| gauss(rng));
    let q = a.qr().q();
    Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)])
}

// Attention.

/// Row-stochastic `n × n` matrix with positive entries.
pub fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let mut a = Array2::from_shape_fn((n, n), |_| rng.gen_range(0.01..1.0f64));
    for mut row in a.outer_iter_mut() {
        let s: f64 = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    a
}

pub fn brute_attention(a: &Array2<f64>, target: (usize, usize), cue: (usize, usize)) -> f64 {
    let mut sum_rows = 0.0;
    for i in target.0..target.1 {
        let mut mass = 0.0;
        for j in cue.0..cue.1 {
            mass += a[[i, j]];
        }
        sum_rows += mass;
    }
    sum_rows / (target.1 - target.0) as f64
}

pub fn prefix_max(v: &[f64]) -> Vec<f64> {
    (0..v.len()).map(|i| v[..=i].iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
}

// Statistics.

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Dense problem: `x` is `n × p` with an intercept column, `groups[k][i]` the
/// level of row `i` in factor `k`.
pub struct DenseProblem {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub groups: Vec<Vec<usize>>,
}

impl DenseProblem {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn incidence(&self, k: usize) -> DMatrix<f64> {
        let levels = self.groups[k].iter().max().map_or(0, |m| m + 1);
        let mut z = DMatrix::zeros(self.n(), levels);
        for (i, &g) in self.groups[k].iter().enumerate() {
            z[(i, g)] = 1.0;
        }
        z
    }

    /// ML log-likelihood with β and σ² profiled out, from the full
    /// covariance `V = σ²(I + Σ γ_k Z_k Z_kᵀ)`.
    pub fn profiled_loglik(&self, gamma: &[f64]) -> f64 {
        let n = self.n();
        let mut v0 = DMatrix::<f64>::identity(n, n);
        for (k, &g) in gamma.iter().enumerate() {
            let z = self.incidence(k);
            v0 += (&z * z.transpose()) * g;
        }
        let chol = v0.clone().cholesky().expect("V positive definite");
        let vinv_x = chol.solve(&self.x);
        let vinv_y = chol.solve(&self.y);
        let xtvx = self.x.transpose() * &vinv_x;
        let xtvy = self.x.transpose() * &vinv_y;
        let beta = xtvx.lu().solve(&xtvy).expect("X full rank");
        let r = &self.y - &self.x * beta;
        let vinv_r = chol.solve(&r);
        let sigma2 = r.dot(&vinv_r) / n as f64;
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        -0.5 * (n as f64 * (2.0 * std::f64::consts::PI * sigma2).ln() + logdet + n as f64)
    }

    /// Compass search over `log γ` from several starts.
    pub fn maximize(&self) -> (f64, Vec<f64>) {
        let k = self.groups.len();
        let f = |t: &[f64]| {
            let g: Vec<f64> = t.iter().map(|v| v.clamp(-23.0, 18.0).exp()).collect();
            self.profiled_loglik(&g)
        };
        let mut best = (f64::NEG_INFINITY, vec![0.0; k]);
        for start in [-3.0, 0.0, 2.0] {
            let mut t = vec![start; k];
            let mut ft = f(&t);
            let mut step = 2.0;
            while step > 1e-7 {
                let mut improved = false;
                for i in 0..k {
                    for dir in [1.0, -1.0] {
                        let mut c = t.clone();
                        c[i] = (c[i] + dir * step).clamp(-23.0, 18.0);
                        let fc = f(&c);
                        if fc > ft + 1e-13 {
                            t = c;
                            ft = fc;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step /= 2.0;
                }
            }
            if ft > best.0 {
                best = (ft, t.iter().map(|v| v.exp()).collect());
            }
        }
        best
    }
}

/// One-way layout: grid over `log γ`, refined by successively finer grids
/// around the best point.
pub fn one_way_grid(y: &[f64], groups: &[usize]) -> (f64, f64) {
    let p = DenseProblem {
        y: DVector::from_column_slice(y),
        x: DMatrix::from_element(y.len(), 1, 1.0),
        groups: vec![groups.to_vec()],
    };
    let (mut lo, mut hi) = (-12.0f64, 8.0f64);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for _ in 0..6 {
        let steps = 400;
        for s in 0..=steps {
            let t = lo + (hi - lo) * s as f64 / steps as f64;
            let ll = p.profiled_loglik(&[t.exp()]);
            if ll > best.0 {
                best = (ll, t);
            }
        }
        let width = (hi - lo) / steps as f64;
        lo = best.1 - 2.0 * width;
        hi = best.1 + 2.0 * width;
    }
    (best.1.exp(), best.0)
}
