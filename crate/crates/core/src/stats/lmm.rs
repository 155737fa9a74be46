//! Gaussian linear mixed models with crossed random intercepts, fitted by
//! profiled maximum likelihood.
//!
//! With variance ratios `γ_k = σ²_k / σ²`, the marginal covariance is
//! `σ² (I + Σ_k γ_k Z_k Z_kᵀ)`. Scaling each indicator block by `√γ_k` turns
//! the Henderson equations into the penalized least-squares system
//!
//! ```text
//! [ Z*ᵀZ* + I   Z*ᵀX ] [u]   [Z*ᵀy]
//! [ XᵀZ*        XᵀX  ] [β] = [Xᵀy ]
//! ```
//!
//! whose Cholesky factor yields the penalized residual sum of squares, the
//! log-determinant `log|I + Z*ᵀZ*|`, the GLS estimate of `β` and its
//! covariance, so `β` and `σ²` are profiled out in closed form. The block of
//! the factor with the most levels is diagonal and is eliminated
//! analytically before the dense factorization, keeping the dense system at
//! `p + (levels of the remaining factors) + 1`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::design::{build_design, Design, MixedModelSpec};
use super::linalg::{cholesky_in_place, inverse_gram_diagonal, solve_upper_transposed};
use super::optim::{minimize, NelderMeadOptions};
use super::table::Table;
use super::{Coefficient, StatsError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimation {
    #[default]
    Ml,
    Reml,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions<T> {
    pub method: Estimation,
    pub standardize: bool,
    /// Evaluate at these variance ratios instead of optimizing them.
    pub fixed_ratios: Option<Vec<T>>,
    pub max_iter: usize,
    /// Convergence tolerance on `log γ`, i.e. relative tolerance on `γ`.
    pub rel_tol: f64,
    pub ratio_floor: f64,
    pub ratio_ceiling: f64,
}

impl<T> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            method: Estimation::Ml,
            standardize: false,
            fixed_ratios: None,
            max_iter: 500,
            rel_tol: 1e-8,
            ratio_floor: 1e-10,
            ratio_ceiling: 1e8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponent<T> {
    pub group: String,
    pub levels: usize,
    pub variance: T,
    /// `σ²_k / σ²`.
    pub ratio: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmFit<T> {
    pub response: String,
    pub method: Estimation,
    /// Wald z statistics with normal-approximation p-values.
    pub fixed_effects: Vec<Coefficient<T>>,
    pub variance_components: Vec<VarianceComponent<T>>,
    pub residual_variance: T,
    /// Maximized ML log-likelihood (for REML fits: evaluated at the REML
    /// variance estimates).
    pub loglik_ml: T,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reml_criterion: Option<T>,
    pub aic: T,
    pub converged: bool,
    pub iterations: usize,
    pub n_obs: usize,
    pub n_params: usize,
    /// Order-independent hash of the response values, used to check that
    /// compared fits share an observation set.
    pub obs_fingerprint: u64,
}

impl<T: Scalar> LmmFit<T> {
    pub fn coefficient(&self, term: &str) -> Option<&Coefficient<T>> {
        self.fixed_effects.iter().find(|c| c.term == term)
    }

    pub fn variance(&self, group: &str) -> Option<T> {
        self.variance_components.iter().find(|v| v.group == group).map(|v| v.variance)
    }

    pub fn require_converged(self) -> Result<Self, StatsError> {
        if self.converged {
            Ok(self)
        } else {
            Err(StatsError::NonConvergence { iterations: self.iterations })
        }
    }
}

struct GroupSums<T> {
    count: T,
    idx: Vec<usize>,
    val: Vec<T>,
}

/// Cross-product structure of one design, reusable across variance ratios.
pub struct LmmProblem<T> {
    design: Design<T>,
    big: Option<usize>,
    /// Factor owning each of the first `q_rest` dense columns.
    col_factor: Vec<usize>,
    q_rest: usize,
    dim: usize,
    gram: Vec<T>,
    groups: Vec<GroupSums<T>>,
}

/// Factorization at one set of variance ratios.
pub struct Evaluation<T> {
    pub prss: T,
    pub logdet_z: T,
    pub logdet_x: T,
    factor: Vec<T>,
}

impl<T: Scalar> LmmProblem<T> {
    pub fn new(design: Design<T>) -> Self {
        let p = design.p();
        let big = (0..design.factors.len()).max_by_key(|&k| (design.factors[k].levels.len(), usize::MAX - k));
        let mut col_factor = Vec::new();
        let mut offsets = vec![usize::MAX; design.factors.len()];
        for (k, f) in design.factors.iter().enumerate() {
            if Some(k) == big {
                continue;
            }
            offsets[k] = col_factor.len();
            col_factor.extend(std::iter::repeat(k).take(f.levels.len()));
        }
        let q_rest = col_factor.len();
        let dim = q_rest + p + 1;

        let row_entries = |i: usize| {
            let mut e: Vec<(usize, T)> = Vec::with_capacity(design.factors.len() + p + 1);
            for (k, f) in design.factors.iter().enumerate() {
                if Some(k) != big {
                    e.push((offsets[k] + f.index[i], T::one()));
                }
            }
            e.extend((0..p).map(|j| (q_rest + j, design.x[i * p + j])));
            e.push((dim - 1, design.y[i]));
            e
        };

        let mut gram = vec![T::zero(); dim * dim];
        let mut group_maps: Vec<(usize, BTreeMap<usize, T>)> = match big {
            Some(k) => (0..design.factors[k].levels.len()).map(|_| (0, BTreeMap::new())).collect(),
            None => Vec::new(),
        };
        for i in 0..design.n {
            let e = row_entries(i);
            for &(a, va) in &e {
                for &(b, vb) in &e {
                    gram[a * dim + b] = gram[a * dim + b] + va * vb;
                }
            }
            if let Some(k) = big {
                let (count, map) = &mut group_maps[design.factors[k].index[i]];
                *count += 1;
                for &(a, va) in &e {
                    let slot = map.entry(a).or_insert_with(T::zero);
                    *slot = *slot + va;
                }
            }
        }
        let groups = group_maps
            .into_iter()
            .map(|(count, map)| GroupSums {
                count: T::from_usize_lossy(count),
                idx: map.keys().copied().collect(),
                val: map.values().copied().collect(),
            })
            .collect();
        Self { design, big, col_factor, q_rest, dim, gram, groups }
    }

    pub fn design(&self) -> &Design<T> {
        &self.design
    }

    pub fn num_factors(&self) -> usize {
        self.design.factors.len()
    }

    /// Factorizes the penalized system at variance ratios `gamma` (one per
    /// grouping factor, in specification order).
    pub fn evaluate(&self, gamma: &[T]) -> Result<Evaluation<T>, StatsError> {
        let dim = self.dim;
        let scale: Vec<T> = (0..dim)
            .map(|a| if a < self.q_rest { gamma[self.col_factor[a]].sqrt() } else { T::one() })
            .collect();
        let mut a = self.gram.clone();
        for r in 0..dim {
            for c in 0..dim {
                a[r * dim + c] = a[r * dim + c] * scale[r] * scale[c];
            }
            if r < self.q_rest {
                a[r * dim + r] = a[r * dim + r] + T::one();
            }
        }
        let mut logdet_z = T::zero();
        if let Some(k) = self.big {
            let g = gamma[k];
            for grp in &self.groups {
                let d = T::one() + g * grp.count;
                logdet_z = logdet_z + d.ln();
                let w = g / d;
                for (u, &iu) in grp.idx.iter().enumerate() {
                    let su = w * scale[iu] * grp.val[u];
                    for (v, &iv) in grp.idx.iter().enumerate() {
                        a[iu * dim + iv] = a[iu * dim + iv] - su * scale[iv] * grp.val[v];
                    }
                }
            }
        }
        cholesky_in_place(&mut a, dim, T::lit(1e-14).max(T::epsilon() * T::lit(10.0))).map_err(|j| {
            if j == dim - 1 {
                StatsError::PerfectFit
            } else if j >= self.q_rest {
                StatsError::RankDeficientDesign(self.design.terms[j - self.q_rest].clone())
            } else {
                StatsError::Numerical(format!("random-effect pivot {j} not positive"))
            }
        })?;
        let diag = |i: usize| a[i * dim + i];
        for i in 0..self.q_rest {
            logdet_z = logdet_z + T::lit(2.0) * diag(i).ln();
        }
        let mut logdet_x = T::zero();
        for i in self.q_rest..dim - 1 {
            logdet_x = logdet_x + T::lit(2.0) * diag(i).ln();
        }
        let last = diag(dim - 1);
        Ok(Evaluation { prss: last * last, logdet_z, logdet_x, factor: a })
    }

    /// Profiled log-likelihood (ML) or REML criterion.
    pub fn profiled_loglik(&self, ev: &Evaluation<T>, method: Estimation) -> T {
        let two_pi = T::lit(2.0 * std::f64::consts::PI);
        let half = T::lit(0.5);
        match method {
            Estimation::Ml => {
                let n = T::from_usize_lossy(self.design.n);
                -half * (n * (T::one() + (two_pi * ev.prss / n).ln()) + ev.logdet_z)
            }
            Estimation::Reml => {
                let m = T::from_usize_lossy(self.design.n - self.design.p());
                -half * (m * (T::one() + (two_pi * ev.prss / m).ln()) + ev.logdet_z + ev.logdet_x)
            }
        }
    }

    pub fn loglik_at(&self, gamma: &[T], method: Estimation) -> Result<T, StatsError> {
        let ev = self.evaluate(gamma)?;
        Ok(self.profiled_loglik(&ev, method))
    }

    /// Optimizes the variance ratios (unless fixed) and assembles the fit.
    pub fn fit(&self, opts: &FitOptions<T>) -> Result<LmmFit<T>, StatsError> {
        let k = self.num_factors();
        let method = opts.method;
        let (gamma, iterations, converged) = match &opts.fixed_ratios {
            Some(fixed) => {
                if fixed.len() != k {
                    return Err(StatsError::LengthMismatch(k, fixed.len()));
                }
                if fixed.iter().any(|g| !(*g >= T::zero())) {
                    return Err(StatsError::Numerical("variance ratios must be non-negative".into()));
                }
                (fixed.clone(), 0, true)
            }
            None => self.optimize(opts)?,
        };
        self.assemble(&gamma, method, iterations, converged)
    }

    fn optimize(&self, opts: &FitOptions<T>) -> Result<(Vec<T>, usize, bool), StatsError> {
        let k = self.num_factors();
        if k == 0 {
            return Ok((Vec::new(), 0, true));
        }
        let method = opts.method;
        let to_gamma = |theta: &[f64]| theta.iter().map(|&t| T::lit(t.exp())).collect::<Vec<T>>();
        let objective = |theta: &[f64]| match self.loglik_at(&to_gamma(theta), method) {
            Ok(ll) => -ll.to_f64_lossy(),
            Err(_) => f64::INFINITY,
        };
        let lower = vec![opts.ratio_floor.ln(); k];
        let upper = vec![opts.ratio_ceiling.ln(); k];
        let nm = NelderMeadOptions {
            max_iter: opts.max_iter,
            xtol: opts.rel_tol,
            ..NelderMeadOptions::default()
        };
        let best = minimize(objective, &vec![0.0; k], &lower, &upper, nm);
        if !best.f.is_finite() {
            // Surface the underlying numerical problem.
            self.evaluate(&to_gamma(&best.x))?;
            return Err(StatsError::Numerical("likelihood not finite".into()));
        }
        let mut gamma = to_gamma(&best.x);
        let mut current = -best.f;
        // Components pinned near the floor are reported as exactly zero when
        // that does not lower the likelihood.
        for j in 0..k {
            if gamma[j].to_f64_lossy() <= 1e-4 {
                let mut trial = gamma.clone();
                trial[j] = T::zero();
                if let Ok(ll) = self.loglik_at(&trial, method) {
                    let ll = ll.to_f64_lossy();
                    if ll >= current - 1e-12 * (1.0 + current.abs()) {
                        gamma = trial;
                        current = current.max(ll);
                    }
                }
            }
        }
        if !best.converged {
            log::warn!(
                "mixed model for {} did not converge in {} iterations",
                self.design.terms.join(" + "),
                best.iterations
            );
        }
        Ok((gamma, best.iterations, best.converged))
    }

    fn assemble(
        &self,
        gamma: &[T],
        method: Estimation,
        iterations: usize,
        converged: bool,
    ) -> Result<LmmFit<T>, StatsError> {
        let d = &self.design;
        let (n, p, dim, q) = (d.n, d.p(), self.dim, self.q_rest);
        let ev = self.evaluate(gamma)?;
        let mut coef: Vec<T> = (0..dim - 1).map(|j| ev.factor[(dim - 1) * dim + j]).collect();
        solve_upper_transposed(&ev.factor, dim, dim - 1, &mut coef);
        let beta = &coef[q..q + p];

        let denom = match method {
            Estimation::Ml => n,
            Estimation::Reml => n - p,
        };
        let sigma2 = ev.prss / T::from_usize_lossy(denom);
        let inv_diag = inverse_gram_diagonal(&ev.factor, dim, q, p);
        let fixed_effects = d
            .terms
            .iter()
            .zip(beta.iter().zip(&inv_diag))
            .map(|(term, (&b, &v))| {
                let se = (sigma2 * v).sqrt();
                let z = b / se;
                let pv = erfc(z.to_f64_lossy().abs() / std::f64::consts::SQRT_2);
                Coefficient { term: term.clone(), estimate: b, std_error: se, statistic: z, p_value: T::lit(pv) }
            })
            .collect();
        let variance_components = d
            .factors
            .iter()
            .zip(gamma)
            .map(|(f, &g)| VarianceComponent {
                group: f.name.clone(),
                levels: f.levels.len(),
                variance: g * sigma2,
                ratio: g,
            })
            .collect();

        let loglik_ml = self.profiled_loglik(&ev, Estimation::Ml);
        let reml_criterion = match method {
            Estimation::Ml => None,
            Estimation::Reml => Some(self.profiled_loglik(&ev, Estimation::Reml)),
        };
        let n_params = p + d.factors.len() + 1;
        Ok(LmmFit {
            response: String::new(),
            method,
            fixed_effects,
            variance_components,
            residual_variance: sigma2,
            loglik_ml,
            reml_criterion,
            aic: T::lit(-2.0) * loglik_ml + T::from_usize_lossy(2 * n_params),
            converged,
            iterations,
            n_obs: n,
            n_params,
            obs_fingerprint: fingerprint(&d.y),
        })
    }
}

/// FNV-1a over the sorted bit patterns of the response.
pub fn fingerprint<T: Scalar>(y: &[T]) -> u64 {
    let mut bits: Vec<u64> = y.iter().map(|v| v.to_f64_lossy().to_bits()).collect();
    bits.sort_unstable();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in std::iter::once(bits.len() as u64).chain(bits) {
        for byte in b.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Fits `spec` to `table` by maximum likelihood (or REML when requested).
pub fn fit_lmm<T: Scalar>(
    table: &Table<T>,
    spec: &MixedModelSpec,
    opts: &FitOptions<T>,
) -> Result<LmmFit<T>, StatsError> {
    let design = build_design(table, spec, opts.standardize)?;
    let n_params = design.p() + design.factors.len() + 1;
    if design.n <= n_params {
        return Err(StatsError::TooFewObservations { n: design.n, needed: n_params + 1 });
    }
    let mut fit = LmmProblem::new(design).fit(opts)?;
    fit.response = spec.response.clone();
    Ok(fit)
}
