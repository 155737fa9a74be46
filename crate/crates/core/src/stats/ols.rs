//! Ordinary least squares: the simple regression behind layer-wise R², and a
//! multiple regression for designs without grouping structure.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::design::{build_design, Design, MixedModelSpec};
use super::linalg::{cholesky_in_place, inverse_gram_diagonal, solve_lower, solve_upper_transposed};
use super::table::Table;
use super::{Coefficient, StatsError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
    pub n: usize,
}

/// Least-squares line of `y` on `x`. A constant response yields `R² = 0`.
pub fn ols_simple<T: Scalar>(x: &[T], y: &[T]) -> Result<OlsFit<T>, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewObservations { n, needed: 3 });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("ols input".into()));
    }
    let nf = T::from_usize_lossy(n);
    let mx = x.iter().copied().sum::<T>() / nf;
    let my = y.iter().copied().sum::<T>() / nf;
    let (mut sxx, mut syy, mut sxy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
        sxy = sxy + dx * dy;
    }
    if !(sxx > T::zero()) {
        return Err(StatsError::ConstantPredictor);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > T::zero() {
        let sse: T = x
            .iter()
            .zip(y)
            .map(|(&a, &b)| {
                let r = b - intercept - slope * a;
                r * r
            })
            .sum();
        (T::one() - sse / syy).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    Ok(OlsFit { slope, intercept, r_squared, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsMultiFit<T> {
    pub response: String,
    /// Standard errors use the unbiased residual variance `RSS / (n − p)`;
    /// p-values come from Student's t with `n − p` degrees of freedom.
    pub coefficients: Vec<Coefficient<T>>,
    pub residual_variance: T,
    pub r_squared: T,
    pub adj_r_squared: T,
    pub rss: T,
    pub loglik_ml: T,
    pub aic: T,
    pub n_obs: usize,
    pub n_params: usize,
}

impl<T: Scalar> OlsMultiFit<T> {
    pub fn coefficient(&self, term: &str) -> Option<&Coefficient<T>> {
        self.coefficients.iter().find(|c| c.term == term)
    }
}

pub fn ols_multiple<T: Scalar>(
    table: &Table<T>,
    spec: &MixedModelSpec,
    standardize: bool,
) -> Result<OlsMultiFit<T>, StatsError> {
    let fixed_only = MixedModelSpec { random_intercept_factors: Vec::new(), ..spec.clone() };
    let design = build_design(table, &fixed_only, standardize)?;
    ols_design(&design, &spec.response)
}

pub(crate) fn ols_design<T: Scalar>(d: &Design<T>, response: &str) -> Result<OlsMultiFit<T>, StatsError> {
    let (n, p) = (d.n, d.p());
    let mut g = vec![T::zero(); p * p];
    let mut xty = vec![T::zero(); p];
    for (row, &yi) in d.x.chunks_exact(p).zip(&d.y) {
        for a in 0..p {
            xty[a] = xty[a] + row[a] * yi;
            for b in 0..=a {
                g[a * p + b] = g[a * p + b] + row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g[b * p + a] = g[a * p + b];
        }
    }
    cholesky_in_place(&mut g, p, T::lit(1e-13))
        .map_err(|j| StatsError::RankDeficientDesign(d.terms[j].clone()))?;
    let mut beta = xty;
    solve_lower(&g, p, p, &mut beta);
    solve_upper_transposed(&g, p, p, &mut beta);

    let nf = T::from_usize_lossy(n);
    let my = d.y.iter().copied().sum::<T>() / nf;
    let mut rss = T::zero();
    let mut tss = T::zero();
    for (row, &yi) in d.x.chunks_exact(p).zip(&d.y) {
        let fit: T = row.iter().zip(&beta).map(|(&a, &b)| a * b).sum();
        rss = rss + (yi - fit) * (yi - fit);
        tss = tss + (yi - my) * (yi - my);
    }
    let df = n - p;
    let sigma2 = rss / T::from_usize_lossy(df);
    let inv_diag = inverse_gram_diagonal(&g, p, 0, p);
    let tdist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| StatsError::Numerical(e.to_string()))?;
    let coefficients = d
        .terms
        .iter()
        .zip(beta.iter().zip(&inv_diag))
        .map(|(term, (&b, &v))| {
            let se = (sigma2 * v).sqrt();
            let t = b / se;
            let pv = 2.0 * (1.0 - tdist.cdf(t.to_f64_lossy().abs()));
            Coefficient { term: term.clone(), estimate: b, std_error: se, statistic: t, p_value: T::lit(pv) }
        })
        .collect();
    let r_squared = if tss > T::zero() { T::one() - rss / tss } else { T::zero() };
    let adj = T::one() - (T::one() - r_squared) * (nf - T::one()) / T::from_usize_lossy(df);
    let two_pi = T::lit(2.0 * std::f64::consts::PI);
    let loglik = -T::lit(0.5) * nf * (T::one() + (two_pi * rss / nf).ln());
    let n_params = p + 1;
    Ok(OlsMultiFit {
        response: response.to_string(),
        coefficients,
        residual_variance: sigma2,
        r_squared,
        adj_r_squared: adj,
        rss,
        loglik_ml: loglik,
        aic: T::lit(-2.0) * loglik + T::from_usize_lossy(2 * n_params),
        n_obs: n,
        n_params,
    })
}
