//! Expansion of a model specification into a dense fixed-effect design and
//! grouping-factor indices.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::linalg::cholesky_in_place;
use super::table::{Column, Table};
use super::StatsError;
use crate::scalar::Scalar;

/// A linear (mixed) model: intercept implicit, fixed effects in order,
/// pairwise interactions, and random intercepts per grouping factor.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MixedModelSpec {
    pub response: String,
    pub fixed_effects: Vec<String>,
    #[serde(default)]
    pub random_intercept_factors: Vec<String>,
    #[serde(default)]
    pub interactions: Vec<(String, String)>,
}

impl MixedModelSpec {
    pub fn new(response: &str) -> Self {
        Self { response: response.to_string(), ..Self::default() }
    }

    pub fn fixed(mut self, terms: &[&str]) -> Self {
        self.fixed_effects.extend(terms.iter().map(|s| s.to_string()));
        self
    }

    pub fn random(mut self, factors: &[&str]) -> Self {
        self.random_intercept_factors.extend(factors.iter().map(|s| s.to_string()));
        self
    }

    pub fn interaction(mut self, a: &str, b: &str) -> Self {
        self.interactions.push((a.to_string(), b.to_string()));
        self
    }

    pub fn check(&self) -> Result<(), StatsError> {
        let mut seen = BTreeSet::new();
        for t in self.fixed_effects.iter().chain(&self.random_intercept_factors) {
            if !seen.insert(t.as_str()) {
                return Err(StatsError::DuplicateTerm(t.clone()));
            }
        }
        let mut pairs = BTreeSet::new();
        for (a, b) in &self.interactions {
            let key = if a <= b { (a, b) } else { (b, a) };
            if a == b || !pairs.insert(key) {
                return Err(StatsError::DuplicateTerm(format!("{a}:{b}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
    /// Level index of each row.
    pub index: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Design<T> {
    pub n: usize,
    pub terms: Vec<String>,
    /// Row-major `n × p`, column 0 is the intercept.
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub factors: Vec<Factor>,
}

impl<T: Scalar> Design<T> {
    pub fn p(&self) -> usize {
        self.terms.len()
    }
}

fn sorted_levels(values: &[String]) -> Vec<String> {
    values.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
}

/// Encoded columns for one term: numeric → itself, categorical → one 0/1
/// indicator per non-reference level (alphabetically first is reference).
fn encode_term<T: Scalar>(
    table: &Table<T>,
    name: &str,
    standardize: bool,
) -> Result<Vec<(String, Vec<T>)>, StatsError> {
    match table.column(name)? {
        Column::Numeric(v) => {
            let mut v = v.clone();
            if standardize {
                let n = T::from_usize_lossy(v.len());
                let mean = v.iter().copied().sum::<T>() / n;
                let var = v.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() / (n - T::one());
                let sd = var.sqrt();
                if sd > T::zero() {
                    v.iter_mut().for_each(|a| *a = (*a - mean) / sd);
                }
            }
            Ok(vec![(name.to_string(), v)])
        }
        Column::Categorical(v) => {
            let levels = sorted_levels(v);
            Ok(levels
                .iter()
                .skip(1)
                .map(|lvl| {
                    let col = v.iter().map(|s| if s == lvl { T::one() } else { T::zero() }).collect();
                    (format!("{name}[{lvl}]"), col)
                })
                .collect())
        }
    }
}

pub fn build_design<T: Scalar>(
    table: &Table<T>,
    spec: &MixedModelSpec,
    standardize: bool,
) -> Result<Design<T>, StatsError> {
    spec.check()?;
    let n = table.nrows();
    let y = table.numeric(&spec.response)?.to_vec();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(spec.response.clone()));
    }

    let mut cols: Vec<(String, Vec<T>)> = vec![("(intercept)".to_string(), vec![T::one(); n])];
    for term in &spec.fixed_effects {
        cols.extend(encode_term(table, term, standardize)?);
    }
    for (a, b) in &spec.interactions {
        let ea = encode_term(table, a, standardize)?;
        let eb = encode_term(table, b, standardize)?;
        for (na, va) in &ea {
            for (nb, vb) in &eb {
                let prod = va.iter().zip(vb).map(|(&p, &q)| p * q).collect();
                cols.push((format!("{na}:{nb}"), prod));
            }
        }
    }
    for (name, col) in &cols {
        if col.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(name.clone()));
        }
    }

    let p = cols.len();
    let mut x = vec![T::zero(); n * p];
    for (j, (_, col)) in cols.iter().enumerate() {
        for i in 0..n {
            x[i * p + j] = col[i];
        }
    }
    let terms: Vec<String> = cols.into_iter().map(|(name, _)| name).collect();

    let mut factors = Vec::new();
    for name in &spec.random_intercept_factors {
        let values = table.categorical(name)?;
        let levels = sorted_levels(values);
        if levels.len() < 2 {
            return Err(StatsError::SingularFactor { factor: name.clone(), levels: levels.len() });
        }
        let index = values
            .iter()
            .map(|v| levels.binary_search(v).expect("level present"))
            .collect();
        factors.push(Factor { name: name.clone(), levels, index });
    }

    let design = Design { n, terms, x, y, factors };
    check_full_rank(&design)?;
    Ok(design)
}

/// Rejects designs whose column-equilibrated Gram matrix has a vanishing
/// pivot, naming the first dependent term.
pub fn check_full_rank<T: Scalar>(d: &Design<T>) -> Result<(), StatsError> {
    let (n, p) = (d.n, d.p());
    if n <= p {
        return Err(StatsError::TooFewObservations { n, needed: p + 1 });
    }
    let norms: Vec<T> = (0..p)
        .map(|j| (0..n).map(|i| d.x[i * p + j] * d.x[i * p + j]).sum::<T>().sqrt())
        .collect();
    if let Some(j) = norms.iter().position(|&v| v == T::zero()) {
        return Err(StatsError::RankDeficientDesign(d.terms[j].clone()));
    }
    let mut g = vec![T::zero(); p * p];
    for row in d.x.chunks_exact(p) {
        for a in 0..p {
            for b in 0..=a {
                g[a * p + b] = g[a * p + b] + row[a] * row[b] / (norms[a] * norms[b]);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g[b * p + a] = g[a * p + b];
        }
    }
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(100.0));
    cholesky_in_place(&mut g, p, tol).map_err(|j| StatsError::RankDeficientDesign(d.terms[j].clone()))
}
