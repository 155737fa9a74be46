//! Pooling, cosine distance and sentence-level isotropy metrics.
//!
//! All functions are pure and operate on `m × D` row-major views of token
//! embeddings for one sentence at one layer.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Scalar, EPS_NORM};
use crate::trace::Span;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate vector (norm below {EPS_NORM})")]
    DegenerateVector,
    #[error("too few tokens: need at least {needed}, got {got}")]
    TooFewTokens { needed: usize, got: usize },
    #[error("span [{start}, {end}) invalid for {rows} rows")]
    InvalidSpan { start: usize, end: usize, rows: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledEmbedding<T> {
    pub vector: Array1<T>,
    pub source_span: Span,
    pub pooling: Pooling,
}

/// Per-sentence isotropy metrics at one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropyScores<T> {
    /// Centered isotropy, in `[0, 2]`.
    pub ci: T,
    /// Mean cosine distance, in `[0, 2]`.
    pub mcd: T,
    /// Intra-sentence similarity, in `[-1, 1]`.
    pub iss: T,
    pub n_used: usize,
}

fn eps<T: Scalar>() -> T {
    T::lit(EPS_NORM)
}

fn norm<T: Scalar>(v: ArrayView1<'_, T>) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

fn clamp<T: Scalar>(x: T, lo: f64, hi: f64) -> T {
    x.max(T::lit(lo)).min(T::lit(hi))
}

/// Element-wise mean of the rows covered by `span`.
pub fn pool<T: Scalar>(
    layer: ArrayView2<'_, T>,
    span: Span,
) -> Result<PooledEmbedding<T>, GeometryError> {
    let rows = layer.nrows();
    if span.start >= span.end || span.end > rows {
        return Err(GeometryError::InvalidSpan { start: span.start, end: span.end, rows });
    }
    let mut acc = Array1::<T>::zeros(layer.ncols());
    for row in layer.slice(ndarray::s![span.start..span.end, ..]).outer_iter() {
        acc.zip_mut_with(&row, |a, &b| *a = *a + b);
    }
    let len = T::from_usize_lossy(span.len());
    acc.mapv_inplace(|x| x / len);
    if norm(acc.view()) < eps() {
        return Err(GeometryError::DegenerateVector);
    }
    Ok(PooledEmbedding { vector: acc, source_span: span, pooling: Pooling::Mean })
}

/// `1 − cos(u, v)`, clamped to `[0, 2]`.
pub fn cosine_distance<T: Scalar>(
    u: ArrayView1<'_, T>,
    v: ArrayView1<'_, T>,
) -> Result<T, GeometryError> {
    if u.len() != v.len() {
        return Err(GeometryError::DimensionMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu < eps() || nv < eps() {
        return Err(GeometryError::DegenerateVector);
    }
    let dot: T = u.iter().zip(v.iter()).map(|(&a, &b)| a * b).sum();
    Ok(clamp(T::one() - dot / (nu * nv), 0.0, 2.0))
}

/// Mean pairwise `1 − u_i·u_j` over unit vectors, via the sum vector:
/// `Σ_{i<j} u_i·u_j = (‖Σ u_i‖² − m) / 2`.
fn mean_pairwise_unit_distance<T: Scalar>(unit_rows: &ndarray::Array2<T>) -> T {
    let m = unit_rows.nrows();
    let total = unit_rows.sum_axis(Axis(0));
    let sq: T = total.iter().map(|&x| x * x).sum();
    let mf = T::from_usize_lossy(m);
    let mean_dot = (sq - mf) / (mf * (mf - T::one()));
    clamp(T::one() - mean_dot, 0.0, 2.0)
}

fn normalize_rows<T: Scalar>(rows: &mut ndarray::Array2<T>) -> Result<(), GeometryError> {
    for mut row in rows.outer_iter_mut() {
        let n = norm(row.view());
        if n < eps() {
            return Err(GeometryError::DegenerateVector);
        }
        row.mapv_inplace(|x| x / n);
    }
    Ok(())
}

/// Centered isotropy: center rows on their mean, unit-normalize, then take
/// the mean cosine distance over all unordered pairs.
pub fn centered_isotropy<T: Scalar>(emb: ArrayView2<'_, T>) -> Result<T, GeometryError> {
    let m = emb.nrows();
    if m < 3 {
        return Err(GeometryError::TooFewTokens { needed: 3, got: m });
    }
    let mean = emb.mean_axis(Axis(0)).expect("m >= 3");
    let mut centered = emb.to_owned();
    for mut row in centered.outer_iter_mut() {
        row.zip_mut_with(&mean, |a, &b| *a = *a - b);
    }
    normalize_rows(&mut centered)?;
    Ok(mean_pairwise_unit_distance(&centered))
}

/// Mean cosine distance over all unordered pairs of rows.
pub fn mean_cosine_distance<T: Scalar>(emb: ArrayView2<'_, T>) -> Result<T, GeometryError> {
    let m = emb.nrows();
    if m < 2 {
        return Err(GeometryError::TooFewTokens { needed: 2, got: m });
    }
    let mut unit = emb.to_owned();
    normalize_rows(&mut unit)?;
    Ok(mean_pairwise_unit_distance(&unit))
}

/// Mean cosine similarity between each row and the sentence mean vector.
pub fn intra_sentence_similarity<T: Scalar>(emb: ArrayView2<'_, T>) -> Result<T, GeometryError> {
    let m = emb.nrows();
    if m < 2 {
        return Err(GeometryError::TooFewTokens { needed: 2, got: m });
    }
    let mean = emb.mean_axis(Axis(0)).expect("m >= 2");
    let mn = norm(mean.view());
    if mn < eps() {
        return Err(GeometryError::DegenerateVector);
    }
    let mut total = T::zero();
    for row in emb.outer_iter() {
        let rn = norm(row);
        if rn < eps() {
            return Err(GeometryError::DegenerateVector);
        }
        let dot: T = row.iter().zip(mean.iter()).map(|(&a, &b)| a * b).sum();
        total = total + dot / (rn * mn);
    }
    Ok(clamp(total / T::from_usize_lossy(m), -1.0, 1.0))
}

/// All three isotropy metrics for one sentence at one layer. Sentences with
/// fewer than three tokens are rejected, since centered isotropy is
/// identically 2 for two distinct rows.
pub fn isotropy_scores<T: Scalar>(emb: ArrayView2<'_, T>) -> Result<IsotropyScores<T>, GeometryError> {
    Ok(IsotropyScores {
        ci: centered_isotropy(emb)?,
        mcd: mean_cosine_distance(emb)?,
        iss: intra_sentence_similarity(emb)?,
        n_used: emb.nrows(),
    })
}
