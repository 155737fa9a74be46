//! Target→cue attention per head, per-layer aggregation, and the running
//! maximum across layers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{compensated_sum, Scalar};
use crate::trace::Span;

/// Allowed deviation of an attention row sum from 1.
pub const ROW_SUM_TOL: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttentionError {
    #[error("target span {target} and cue span {cue} overlap")]
    SpanOverlap { target: Span, cue: Span },
    #[error("span {span} out of range for {n} positions")]
    SpanOutOfRange { span: Span, n: usize },
    #[error("attention row {row} sums to {sum}")]
    RowSumViolation { row: usize, sum: f64 },
    #[error("attention matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
}

/// Attention from one sentence's target word to its cue, for every head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionToCue<T> {
    /// `L × H`, row `ℓ-1` holds layer `ℓ`.
    pub per_head: Array2<T>,
    pub layer_mean: Array1<T>,
    pub layer_max: Array1<T>,
    pub cum_max: Array1<T>,
}

/// Mean over target query rows of the attention mass those rows send to the
/// cue key columns.
pub fn head_attention_to_cue<T: Scalar>(
    attn: ArrayView2<'_, T>,
    target: Span,
    cue: Span,
) -> Result<T, AttentionError> {
    let (n, cols) = attn.dim();
    if n != cols {
        return Err(AttentionError::NotSquare(n, cols));
    }
    for span in [target, cue] {
        if span.is_empty() || span.end > n {
            return Err(AttentionError::SpanOutOfRange { span, n });
        }
    }
    if target.overlaps(&cue) {
        return Err(AttentionError::SpanOverlap { target, cue });
    }
    let tol = T::lit(ROW_SUM_TOL);
    let mut masses = Vec::with_capacity(target.len());
    for i in target.range() {
        let row = attn.row(i);
        let sum: T = row.iter().copied().sum();
        if (sum - T::one()).abs() > tol {
            return Err(AttentionError::RowSumViolation { row: i, sum: sum.to_f64_lossy() });
        }
        masses.push(compensated_sum(row.slice(ndarray::s![cue.start..cue.end]).iter().copied()));
    }
    let total = compensated_sum(masses);
    let score = total / T::from_usize_lossy(target.len());
    Ok(score.max(T::zero()).min(T::one()))
}

/// Per-layer mean and maximum over heads.
pub fn aggregate_layers<T: Scalar>(per_head: ArrayView2<'_, T>) -> (Array1<T>, Array1<T>) {
    let mean = if per_head.ncols() == 0 {
        Array1::zeros(per_head.nrows())
    } else {
        per_head.mean_axis(Axis(1)).expect("non-empty head axis")
    };
    let max = per_head
        .outer_iter()
        .map(|row| row.iter().copied().fold(T::neg_infinity(), T::max))
        .collect();
    (mean, max)
}

/// Running maximum: `out[ℓ] = max(input[..=ℓ])`.
pub fn cumulative_max<T: Scalar>(layer_max: ArrayView1<'_, T>) -> Array1<T> {
    let mut best = T::neg_infinity();
    layer_max
        .iter()
        .map(|&x| {
            best = best.max(x);
            best
        })
        .collect()
}

impl<T: Scalar> AttentionToCue<T> {
    /// Builds the per-head matrix from a closure yielding the `n × n`
    /// attention matrix for `(layer, head)`, with layers indexed from 0.
    pub fn compute<'a, F>(
        layers: usize,
        heads: usize,
        target: Span,
        cue: Span,
        matrix: F,
    ) -> Result<Self, AttentionError>
    where
        F: Fn(usize, usize) -> ArrayView2<'a, T>,
        T: 'a,
    {
        let mut per_head = Array2::zeros((layers, heads));
        for l in 0..layers {
            for h in 0..heads {
                per_head[[l, h]] = head_attention_to_cue(matrix(l, h), target, cue)?;
            }
        }
        let (layer_mean, layer_max) = aggregate_layers(per_head.view());
        let cum_max = cumulative_max(layer_max.view());
        Ok(Self { per_head, layer_mean, layer_max, cum_max })
    }
}
