//! Dense symmetric positive-definite helpers on row-major square matrices.

use crate::scalar::Scalar;

/// In-place lower Cholesky factorization of the row-major `dim × dim`
/// matrix `a`. The strict upper triangle is zeroed. Returns the index of the
/// first pivot that is not positive relative to `rel_tol · max(1, a_ii)`.
pub fn cholesky_in_place<T: Scalar>(a: &mut [T], dim: usize, rel_tol: T) -> Result<(), usize> {
    debug_assert_eq!(a.len(), dim * dim);
    for j in 0..dim {
        let orig = a[j * dim + j];
        let mut d = orig;
        for k in 0..j {
            d = d - a[j * dim + k] * a[j * dim + k];
        }
        let floor = rel_tol * orig.abs().max(T::one());
        if !(d > floor) {
            return Err(j);
        }
        let ljj = d.sqrt();
        a[j * dim + j] = ljj;
        for i in (j + 1)..dim {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s = s - a[i * dim + k] * a[j * dim + k];
            }
            a[i * dim + j] = s / ljj;
        }
        for i in 0..j {
            a[i * dim + j] = T::zero();
        }
    }
    Ok(())
}

/// Solves `Lᵀ x = b` in place for lower-triangular `l` restricted to the
/// leading `n × n` block of a `dim`-strided matrix.
pub fn solve_upper_transposed<T: Scalar>(l: &[T], dim: usize, n: usize, b: &mut [T]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s = s - l[k * dim + i] * b[k];
        }
        b[i] = s / l[i * dim + i];
    }
}

/// Solves `L x = b` in place on the leading `n × n` block.
pub fn solve_lower<T: Scalar>(l: &[T], dim: usize, n: usize, b: &mut [T]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i * dim + k] * b[k];
        }
        b[i] = s / l[i * dim + i];
    }
}

/// Diagonal of `(B Bᵀ)⁻¹` where `B` is the lower-triangular block of `l`
/// spanning rows/columns `start..start+p`.
pub fn inverse_gram_diagonal<T: Scalar>(l: &[T], dim: usize, start: usize, p: usize) -> Vec<T> {
    let block: Vec<T> = (0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .map(|(i, j)| l[(start + i) * dim + start + j])
        .collect();
    // (B Bᵀ)⁻¹ = B⁻ᵀ B⁻¹, so diag_i = Σ_k (B⁻¹)_{k i}², the squared norm of
    // column i of B⁻¹.
    let mut diag = vec![T::zero(); p];
    for i in 0..p {
        let mut e = vec![T::zero(); p];
        e[i] = T::one();
        solve_lower(&block, p, p, &mut e);
        diag[i] = e.iter().map(|&v| v * v).sum();
    }
    diag
}
