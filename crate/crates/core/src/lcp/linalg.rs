//! Small dense helpers shared by the LCP routines.

use nalgebra::DMatrix;

/// Vector infinity norm.
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Induced infinity norm: maximum absolute row sum.
pub fn mat_norm_inf(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Condition number above which a matrix is treated as singular.
pub fn singular_condition_limit() -> f64 {
    1.0 / f64::EPSILON
}

/// Inverse together with the infinity-norm condition estimate
/// `||A|| ||A^-1||`. Returns `Err(condition)` when the matrix is singular or
/// the estimate exceeds [`singular_condition_limit`].
pub fn inverse_checked(a: &DMatrix<f64>) -> Result<DMatrix<f64>, f64> {
    let inv = match a.clone().lu().try_inverse() {
        Some(inv) => inv,
        None => return Err(f64::INFINITY),
    };
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(f64::INFINITY);
    }
    let cond = mat_norm_inf(a) * mat_norm_inf(&inv);
    if !cond.is_finite() || cond > singular_condition_limit() {
        return Err(cond);
    }
    Ok(inv)
}

/// `I - D + DM` for the diagonal `D = diag(d)`: row `i` is
/// `(1 - d_i) e_i + d_i M_i`.
pub fn vertex_matrix(m: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let n = m.nrows();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = d[i] * m[(i, j)];
        }
        a[(i, i)] += 1.0 - d[i];
    }
    a
}

/// Principal submatrix on the given (sorted) index set.
pub fn principal_submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let k = idx.len();
    DMatrix::from_fn(k, k, |r, c| m[(idx[r], idx[c])])
}

/// Indices set in `mask`, ascending.
pub fn mask_indices(mask: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn induced_norm_is_max_row_sum() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.25]);
        assert_eq!(mat_norm_inf(&m), 3.0);
        assert_eq!(norm_inf(&[1.0, -4.0, 2.0]), 4.0);
        assert_eq!(norm_inf(&[]), 0.0);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(inverse_checked(&m).is_err());
    }

    #[test]
    fn vertex_matrix_interpolates_rows() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 3.0, 4.0]);
        let a = vertex_matrix(&m, &[1.0, 0.0]);
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]));
    }
}
