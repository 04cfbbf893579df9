//! P-matrix classification by principal minors.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{mask_indices, principal_submatrix, vertex_matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinorMethod {
    /// Determinants of every principal submatrix.
    ExactMinors,
    /// `det(I - D + DM)` at every binary diagonal `D`.
    VertexDeterminants,
    /// Random principal minors; `true` only means "not refuted".
    SampledMinors,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Largest dimension checked exhaustively.
    pub exact_limit: usize,
    /// Exhaustive method to use up to `exact_limit`.
    pub exact_method: MinorMethod,
    /// Random subsets drawn above the limit (after all 1x1 and 2x2 minors).
    pub samples: usize,
    pub seed: u64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { exact_limit: 20, exact_method: MinorMethod::ExactMinors, samples: 4096, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixClassReport {
    pub is_p_matrix: bool,
    pub method: MinorMethod,
    /// Smallest nonempty principal minor seen.
    pub min_minor: f64,
    /// Zero-based index set of a nonpositive principal minor.
    pub witness: Option<Vec<usize>>,
    pub minors_checked: usize,
    pub dimension: usize,
}

fn det(m: DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        1.0
    } else {
        m.lu().determinant()
    }
}

/// Principal minor on `idx` evaluated by the requested exact route.
pub(crate) fn minor(m: &DMatrix<f64>, mask: u64, method: MinorMethod) -> f64 {
    let n = m.nrows();
    match method {
        MinorMethod::VertexDeterminants => {
            let d: Vec<f64> = (0..n).map(|i| (mask >> i & 1) as f64).collect();
            det(vertex_matrix(m, &d))
        }
        _ => det(principal_submatrix(m, &mask_indices(mask, n))),
    }
}

pub fn classify_p_matrix(m: &DMatrix<f64>, opts: &ClassifyOptions) -> MatrixClassReport {
    assert!(m.is_square(), "classify_p_matrix needs a square matrix");
    let n = m.nrows();
    if n <= opts.exact_limit {
        exact(m, opts)
    } else {
        sampled(m, opts)
    }
}

fn exact(m: &DMatrix<f64>, opts: &ClassifyOptions) -> MatrixClassReport {
    let n = m.nrows();
    let method = match opts.exact_method {
        MinorMethod::SampledMinors => MinorMethod::ExactMinors,
        other => other,
    };
    let mut min_minor = f64::INFINITY;
    let mut min_mask = 0u64;
    for mask in 1..(1u64 << n) {
        let v = minor(m, mask, method);
        if v < min_minor {
            min_minor = v;
            min_mask = mask;
        }
    }
    if n == 0 {
        min_minor = 1.0;
    }
    let is_p = min_minor > 0.0;
    MatrixClassReport {
        is_p_matrix: is_p,
        method,
        min_minor,
        witness: (!is_p).then(|| mask_indices(min_mask, n)),
        minors_checked: 1usize << n,
        dimension: n,
    }
}

fn sampled(m: &DMatrix<f64>, opts: &ClassifyOptions) -> MatrixClassReport {
    let n = m.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut subsets: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for i in 0..n {
        for j in i + 1..n {
            subsets.push(vec![i, j]);
        }
    }
    for _ in 0..opts.samples {
        let k = rng.random_range(1..=n);
        let mut idx = sample(&mut rng, n, k).into_vec();
        idx.sort_unstable();
        subsets.push(idx);
    }
    let mut min_minor = f64::INFINITY;
    let mut witness = None;
    let mut checked = 0;
    for idx in subsets {
        let v = det(principal_submatrix(m, &idx));
        checked += 1;
        min_minor = min_minor.min(v);
        if v <= 0.0 {
            // one refutation settles it
            witness = Some(idx);
            break;
        }
    }
    MatrixClassReport {
        is_p_matrix: witness.is_none(),
        method: MinorMethod::SampledMinors,
        min_minor,
        witness,
        minors_checked: checked,
        dimension: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_p() {
        for n in [1, 3, 6] {
            let r = classify_p_matrix(&DMatrix::identity(n, n), &ClassifyOptions::default());
            assert!(r.is_p_matrix);
            assert_eq!(r.min_minor, 1.0);
            assert_eq!(r.witness, None);
            assert_eq!(r.method, MinorMethod::ExactMinors);
        }
    }

    #[test]
    fn refutes_with_full_witness() {
        // minors 1, 1, 1 - 6 = -5
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 1.0]);
        let r = classify_p_matrix(&m, &ClassifyOptions::default());
        assert!(!r.is_p_matrix);
        assert_eq!(r.witness, Some(vec![0, 1]));
        assert!((r.min_minor + 5.0).abs() < 1e-12);
    }

    #[test]
    fn tridiagonal_minors() {
        // minors 2, 2, 4 - 1 = 3
        let m = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        for method in [MinorMethod::ExactMinors, MinorMethod::VertexDeterminants] {
            let opts = ClassifyOptions { exact_method: method, ..Default::default() };
            let r = classify_p_matrix(&m, &opts);
            assert!(r.is_p_matrix);
            assert!((r.min_minor - 2.0).abs() < 1e-12);
            assert_eq!(r.method, method);
        }
    }

    #[test]
    fn sampled_path_refutes_zero_diagonal() {
        let mut m = DMatrix::identity(25, 25);
        m[(7, 7)] = 0.0;
        let r = classify_p_matrix(&m, &ClassifyOptions::default());
        assert_eq!(r.method, MinorMethod::SampledMinors);
        assert!(!r.is_p_matrix);
        assert_eq!(r.witness, Some(vec![7]));
    }

    #[test]
    fn sampled_path_does_not_refute_identity() {
        let opts = ClassifyOptions { samples: 64, ..Default::default() };
        let r = classify_p_matrix(&DMatrix::identity(22, 22), &opts);
        assert!(r.is_p_matrix);
        assert_eq!(r.method, MinorMethod::SampledMinors);
    }
}
