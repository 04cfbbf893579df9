//! Exhaustive complementary-basis enumeration.
//!
//! For every subset `S` of indices, `x_S` and `w_{not S}` are made basic and
//! `w - Mx = q` is solved. Bases whose system is singular are skipped and
//! counted; the rest are kept when both `x` and `w` are nonnegative.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linalg::{inverse_checked, mask_indices};
use super::{BasicVar, LcpError, LcpInstance, LcpSolution, LcpStatus};

pub const ORACLE_MAX_DIM: usize = 16;

/// Feasibility slack allowed on basic values.
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub solutions: Vec<LcpSolution>,
    pub bases_checked: usize,
    pub singular_bases: usize,
}

impl OracleResult {
    /// Solutions with duplicates (from degenerate bases) merged.
    pub fn distinct(&self, tol: f64) -> Vec<&LcpSolution> {
        let mut out: Vec<&LcpSolution> = Vec::new();
        for s in &self.solutions {
            let dup = out.iter().any(|o| {
                o.x.iter().zip(&s.x).all(|(a, b)| (a - b).abs() <= tol * (1.0 + a.abs()))
            });
            if !dup {
                out.push(s);
            }
        }
        out
    }
}

pub fn enumerate_lcp_oracle(inst: &LcpInstance) -> Result<OracleResult, LcpError> {
    inst.validate()?;
    let n = inst.dim();
    if n > ORACLE_MAX_DIM {
        return Err(LcpError::DimensionTooLarge { n, max: ORACLE_MAX_DIM });
    }
    let scale = 1.0 + inst.q.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut solutions = Vec::new();
    let mut singular = 0;
    let total = 1u64 << n;
    for mask in 0..total {
        let support = mask_indices(mask, n);
        let mut b = DMatrix::<f64>::identity(n, n);
        for &j in &support {
            for i in 0..n {
                b[(i, j)] = -inst.m[(i, j)];
            }
        }
        let inv = match inverse_checked(&b) {
            Ok(inv) => inv,
            Err(_) => {
                singular += 1;
                continue;
            }
        };
        let v = inv * &inst.q;
        if v.iter().any(|&e| e < -FEAS_TOL * scale) {
            continue;
        }
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut basis = vec![BasicVar::W; n];
        for j in 0..n {
            if mask >> j & 1 == 1 {
                x[j] = v[j];
                basis[j] = BasicVar::X;
            } else {
                w[j] = v[j];
            }
        }
        solutions.push(LcpSolution { x, w, status: LcpStatus::Solved, basis, pivots: 0 });
    }
    Ok(OracleResult { solutions, bases_checked: total as usize, singular_bases: singular })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn inst(m: &[f64], q: &[f64]) -> LcpInstance {
        let n = q.len();
        LcpInstance::unlabeled(DMatrix::from_row_slice(n, n, m), DVector::from_column_slice(q)).unwrap()
    }

    #[test]
    fn scalar_has_one_solution() {
        let r = enumerate_lcp_oracle(&inst(&[1.0], &[-2.0])).unwrap();
        assert_eq!(r.solutions.len(), 1);
        assert_eq!(r.solutions[0].x, vec![2.0]);
        assert_eq!(r.bases_checked, 2);
    }

    #[test]
    fn non_p_matrix_has_two_solutions() {
        // M = [[0,-1],[-1,0]], q = (1,1):
        //   S = {}     -> x = 0, w = (1,1)
        //   S = {1}    -> column (0,1) with e_2: singular
        //   S = {2}    -> singular
        //   S = {1,2}  -> x = (1,1), w = 0
        let r = enumerate_lcp_oracle(&inst(&[0.0, -1.0, -1.0, 0.0], &[1.0, 1.0])).unwrap();
        assert_eq!(r.singular_bases, 2);
        assert_eq!(r.solutions.len(), 2);
        assert_eq!(r.solutions[0].x, vec![0.0, 0.0]);
        assert_eq!(r.solutions[1].x, vec![1.0, 1.0]);
        assert_eq!(r.solutions[1].w, vec![0.0, 0.0]);
    }

    #[test]
    fn too_large_is_rejected() {
        let n = ORACLE_MAX_DIM + 1;
        let i = LcpInstance::unlabeled(DMatrix::identity(n, n), DVector::zeros(n)).unwrap();
        assert!(matches!(enumerate_lcp_oracle(&i), Err(LcpError::DimensionTooLarge { .. })));
    }
}
