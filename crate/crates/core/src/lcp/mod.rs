//! Linear complementarity problems.
//!
//! An instance `LCP(M, q)` asks for `x >= 0` with `w = Mx + q >= 0` and
//! `x'w = 0`. This module holds the instance/solution types and the
//! operations built on them:
//!
//! * [`solve_lcp`]: complementary pivoting with a covering vector of ones and
//!   a lexicographic ratio test.
//! * [`enumerate_lcp_oracle`]: brute-force enumeration of every complementary
//!   basis, used as an independent check on small instances.
//! * [`classify_p_matrix`]: principal-minor test for the P-property.
//! * [`beta_of`]: the condition measure `max_d ||(I - D + DM)^-1 D||`.
//! * [`perturbation_bound`]: the equilibrium-shift bound built on `beta_of`.
//!
//! Every norm in this module is the vector infinity norm or the matrix norm
//! it induces (maximum absolute row sum).

mod beta;
mod bound;
mod lemke;
pub mod linalg;
mod oracle;
mod pmatrix;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use beta::{beta_at, beta_of, grid_max, is_singular, BetaEstimate, BetaMethod, BetaOptions};
pub use bound::{perturbation_bound, perturbation_bound_with_beta, PerturbationBound};
pub use lemke::{solve_lcp, SolverOptions};
pub use oracle::{enumerate_lcp_oracle, OracleResult, ORACLE_MAX_DIM};
pub use pmatrix::{classify_p_matrix, ClassifyOptions, MatrixClassReport, MinorMethod};

/// What a variable of an assembled LCP stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    /// Unlabelled variable of a hand-built instance.
    Generic,
    /// Generator block output `P_Gib`.
    GenBlock,
    /// Demand block consumption `P_Djk`.
    DemandBlock,
    /// Positive part of a bus angle.
    AnglePos,
    /// Negative part of a bus angle.
    AngleNeg,
    /// Unit capacity dual `alpha_i`.
    UnitCapacity,
    /// Block capacity dual `phi_ib`.
    BlockCapacity,
    /// Demand block maximum dual `sigma_jk`.
    DemandMax,
    /// Minimum demand dual `psi_j`.
    DemandMin,
    /// Nodal balance dual, the locational marginal price `rho_n`.
    Balance,
    /// Line limit dual `gamma_nm`.
    LineLimit,
}

/// A variable descriptor: kind tag plus the market entity it belongs to.
///
/// `entity` is the unit, bus or line index; `sub` is the block index (or the
/// flow direction for line limits, 0 = from->to, 1 = to->from).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarLabel {
    pub kind: VarKind,
    pub entity: usize,
    pub sub: usize,
}

impl VarLabel {
    pub fn new(kind: VarKind, entity: usize, sub: usize) -> Self {
        Self { kind, entity, sub }
    }

    pub fn generic(i: usize) -> Self {
        Self::new(VarKind::Generic, i, 0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LcpError {
    #[error("malformed instance: {0}")]
    Malformed(String),
    #[error("complementary pivoting ended on a secondary ray after {pivots} pivots")]
    RayTermination { pivots: usize },
    #[error("pivot budget of {limit} exhausted")]
    IterationLimit { limit: usize },
    #[error("oracle enumeration limited to n <= {max}, got n = {n}")]
    DimensionTooLarge { n: usize, max: usize },
    #[error("numerically singular matrix I - D + DM encountered (condition estimate {condition:e})")]
    SingularEncountered { condition: f64 },
    #[error("eta = {eta} >= 1, perturbation bound does not apply")]
    EtaExceedsOne { bound: Box<PerturbationBound>, eta: f64 },
}

/// `LCP(M, q)` with one label per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct LcpInstance {
    pub m: DMatrix<f64>,
    pub q: DVector<f64>,
    pub labels: Vec<VarLabel>,
}

impl LcpInstance {
    /// Builds an instance and checks shape and label uniqueness.
    pub fn new(m: DMatrix<f64>, q: DVector<f64>, labels: Vec<VarLabel>) -> Result<Self, LcpError> {
        let inst = Self { m, q, labels };
        inst.validate()?;
        Ok(inst)
    }

    /// Instance with generic labels `0..n`.
    pub fn unlabeled(m: DMatrix<f64>, q: DVector<f64>) -> Result<Self, LcpError> {
        let labels = (0..q.len()).map(VarLabel::generic).collect();
        Self::new(m, q, labels)
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn validate(&self) -> Result<(), LcpError> {
        let n = self.q.len();
        if self.m.nrows() != n || self.m.ncols() != n {
            return Err(LcpError::Malformed(format!(
                "M is {}x{} but q has length {}",
                self.m.nrows(),
                self.m.ncols(),
                n
            )));
        }
        if self.labels.len() != n {
            return Err(LcpError::Malformed(format!(
                "{} labels for {} variables",
                self.labels.len(),
                n
            )));
        }
        let mut sorted = self.labels.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(LcpError::Malformed("duplicate variable label".into()));
        }
        if self.m.iter().chain(self.q.iter()).any(|v| !v.is_finite()) {
            return Err(LcpError::Malformed("non-finite entry".into()));
        }
        Ok(())
    }

    /// `w = Mx + q`.
    pub fn slack(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.m * x + &self.q
    }

    /// Position of a label, if present.
    pub fn index_of(&self, label: VarLabel) -> Option<usize> {
        self.labels.iter().position(|l| *l == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LcpStatus {
    Solved,
    RayTermination,
    IterationLimit,
}

/// Which of `x_i` / `w_i` is basic in a complementary basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasicVar {
    X,
    W,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcpSolution {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub status: LcpStatus,
    /// Complementary basis the solution was read from.
    pub basis: Vec<BasicVar>,
    pub pivots: usize,
}

impl LcpSolution {
    /// Checks `x >= -tol`, `w >= -tol` and `|x'w| <= tol (1 + |x| |w|)`.
    pub fn satisfies(&self, tol: f64) -> bool {
        let xn = linalg::norm_inf(&self.x);
        let wn = linalg::norm_inf(&self.w);
        let dot: f64 = self.x.iter().zip(&self.w).map(|(a, b)| a * b).sum();
        self.x.iter().all(|&v| v >= -tol)
            && self.w.iter().all(|&v| v >= -tol)
            && dot.abs() <= tol * (1.0 + xn * wn)
    }

    /// Largest `|Mx + q - w|`, for checking a solution against its instance.
    pub fn residual(&self, inst: &LcpInstance) -> f64 {
        let x = DVector::from_column_slice(&self.x);
        let w = inst.slack(&x);
        w.iter()
            .zip(&self.w)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Row-major dense matrix with explicit dimensions, as written to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for DenseMatrix {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl From<&DenseMatrix> for DMatrix<f64> {
    fn from(d: &DenseMatrix) -> Self {
        DMatrix::from_row_slice(d.rows, d.cols, &d.data)
    }
}

/// JSON form of an [`LcpInstance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcpInstanceRecord {
    pub dim: usize,
    pub m: DenseMatrix,
    pub q: Vec<f64>,
    pub labels: Vec<VarLabel>,
}

impl From<&LcpInstance> for LcpInstanceRecord {
    fn from(inst: &LcpInstance) -> Self {
        Self {
            dim: inst.dim(),
            m: DenseMatrix::from(&inst.m),
            q: inst.q.iter().copied().collect(),
            labels: inst.labels.clone(),
        }
    }
}

impl TryFrom<&LcpInstanceRecord> for LcpInstance {
    type Error = LcpError;

    fn try_from(r: &LcpInstanceRecord) -> Result<Self, LcpError> {
        if r.m.data.len() != r.m.rows * r.m.cols {
            return Err(LcpError::Malformed("matrix data length mismatch".into()));
        }
        LcpInstance::new(
            DMatrix::from(&r.m),
            DVector::from_column_slice(&r.q),
            r.labels.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_shape_mismatch() {
        let err = LcpInstance::unlabeled(DMatrix::identity(2, 2), DVector::zeros(3)).unwrap_err();
        assert!(matches!(err, LcpError::Malformed(_)));
    }

    #[test]
    fn rejects_duplicate_labels() {
        let labels = vec![VarLabel::generic(0), VarLabel::generic(0)];
        let err = LcpInstance::new(DMatrix::identity(2, 2), DVector::zeros(2), labels).unwrap_err();
        assert!(matches!(err, LcpError::Malformed(_)));
    }

    #[test]
    fn record_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let inst = LcpInstance::unlabeled(m, DVector::from_vec(vec![-1.0, 0.5])).unwrap();
        let rec = LcpInstanceRecord::from(&inst);
        assert_eq!(rec.m.data, vec![1.0, 2.0, 3.0, 4.0]);
        let json = serde_json::to_string(&rec).unwrap();
        let back: LcpInstanceRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(LcpInstance::try_from(&back).unwrap(), inst);
    }
}
