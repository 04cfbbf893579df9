//! Lemke's complementary pivoting method.
//!
//! Works on the dense tableau `[I | -M | -d | q]` with covering vector
//! `d = 1`. The leaving row is chosen by the lexicographic minimum ratio
//! over `(q_bar, B^-1)`, which keeps every tableau row lexicographically
//! positive and rules out cycling on degenerate instances. Keys within a
//! relative threshold count as tied; a row holding the artificial variable
//! wins a tie on the plain ratio, remaining ties go to the lowest row index.
//! A run ending on a ray is repeated with a tighter and then a looser
//! threshold before the ray is reported.
//!
//! Once the artificial variable leaves, the final complementary basis is
//! re-solved against the original `(M, q)` with an LU factorisation, so the
//! returned values do not carry the accumulated pivoting error.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BasicVar, LcpError, LcpInstance, LcpSolution, LcpStatus};

/// Relative differences below which two ratio-test keys count as tied,
/// tried in order until a run ends in a solution. Tableau entries carry
/// rounding error far above machine precision after a few dozen pivots on
/// market matrices, so exact ties must be recognised with a loose
/// threshold or the lexicographic rule picks the wrong row; ties that
/// exist only up to rounding of the input are sometimes resolved correctly
/// only by a tighter or looser threshold.
const TIE_TOLERANCES: [f64; 3] = [1e-9, 1e-12, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Complementarity / feasibility tolerance for the returned solution.
    pub tolerance: f64,
    /// Smallest tableau entry accepted as a pivot.
    pub pivot_tolerance: f64,
    /// Pivot budget; `None` means `50 n`.
    pub max_pivots: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-9, pivot_tolerance: 1e-11, max_pivots: None }
    }
}

impl SolverOptions {
    pub fn pivot_limit(&self, n: usize) -> usize {
        self.max_pivots.unwrap_or(50 * n.max(1))
    }
}

struct Tableau {
    n: usize,
    /// `n x (2n + 1)`: columns `0..n` are `w`, `n..2n` are `z`, `2n` is `z0`.
    t: DMatrix<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    tie_tol: f64,
}

impl Tableau {
    fn new(inst: &LcpInstance, tie_tol: f64) -> Self {
        let n = inst.dim();
        let mut t = DMatrix::zeros(n, 2 * n + 1);
        for i in 0..n {
            t[(i, i)] = 1.0;
            for j in 0..n {
                t[(i, n + j)] = -inst.m[(i, j)];
            }
            t[(i, 2 * n)] = -1.0;
        }
        Self { n, t, rhs: inst.q.iter().copied().collect(), basis: (0..n).collect(), tie_tol }
    }

    fn z0(&self) -> usize {
        2 * self.n
    }

    fn complement(&self, col: usize) -> usize {
        if col < self.n {
            col + self.n
        } else {
            col - self.n
        }
    }

    /// Row `r` of `[q_bar, B^-1]` scaled by `1 / a_r`, compared entry by entry.
    fn lex_cmp(&self, r: usize, ar: f64, s: usize, as_: f64) -> Ordering {
        let key = |row: usize, a: f64, k: usize| -> f64 {
            if k == 0 {
                self.rhs[row] / a
            } else {
                self.t[(row, k - 1)] / a
            }
        };
        for k in 0..=self.n {
            let (x, y) = (key(r, ar, k), key(s, as_, k));
            let scale = 1.0_f64.max(x.abs()).max(y.abs());
            if (x - y).abs() > self.tie_tol * scale {
                return x.partial_cmp(&y).unwrap_or(Ordering::Equal);
            }
        }
        Ordering::Equal
    }

    /// Lexicographic minimum ratio row for entering column `col`. When the
    /// row holding `z0` ties on the plain ratio it is chosen, which ends the
    /// run; rounding can otherwise split a genuine tie the wrong way.
    fn ratio_test(&self, col: usize, piv_tol: f64) -> Option<usize> {
        let z0_row = self.basis.iter().position(|&b| b == self.z0());
        let mut best: Option<usize> = None;
        for r in 0..self.n {
            let a = self.t[(r, col)];
            if a <= piv_tol {
                continue;
            }
            best = match best {
                None => Some(r),
                Some(b) => {
                    // strictly smaller wins; ties keep the lower index
                    if self.lex_cmp(r, a, b, self.t[(b, col)]) == Ordering::Less {
                        Some(r)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        if let (Some(b), Some(z)) = (best, z0_row) {
            let a = self.t[(z, col)];
            if b != z && a > piv_tol {
                let (rb, rz) = (self.rhs[b] / self.t[(b, col)], self.rhs[z] / a);
                if (rz - rb).abs() <= self.tie_tol * 1.0_f64.max(rb.abs()).max(rz.abs()) {
                    return Some(z);
                }
            }
        }
        best
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[(row, col)];
        let width = self.t.ncols();
        for j in 0..width {
            self.t[(row, j)] /= p;
        }
        self.rhs[row] /= p;
        for i in 0..self.n {
            if i == row {
                continue;
            }
            let f = self.t[(i, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..width {
                let v = self.t[(row, j)];
                if v != 0.0 {
                    self.t[(i, j)] -= f * v;
                }
            }
            self.rhs[i] -= f * self.rhs[row];
            self.t[(i, col)] = 0.0;
        }
        self.basis[row] = col;
    }
}

/// Solves `LCP(M, q)` by complementary pivoting.
///
/// Returns [`LcpError::RayTermination`] when every run ends on an entering
/// column without an admissible pivot (the instance may be infeasible, or
/// `M` lies outside the class Lemke's method processes) and
/// [`LcpError::IterationLimit`] when the pivot budget runs out.
pub fn solve_lcp(inst: &LcpInstance, opts: &SolverOptions) -> Result<LcpSolution, LcpError> {
    inst.validate()?;
    let n = inst.dim();

    if inst.q.iter().all(|&v| v >= 0.0) {
        return Ok(LcpSolution {
            x: vec![0.0; n],
            w: inst.q.iter().copied().collect(),
            status: LcpStatus::Solved,
            basis: vec![BasicVar::W; n],
            pivots: 0,
        });
    }

    let mut first_err = None;
    for &tie_tol in &TIE_TOLERANCES {
        match run(inst, opts, tie_tol) {
            Ok(sol) => return Ok(sol),
            Err(e @ LcpError::RayTermination { .. }) => {
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(first_err.expect("at least one attempt"))
}

/// One complementary pivoting run with the given tie threshold.
fn run(inst: &LcpInstance, opts: &SolverOptions, tie_tol: f64) -> Result<LcpSolution, LcpError> {
    let n = inst.dim();
    let mut tab = Tableau::new(inst, tie_tol);
    let limit = opts.pivot_limit(n);

    // z0 enters at the row with the lexicographically smallest (q_r, e_r);
    // the column is -1 everywhere so this is the same rule with a = -1.
    let mut row = 0;
    for r in 1..n {
        if tab.lex_cmp(r, 1.0, row, 1.0) == Ordering::Less {
            row = r;
        }
    }
    let mut entering = tab.z0();
    let mut pivots = 0usize;

    loop {
        let leaving = tab.basis[row];
        tab.pivot(row, entering);
        pivots += 1;
        if leaving == tab.z0() {
            break;
        }
        if pivots >= limit {
            return Err(LcpError::IterationLimit { limit });
        }
        entering = tab.complement(leaving);
        row = match tab.ratio_test(entering, opts.pivot_tolerance) {
            Some(r) => r,
            None => return Err(LcpError::RayTermination { pivots }),
        };
    }

    let basis: Vec<BasicVar> = (0..n)
        .map(|i| if tab.basis.contains(&(n + i)) { BasicVar::X } else { BasicVar::W })
        .collect();

    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for (r, &col) in tab.basis.iter().enumerate() {
        if col < n {
            w[col] = tab.rhs[r];
        } else if col < 2 * n {
            x[col - n] = tab.rhs[r];
        }
    }
    let mut sol = LcpSolution { x, w, status: LcpStatus::Solved, basis, pivots };
    if let Some((x, w)) = resolve_basis(inst, &sol.basis) {
        let refined = LcpSolution { x, w, ..sol.clone() };
        if refined.residual(inst) <= sol.residual(inst) {
            sol = refined;
        }
    }
    Ok(sol)
}

/// Solves the complementary basis system `w - Mx = q` with nonbasic
/// variables fixed at zero. Nonbasic entries come back as exact zeros.
pub(crate) fn resolve_basis(inst: &LcpInstance, basis: &[BasicVar]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = inst.dim();
    let mut b = DMatrix::zeros(n, n);
    for (j, bv) in basis.iter().enumerate() {
        match bv {
            BasicVar::W => b[(j, j)] = 1.0,
            BasicVar::X => {
                for i in 0..n {
                    b[(i, j)] = -inst.m[(i, j)];
                }
            }
        }
    }
    let v: DVector<f64> = b.lu().solve(&inst.q)?;
    if v.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for (j, bv) in basis.iter().enumerate() {
        match bv {
            BasicVar::W => w[j] = v[j],
            BasicVar::X => x[j] = v[j],
        }
    }
    Some((x, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(m: &[f64], q: &[f64]) -> LcpInstance {
        let n = q.len();
        LcpInstance::unlabeled(DMatrix::from_row_slice(n, n, m), DVector::from_column_slice(q)).unwrap()
    }

    #[test]
    fn scalar_case() {
        let sol = solve_lcp(&inst(&[1.0], &[-2.0]), &SolverOptions::default()).unwrap();
        assert_eq!(sol.x, vec![2.0]);
        assert_eq!(sol.w, vec![0.0]);
        assert_eq!(sol.basis, vec![BasicVar::X]);
    }

    #[test]
    fn nonnegative_q_gives_zero() {
        let sol = solve_lcp(&inst(&[1.0, 0.0, 0.0, 1.0], &[1.0, 1.0]), &SolverOptions::default()).unwrap();
        assert_eq!(sol.x, vec![0.0, 0.0]);
        assert_eq!(sol.w, vec![1.0, 1.0]);
        assert_eq!(sol.pivots, 0);
    }

    #[test]
    fn two_by_two_p_matrix() {
        // x = M^-1 (-q) = (1, 1) for M = [[2,1],[1,2]], q = (-3,-3)
        let sol = solve_lcp(&inst(&[2.0, 1.0, 1.0, 2.0], &[-3.0, -3.0]), &SolverOptions::default()).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
        assert!(sol.satisfies(1e-9));
    }

    #[test]
    fn infeasible_instance_ray_terminates() {
        // w = -x - 1 can never be nonnegative
        let err = solve_lcp(&inst(&[-1.0], &[-1.0]), &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, LcpError::RayTermination { .. }));
    }

    #[test]
    fn skew_lp_kkt_is_solved() {
        // min x s.t. x >= 1  ->  M = [[0,-1],[1,0]], q = [1,-1]; x = 1, dual = 1
        let sol = solve_lcp(&inst(&[0.0, -1.0, 1.0, 0.0], &[1.0, -1.0]), &SolverOptions::default()).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_ties_are_deterministic() {
        let i = inst(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[-1.0, -1.0, -1.0]);
        let a = solve_lcp(&i, &SolverOptions::default()).unwrap();
        let b = solve_lcp(&i, &SolverOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn pivot_budget_is_enforced() {
        let i = inst(&[2.0, 1.0, 1.0, 2.0], &[-3.0, -3.0]);
        let opts = SolverOptions { max_pivots: Some(1), ..Default::default() };
        assert!(matches!(solve_lcp(&i, &opts), Err(LcpError::IterationLimit { limit: 1 })));
    }
}
