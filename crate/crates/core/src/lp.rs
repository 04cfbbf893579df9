//! Dense two-phase primal simplex with Bland's rule.
//!
//! Small and deliberately plain: it backs the social-welfare LP used as a
//! fallback and cross-check for the complementarity solver, and the
//! per-player best-response problems. Problems are stated as
//! `min c^T x` subject to rows `a_i^T x (<=|>=|=) b_i` and `x >= 0`.
//!
//! Bland's rule (lowest-index entering column, lowest-index leaving
//! variable among ratio ties) makes the pivot sequence, and therefore the
//! optimal basis reported on degenerate problems, deterministic.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    /// Minimised objective.
    pub cost: Vec<f64>,
    pub rows: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(cost: Vec<f64>) -> Self {
        Self { cost, rows: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> usize {
        self.rows.push(Constraint { coeffs, relation, rhs });
        self.rows.len() - 1
    }

    /// Sparse form of [`LinearProgram::add`].
    pub fn add_sparse(&mut self, entries: &[(usize, f64)], relation: Relation, rhs: f64) -> usize {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(j, v) in entries {
            coeffs[j] += v;
        }
        self.add(coeffs, relation, rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpOptions {
    pub tolerance: f64,
    /// `None` means `50 (rows + columns) + 1000`.
    pub max_pivots: Option<usize>,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self { tolerance: 1e-9, max_pivots: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per row with the sign convention of `min`:
    /// `>=` rows have nonnegative duals, `<=` rows nonpositive, `=` rows free.
    /// Rows found to be redundant get a zero dual.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("linear program is infeasible (phase-one residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("linear program is unbounded along column {column}")]
    Unbounded { column: usize },
    #[error("simplex pivot budget of {limit} exhausted")]
    IterationLimit { limit: usize },
    #[error("malformed linear program: {0}")]
    Malformed(String),
}

struct Simplex {
    /// `(m + 1) x (cols + 1)`; the last row is the objective, the last column the rhs.
    t: DMatrix<f64>,
    basis: Vec<usize>,
    m: usize,
    cols: usize,
    tol: f64,
    pivots: usize,
    limit: usize,
}

impl Simplex {
    fn rhs(&self, r: usize) -> f64 {
        self.t[(r, self.cols)]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[(row, col)];
        let width = self.cols + 1;
        for j in 0..width {
            self.t[(row, j)] /= p;
        }
        for i in 0..=self.m {
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
            self.t[(i, col)] = 0.0;
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Runs Bland's rule over the columns for which `allowed` holds.
    fn optimise(&mut self, allowed: &dyn Fn(usize) -> bool) -> Result<(), LpError> {
        loop {
            if self.pivots >= self.limit {
                return Err(LpError::IterationLimit { limit: self.limit });
            }
            let entering = (0..self.cols).find(|&j| allowed(j) && self.t[(self.m, j)] < -self.tol);
            let Some(col) = entering else { return Ok(()) };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.t[(r, col)];
                if a <= self.tol {
                    continue;
                }
                let ratio = self.rhs(r) / a;
                best = match best {
                    None => Some((r, ratio)),
                    Some((b, br)) => {
                        let scale = 1.0_f64.max(ratio.abs()).max(br.abs());
                        if ratio < br - self.tol * scale
                            || ((ratio - br).abs() <= self.tol * scale && self.basis[r] < self.basis[b])
                        {
                            Some((r, ratio))
                        } else {
                            Some((b, br))
                        }
                    }
                };
            }
            match best {
                Some((row, _)) => self.pivot(row, col),
                None => return Err(LpError::Unbounded { column: col }),
            }
        }
    }
}

pub fn solve_lp(lp: &LinearProgram, opts: &LpOptions) -> Result<LpSolution, LpError> {
    let n = lp.num_vars();
    for (i, row) in lp.rows.iter().enumerate() {
        if row.coeffs.len() != n {
            return Err(LpError::Malformed(format!("row {i} has {} coefficients, expected {n}", row.coeffs.len())));
        }
        if !row.rhs.is_finite() || row.coeffs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::Malformed(format!("row {i} has a non-finite entry")));
        }
    }
    if lp.cost.iter().any(|v| !v.is_finite()) {
        return Err(LpError::Malformed("non-finite cost".into()));
    }

    let m = lp.rows.len();
    if m == 0 {
        // Only the sign constraints remain.
        return match lp.cost.iter().position(|&c| c < 0.0) {
            Some(column) => Err(LpError::Unbounded { column }),
            None => Ok(LpSolution { x: vec![0.0; n], objective: 0.0, duals: Vec::new(), pivots: 0 }),
        };
    }

    // Normalise every row to a nonnegative right-hand side.
    let mut flipped = vec![false; m];
    let mut rel = Vec::with_capacity(m);
    for (i, row) in lp.rows.iter().enumerate() {
        let r = if row.rhs < 0.0 {
            flipped[i] = true;
            match row.relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            }
        } else {
            row.relation
        };
        rel.push(r);
    }
    let n_slack = rel.iter().filter(|r| **r != Relation::Eq).count();
    let n_art = rel.iter().filter(|r| **r != Relation::Le).count();
    let cols = n + n_slack + n_art;
    let art_start = n + n_slack;

    // Standard-form matrix (kept for the dual solve) and the tableau.
    let mut a_std = DMatrix::<f64>::zeros(m, cols);
    let mut b_std = DVector::<f64>::zeros(m);
    let mut basis = vec![0; m];
    let (mut s, mut a) = (n, art_start);
    for (i, row) in lp.rows.iter().enumerate() {
        let sign = if flipped[i] { -1.0 } else { 1.0 };
        for j in 0..n {
            a_std[(i, j)] = sign * row.coeffs[j];
        }
        b_std[i] = sign * row.rhs;
        match rel[i] {
            Relation::Le => {
                a_std[(i, s)] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Relation::Ge => {
                a_std[(i, s)] = -1.0;
                s += 1;
                a_std[(i, a)] = 1.0;
                basis[i] = a;
                a += 1;
            }
            Relation::Eq => {
                a_std[(i, a)] = 1.0;
                basis[i] = a;
                a += 1;
            }
        }
    }

    let mut t = DMatrix::<f64>::zeros(m + 1, cols + 1);
    t.view_mut((0, 0), (m, cols)).copy_from(&a_std);
    for i in 0..m {
        t[(i, cols)] = b_std[i];
    }
    // phase-one objective: sum of artificials, expressed in nonbasic terms
    for i in 0..m {
        if basis[i] >= art_start {
            for j in 0..=cols {
                if j < art_start || j == cols {
                    t[(m, j)] -= t[(i, j)];
                }
            }
        }
    }
    let scale = 1.0 + b_std.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let limit = opts.max_pivots.unwrap_or(50 * (m + cols) + 1000);
    let mut sx = Simplex { t, basis, m, cols, tol: opts.tolerance, pivots: 0, limit };

    if n_art > 0 {
        sx.optimise(&|_| true)?;
        let residual = -sx.t[(m, cols)];
        if residual > opts.tolerance * scale {
            return Err(LpError::Infeasible { residual });
        }
        // drive zero-level artificials out of the basis; rows where that is
        // impossible are linearly dependent on the others
        let mut redundant = vec![false; m];
        for (r, dependent) in redundant.iter_mut().enumerate() {
            if sx.basis[r] < art_start {
                continue;
            }
            match (0..art_start).find(|&j| sx.t[(r, j)].abs() > opts.tolerance) {
                Some(j) => sx.pivot(r, j),
                None => *dependent = true,
            }
        }
        if redundant.iter().any(|&x| x) {
            let keep: Vec<usize> = (0..m).filter(|&r| !redundant[r]).collect();
            let mut t2 = DMatrix::<f64>::zeros(keep.len() + 1, cols + 1);
            for (k, &r) in keep.iter().enumerate() {
                t2.set_row(k, &sx.t.row(r));
            }
            sx.basis = keep.iter().map(|&r| sx.basis[r]).collect();
            sx.t = t2;
            sx.m = keep.len();
            return phase_two(sx, lp, &a_std, &flipped, Some(keep), art_start, n);
        }
    }
    phase_two(sx, lp, &a_std, &flipped, None, art_start, n)
}

fn phase_two(
    mut sx: Simplex,
    lp: &LinearProgram,
    a_std: &DMatrix<f64>,
    flipped: &[bool],
    keep: Option<Vec<usize>>,
    art_start: usize,
    n: usize,
) -> Result<LpSolution, LpError> {
    let m = sx.m;
    let cols = sx.cols;
    let cost = |j: usize| if j < n { lp.cost[j] } else { 0.0 };
    // objective row: reduced costs c_j - c_B^T B^-1 A_j and -c_B^T x_B
    for j in 0..=cols {
        let mut v = if j < cols { cost(j) } else { 0.0 };
        for r in 0..m {
            v -= cost(sx.basis[r]) * sx.t[(r, j)];
        }
        sx.t[(m, j)] = v;
    }
    sx.optimise(&|j| j < art_start)?;

    let mut x = vec![0.0; n];
    for r in 0..m {
        if sx.basis[r] < n {
            x[sx.basis[r]] = sx.rhs(r).max(0.0);
        }
    }
    let objective = lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum();

    // duals from B^T y = c_B on the original standard-form rows
    let rows: Vec<usize> = keep.unwrap_or_else(|| (0..m).collect());
    let mut bmat = DMatrix::<f64>::zeros(m, m);
    let mut cb = DVector::<f64>::zeros(m);
    for (k, &col) in sx.basis.iter().enumerate() {
        for (i, &r) in rows.iter().enumerate() {
            bmat[(i, k)] = a_std[(r, col)];
        }
        cb[k] = cost(col);
    }
    let y = bmat.transpose().lu().solve(&cb).unwrap_or_else(|| DVector::zeros(m));
    let mut duals = vec![0.0; lp.rows.len()];
    for (i, &r) in rows.iter().enumerate() {
        duals[r] = if flipped[r] { -y[i] } else { y[i] };
    }
    Ok(LpSolution { x, objective, duals, pivots: sx.pivots })
}
