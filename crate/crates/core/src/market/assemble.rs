//! Assembly of the market equilibrium conditions into `LCP(M, q)`.
//!
//! Every participant's problem is linear, so the joint optimality system is
//! the KKT system of one linear program
//!
//! ```text
//! min  c^T p   s.t.  A p >= b,  p >= 0
//! ```
//!
//! over the primal quantities `p = (P_G, P_D, delta+, delta-)`, with one
//! multiplier per row of `A`. Stacking `x = (p, y)` gives
//!
//! ```text
//! M = [ 0  -A^T ]      q = [  c ]
//!     [ A    0  ]          [ -b ]
//! ```
//!
//! so `w = Mx + q` holds the reduced costs `c - A^T y` and the row slacks
//! `A p - b`. The rows of `A`, in multiplier order, are
//!
//! | multiplier | row                                                          |
//! |------------|--------------------------------------------------------------|
//! | `alpha_i`  | `-sum_b P_Gib >= -Pmax_Gi`                                   |
//! | `phi_ib`   | `-P_Gib >= -Pmax_Gib`                                        |
//! | `sigma_jk` | `-P_Djk >= -Pmax_Djk`                                        |
//! | `psi_j`    | `sum_k P_Djk >= Pmin_Dj`                                     |
//! | `rho_n`    | `gen_n - load_n - base sum_m B_nm (delta_n - delta_m) >= 0` |
//! | `gamma+_l` | `-flow_l >= -cap_l`                                          |
//! | `gamma-_l` | `flow_l >= -cap_l`                                           |
//!
//! The generator reduced cost is then `lambda_G + alpha_i + phi_ib - rho_n`
//! and the demand one `-lambda_D + sigma_jk - psi_j + rho_n`. Bus angles are
//! split into nonnegative parts and the reference bus is left out, pinning
//! its angle to zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{MarketCase, MarketError, ValidationOptions};
use crate::lcp::{LcpInstance, VarKind, VarLabel};

/// Index map from market quantities to LCP variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcpLayout {
    pub gen_block: Vec<Vec<usize>>,
    pub demand_block: Vec<Vec<usize>>,
    /// Per bus; `None` for the reference bus.
    pub angle_pos: Vec<Option<usize>>,
    pub angle_neg: Vec<Option<usize>>,
    pub unit_capacity: Vec<usize>,
    pub block_capacity: Vec<Vec<usize>>,
    pub demand_max: Vec<Vec<usize>>,
    pub demand_min: Vec<usize>,
    pub balance: Vec<usize>,
    /// Per line: (from->to limit, to->from limit).
    pub line_limit: Vec<(usize, usize)>,
    /// Number of primal variables; multipliers start here.
    pub primal_len: usize,
    pub dim: usize,
    /// Bus position of every line end.
    pub line_ends: Vec<(usize, usize)>,
    pub gen_bus: Vec<usize>,
    pub demand_bus: Vec<usize>,
}

/// `min c^T p, A p >= b, p >= 0` — the linear program behind the LCP.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledMarket {
    pub instance: LcpInstance,
    pub layout: LcpLayout,
    pub linear: LinearForm,
    pub warnings: Vec<String>,
}

struct Counter(usize);

impl Counter {
    fn take(&mut self) -> usize {
        self.0 += 1;
        self.0 - 1
    }
}

impl LcpLayout {
    fn build(case: &MarketCase) -> Self {
        let net = &case.network;
        let mut ctr = Counter(0);
        let gen_block: Vec<Vec<usize>> = case.generators.iter().map(|g| g.blocks.iter().map(|_| ctr.take()).collect()).collect();
        let demand_block: Vec<Vec<usize>> = case.demands.iter().map(|d| d.blocks.iter().map(|_| ctr.take()).collect()).collect();
        let angle_pos: Vec<Option<usize>> = net.buses.iter().map(|b| (!b.reference).then(|| ctr.take())).collect();
        let angle_neg: Vec<Option<usize>> = net.buses.iter().map(|b| (!b.reference).then(|| ctr.take())).collect();
        let primal_len = ctr.0;
        let unit_capacity = case.generators.iter().map(|_| ctr.take()).collect();
        let block_capacity = case.generators.iter().map(|g| g.blocks.iter().map(|_| ctr.take()).collect()).collect();
        let demand_max = case.demands.iter().map(|d| d.blocks.iter().map(|_| ctr.take()).collect()).collect();
        let demand_min = case.demands.iter().map(|_| ctr.take()).collect();
        let balance = net.buses.iter().map(|_| ctr.take()).collect();
        let line_limit = net.lines.iter().map(|_| (ctr.take(), ctr.take())).collect();
        let dim = ctr.0;
        let bus = |n: usize| net.bus_index(n).expect("validated bus reference");
        Self {
            gen_block,
            demand_block,
            angle_pos,
            angle_neg,
            unit_capacity,
            block_capacity,
            demand_max,
            demand_min,
            balance,
            line_limit,
            primal_len,
            dim,
            line_ends: net.lines.iter().map(|l| (bus(l.from), bus(l.to))).collect(),
            gen_bus: case.generators.iter().map(|g| bus(g.bus)).collect(),
            demand_bus: case.demands.iter().map(|d| bus(d.bus)).collect(),
        }
    }

    fn labels(&self) -> Vec<VarLabel> {
        let mut labels = vec![VarLabel::generic(0); self.dim];
        let mut put = |idx: usize, kind: VarKind, entity: usize, sub: usize| labels[idx] = VarLabel::new(kind, entity, sub);
        for (i, blocks) in self.gen_block.iter().enumerate() {
            for (b, &v) in blocks.iter().enumerate() {
                put(v, VarKind::GenBlock, i, b);
                put(self.block_capacity[i][b], VarKind::BlockCapacity, i, b);
            }
            put(self.unit_capacity[i], VarKind::UnitCapacity, i, 0);
        }
        for (j, blocks) in self.demand_block.iter().enumerate() {
            for (k, &v) in blocks.iter().enumerate() {
                put(v, VarKind::DemandBlock, j, k);
                put(self.demand_max[j][k], VarKind::DemandMax, j, k);
            }
            put(self.demand_min[j], VarKind::DemandMin, j, 0);
        }
        for n in 0..self.balance.len() {
            if let Some(v) = self.angle_pos[n] {
                put(v, VarKind::AnglePos, n, 0);
            }
            if let Some(v) = self.angle_neg[n] {
                put(v, VarKind::AngleNeg, n, 0);
            }
            put(self.balance[n], VarKind::Balance, n, 0);
        }
        for (l, &(f, r)) in self.line_limit.iter().enumerate() {
            put(f, VarKind::LineLimit, l, 0);
            put(r, VarKind::LineLimit, l, 1);
        }
        labels
    }

    /// Signed angle of every bus from an LCP vector.
    pub fn angles(&self, x: &[f64]) -> Vec<f64> {
        (0..self.balance.len())
            .map(|n| match (self.angle_pos[n], self.angle_neg[n]) {
                (Some(p), Some(m)) => x[p] - x[m],
                _ => 0.0,
            })
            .collect()
    }

    /// Row index of a multiplier inside `A`.
    pub fn row_of(&self, var: usize) -> usize {
        var - self.primal_len
    }
}

/// Builds `(M, q)` and the index map. `M` and `q` depend only on the case,
/// so identical cases give bit-identical instances.
pub fn assemble_lcp(case: &MarketCase, opts: &ValidationOptions) -> Result<AssembledMarket, MarketError> {
    let warnings = case.validate(opts)?;
    let layout = LcpLayout::build(case);
    let net = &case.network;
    let p = layout.primal_len;
    let rows = layout.dim - p;
    let base = net.mva_base;

    let mut a = DMatrix::<f64>::zeros(rows, p);
    let mut b = DVector::<f64>::zeros(rows);
    let mut c = DVector::<f64>::zeros(p);

    for (i, g) in case.generators.iter().enumerate() {
        let ra = layout.row_of(layout.unit_capacity[i]);
        b[ra] = -g.unit_capacity_mw;
        for (k, blk) in g.blocks.iter().enumerate() {
            let v = layout.gen_block[i][k];
            c[v] = case.gen_bid(i, k);
            a[(ra, v)] = -1.0;
            let rf = layout.row_of(layout.block_capacity[i][k]);
            a[(rf, v)] = -1.0;
            b[rf] = -blk.size_mw;
            a[(layout.row_of(layout.balance[layout.gen_bus[i]]), v)] += 1.0;
        }
    }
    for (j, d) in case.demands.iter().enumerate() {
        let rp = layout.row_of(layout.demand_min[j]);
        b[rp] = d.min_demand_mw;
        for (k, blk) in d.blocks.iter().enumerate() {
            let v = layout.demand_block[j][k];
            c[v] = -case.demand_bid(j, k);
            a[(rp, v)] = 1.0;
            let rs = layout.row_of(layout.demand_max[j][k]);
            a[(rs, v)] = -1.0;
            b[rs] = -blk.size_mw;
            a[(layout.row_of(layout.balance[layout.demand_bus[j]]), v)] -= 1.0;
        }
    }
    for (l, line) in net.lines.iter().enumerate() {
        let (f, t) = layout.line_ends[l];
        let k = base * line.susceptance_pu();
        // flow_l = k (delta_f - delta_t); export of f rises by flow, of t falls
        let (rf, rr) = (layout.row_of(layout.line_limit[l].0), layout.row_of(layout.line_limit[l].1));
        b[rf] = -line.capacity_mw;
        b[rr] = -line.capacity_mw;
        for (bus, sign) in [(f, 1.0), (t, -1.0)] {
            let (Some(vp), Some(vn)) = (layout.angle_pos[bus], layout.angle_neg[bus]) else { continue };
            for (var, s) in [(vp, sign), (vn, -sign)] {
                a[(rf, var)] -= k * s;
                a[(rr, var)] += k * s;
                a[(layout.row_of(layout.balance[f]), var)] -= k * s;
                a[(layout.row_of(layout.balance[t]), var)] += k * s;
            }
        }
    }

    let n = layout.dim;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for r in 0..rows {
        for j in 0..p {
            let v = a[(r, j)];
            if v != 0.0 {
                m[(p + r, j)] = v;
                m[(j, p + r)] = -v;
            }
        }
    }
    let mut q = DVector::<f64>::zeros(n);
    q.rows_mut(0, p).copy_from(&c);
    q.rows_mut(p, rows).copy_from(&(-&b));

    let instance = LcpInstance::new(m, q, layout.labels())?;
    Ok(AssembledMarket { instance, layout, linear: LinearForm { a, b, c }, warnings })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    #[test]
    fn dimensions_and_block_order() {
        let am = assemble_lcp(&two_bus(5.0), &ValidationOptions::default()).unwrap();
        let l = &am.layout;
        // 2 gen blocks, 1 demand block, 1+1 angles | 2 alpha, 2 phi, 1 sigma, 1 psi, 2 rho, 2 gamma
        assert_eq!(l.primal_len, 5);
        assert_eq!(l.dim, 15);
        let kinds: Vec<VarKind> = am.instance.labels.iter().map(|x| x.kind).collect();
        let first = |k: VarKind| kinds.iter().position(|&x| x == k).unwrap();
        let order = [
            VarKind::GenBlock,
            VarKind::DemandBlock,
            VarKind::AnglePos,
            VarKind::AngleNeg,
            VarKind::UnitCapacity,
            VarKind::BlockCapacity,
            VarKind::DemandMax,
            VarKind::DemandMin,
            VarKind::Balance,
            VarKind::LineLimit,
        ];
        assert!(order.windows(2).all(|w| first(w[0]) < first(w[1])));
    }

    #[test]
    fn m_is_skew_and_reproducible() {
        let c = two_bus(5.0);
        let a = assemble_lcp(&c, &ValidationOptions::default()).unwrap();
        let b = assemble_lcp(&c, &ValidationOptions::default()).unwrap();
        assert_eq!(a.instance, b.instance);
        let m = &a.instance.m;
        assert_eq!(m, &(-m.transpose()));
    }

    #[test]
    fn generator_stationarity_row() {
        // reduced cost of P_G1: 20 + alpha_1 + phi_11 - rho_1
        let am = assemble_lcp(&one_bus(), &ValidationOptions::default()).unwrap();
        let l = &am.layout;
        let g = l.gen_block[0][0];
        assert_eq!(am.instance.q[g], 20.0);
        assert_eq!(am.instance.m[(g, l.unit_capacity[0])], 1.0);
        assert_eq!(am.instance.m[(g, l.block_capacity[0][0])], 1.0);
        assert_eq!(am.instance.m[(g, l.balance[0])], -1.0);
    }
}
