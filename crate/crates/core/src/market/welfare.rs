//! Independent social-welfare LP used to cross-check the complementarity
//! solution.
//!
//! Built directly from the case rather than from the assembled LCP, and
//! with a different network formulation: explicit line-flow variables,
//! equality nodal balance and one Kirchhoff voltage-law row per line
//! (`flow_l = base B_l (theta_f - theta_t)`). Prices are the multipliers
//! of the balance equalities.

use serde::{Deserialize, Serialize};

use super::{MarketCase, MarketError, ValidationOptions};
use crate::lp::{solve_lp, LinearProgram, LpError, LpOptions, Relation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareLpSolution {
    pub generation_mw: Vec<Vec<f64>>,
    pub consumption_mw: Vec<Vec<f64>>,
    pub lmp: Vec<f64>,
    pub line_flows_mw: Vec<f64>,
    /// Dispatchable social welfare at the optimum, $/h.
    pub welfare_per_h: f64,
    pub pivots: usize,
}

pub fn solve_welfare_lp(case: &MarketCase, opts: &LpOptions) -> Result<WelfareLpSolution, MarketError> {
    case.validate(&ValidationOptions::default())?;
    let net = &case.network;
    let nb = net.buses.len();
    let nl = net.lines.len();
    let bus = |n: usize| net.bus_index(n).expect("validated bus reference");

    // variable layout
    let mut nv = 0;
    let mut alloc = |k: usize| {
        let start = nv;
        nv += k;
        start
    };
    let gen_off: Vec<usize> = case.generators.iter().map(|g| alloc(g.blocks.len())).collect();
    let dem_off: Vec<usize> = case.demands.iter().map(|d| alloc(d.blocks.len())).collect();
    let flow_pos = alloc(nl);
    let flow_neg = alloc(nl);
    let theta_pos = alloc(nb);
    let theta_neg = alloc(nb);

    let mut cost = vec![0.0; nv];
    for (i, g) in case.generators.iter().enumerate() {
        for b in 0..g.blocks.len() {
            cost[gen_off[i] + b] = case.gen_bid(i, b);
        }
    }
    for (j, d) in case.demands.iter().enumerate() {
        for k in 0..d.blocks.len() {
            cost[dem_off[j] + k] = -case.demand_bid(j, k);
        }
    }
    let mut lp = LinearProgram::new(cost);

    for (i, g) in case.generators.iter().enumerate() {
        for (b, blk) in g.blocks.iter().enumerate() {
            lp.add_sparse(&[(gen_off[i] + b, 1.0)], Relation::Le, blk.size_mw);
        }
        let all: Vec<(usize, f64)> = (0..g.blocks.len()).map(|b| (gen_off[i] + b, 1.0)).collect();
        lp.add_sparse(&all, Relation::Le, g.unit_capacity_mw);
    }
    for (j, d) in case.demands.iter().enumerate() {
        for (k, blk) in d.blocks.iter().enumerate() {
            lp.add_sparse(&[(dem_off[j] + k, 1.0)], Relation::Le, blk.size_mw);
        }
        let all: Vec<(usize, f64)> = (0..d.blocks.len()).map(|k| (dem_off[j] + k, 1.0)).collect();
        lp.add_sparse(&all, Relation::Ge, d.min_demand_mw);
    }
    let mut balance_rows = Vec::with_capacity(nb);
    for n in 0..nb {
        let mut e = Vec::new();
        for (i, g) in case.generators.iter().enumerate() {
            if bus(g.bus) == n {
                e.extend((0..g.blocks.len()).map(|b| (gen_off[i] + b, 1.0)));
            }
        }
        for (j, d) in case.demands.iter().enumerate() {
            if bus(d.bus) == n {
                e.extend((0..d.blocks.len()).map(|k| (dem_off[j] + k, -1.0)));
            }
        }
        for (l, line) in net.lines.iter().enumerate() {
            let s = if bus(line.from) == n {
                -1.0
            } else if bus(line.to) == n {
                1.0
            } else {
                continue;
            };
            e.push((flow_pos + l, s));
            e.push((flow_neg + l, -s));
        }
        balance_rows.push(lp.add_sparse(&e, Relation::Eq, 0.0));
    }
    for (l, line) in net.lines.iter().enumerate() {
        lp.add_sparse(&[(flow_pos + l, 1.0)], Relation::Le, line.capacity_mw);
        lp.add_sparse(&[(flow_neg + l, 1.0)], Relation::Le, line.capacity_mw);
        let k = net.mva_base * line.susceptance_pu();
        let (f, t) = (bus(line.from), bus(line.to));
        let e = [
            (flow_pos + l, 1.0),
            (flow_neg + l, -1.0),
            (theta_pos + f, -k),
            (theta_neg + f, k),
            (theta_pos + t, k),
            (theta_neg + t, -k),
        ];
        lp.add_sparse(&e, Relation::Eq, 0.0);
    }
    let r = net.reference_index().expect("validated reference bus");
    lp.add_sparse(&[(theta_pos + r, 1.0)], Relation::Eq, 0.0);
    lp.add_sparse(&[(theta_neg + r, 1.0)], Relation::Eq, 0.0);

    let sol = solve_lp(&lp, opts).map_err(|e| match e {
        LpError::Infeasible { .. } => MarketError::Infeasible("welfare LP infeasible".into()),
        other => MarketError::Lp(other),
    })?;
    let generation_mw: Vec<Vec<f64>> =
        case.generators.iter().enumerate().map(|(i, g)| (0..g.blocks.len()).map(|b| sol.x[gen_off[i] + b]).collect()).collect();
    let consumption_mw: Vec<Vec<f64>> =
        case.demands.iter().enumerate().map(|(j, d)| (0..d.blocks.len()).map(|k| sol.x[dem_off[j] + k]).collect()).collect();
    let mut welfare = 0.0;
    for (j, d) in case.demands.iter().enumerate() {
        if d.dispatchable {
            welfare += consumption_mw[j].iter().enumerate().map(|(k, p)| case.demand_bid(j, k) * p).sum::<f64>();
        }
    }
    for (i, g) in generation_mw.iter().enumerate() {
        welfare -= g.iter().enumerate().map(|(b, p)| case.gen_bid(i, b) * p).sum::<f64>();
    }
    Ok(WelfareLpSolution {
        generation_mw,
        consumption_mw,
        lmp: balance_rows.iter().map(|&r| sol.duals[r]).collect(),
        line_flows_mw: (0..nl).map(|l| sol.x[flow_pos + l] - sol.x[flow_neg + l]).collect(),
        welfare_per_h: welfare,
        pivots: sol.pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    #[test]
    fn congested_two_bus() {
        let s = solve_welfare_lp(&two_bus(5.0), &LpOptions::default()).unwrap();
        assert!((s.lmp[0] - 20.0).abs() < 1e-9);
        assert!((s.lmp[1] - 50.0).abs() < 1e-9);
        assert!((s.line_flows_mw[0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn one_bus_welfare() {
        let s = solve_welfare_lp(&one_bus(), &LpOptions::default()).unwrap();
        assert!((s.welfare_per_h - 50.0).abs() < 1e-9);
        assert!((s.lmp[0] - 20.0).abs() < 1e-9);
    }
}
