//! Solving the assembled market and mapping the LCP vector back to named
//! quantities.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::assemble::{assemble_lcp, AssembledMarket, LcpLayout};
use super::{MarketCase, MarketError, ValidationOptions};
use crate::lcp::{solve_lcp, LcpError, LcpInstance, SolverOptions};
use crate::lp::{solve_lp, LinearProgram, LpError, LpOptions, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketOptions {
    pub solver: SolverOptions,
    pub lp: LpOptions,
    pub validation: ValidationOptions,
    /// Tolerance of the post-solve invariant checks, MW.
    pub verify_tolerance: f64,
    /// Fall back to the social-welfare LP when pivoting fails.
    pub lp_fallback: bool,
}

impl Default for MarketOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            lp: LpOptions::default(),
            validation: ValidationOptions::default(),
            verify_tolerance: 1e-6,
            lp_fallback: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionSource {
    Lemke,
    LpFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Duals {
    /// `alpha_i`, per generator.
    pub unit_capacity: Vec<f64>,
    /// `phi_ib`, per generator block.
    pub block_capacity: Vec<Vec<f64>>,
    /// `sigma_jk`, per demand block.
    pub demand_max: Vec<Vec<f64>>,
    /// `psi_j`, per demand.
    pub demand_min: Vec<f64>,
    /// `gamma_nm`, per line: (from->to, to->from).
    pub line_limit: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub generation_mw: Vec<Vec<f64>>,
    pub consumption_mw: Vec<Vec<f64>>,
    pub angles_rad: Vec<f64>,
    /// `rho_n`, per bus.
    pub lmp: Vec<f64>,
    pub line_flows_mw: Vec<f64>,
    pub duals: Duals,
    pub source: SolutionSource,
    pub pivots: usize,
    /// Full LCP vector in layout order.
    pub x: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl EquilibriumSolution {
    pub fn total_generation_mw(&self) -> f64 {
        self.generation_mw.iter().flatten().sum()
    }

    pub fn total_consumption_mw(&self) -> f64 {
        self.consumption_mw.iter().flatten().sum()
    }

    pub fn lmp_spread(&self) -> f64 {
        let max = self.lmp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.lmp.iter().copied().fold(f64::INFINITY, f64::min);
        if self.lmp.is_empty() {
            0.0
        } else {
            max - min
        }
    }

    /// Lines whose flow is within `tol` of capacity.
    pub fn binding_lines(&self, case: &MarketCase, tol: f64) -> Vec<usize> {
        self.line_flows_mw
            .iter()
            .zip(&case.network.lines)
            .enumerate()
            .filter(|(_, (f, l))| f.abs() >= l.capacity_mw - tol)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// Largest violation of `x >= 0`.
    pub primal_sign: f64,
    /// Largest violation of `Mx + q >= 0`.
    pub slack_sign: f64,
    /// Largest `|x_i w_i| / ((1 + |x_i|)(1 + |w_i|))`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal_sign.max(self.slack_sign).max(self.complementarity)
    }
}

pub fn kkt_residuals(inst: &LcpInstance, x: &[f64]) -> KktResiduals {
    let xv = DVector::from_column_slice(x);
    let w = inst.slack(&xv);
    let mut r = KktResiduals { primal_sign: 0.0, slack_sign: 0.0, complementarity: 0.0 };
    for (xi, wi) in x.iter().zip(w.iter()) {
        r.primal_sign = r.primal_sign.max(-xi);
        r.slack_sign = r.slack_sign.max(-wi);
        r.complementarity = r.complementarity.max((xi * wi).abs() / ((1.0 + xi.abs()) * (1.0 + wi.abs())));
    }
    r
}

fn lp_of(am: &AssembledMarket) -> LinearProgram {
    let lf = &am.linear;
    let mut lp = LinearProgram::new(lf.c.iter().copied().collect());
    for r in 0..lf.a.nrows() {
        lp.add(lf.a.row(r).iter().copied().collect(), Relation::Ge, lf.b[r]);
    }
    lp
}

fn solve_via_lp(am: &AssembledMarket, opts: &LpOptions) -> Result<(Vec<f64>, usize), MarketError> {
    let sol = solve_lp(&lp_of(am), opts).map_err(|e| match e {
        LpError::Infeasible { .. } => MarketError::Infeasible("no dispatch meets minimum demands within capacity".into()),
        other => MarketError::SolverFailure(other.to_string()),
    })?;
    let mut x = sol.x;
    x.extend(sol.duals.iter().map(|d| d.max(0.0)));
    Ok((x, sol.pivots))
}

pub fn solve_market(case: &MarketCase, opts: &MarketOptions) -> Result<EquilibriumSolution, MarketError> {
    let am = assemble_lcp(case, &opts.validation)?;
    solve_assembled(case, &am, opts)
}

pub fn solve_assembled(
    case: &MarketCase,
    am: &AssembledMarket,
    opts: &MarketOptions,
) -> Result<EquilibriumSolution, MarketError> {
    let mut diagnostics = am.warnings.clone();
    let (x, pivots, source) = match solve_lcp(&am.instance, &opts.solver) {
        Ok(sol) => (sol.x, sol.pivots, SolutionSource::Lemke),
        Err(e @ (LcpError::RayTermination { .. } | LcpError::IterationLimit { .. })) if opts.lp_fallback => {
            log::info!("complementary pivoting failed ({e}); solving the welfare LP instead");
            diagnostics.push(format!("pivoting failed: {e}"));
            let (x, p) = solve_via_lp(am, &opts.lp)?;
            (x, p, SolutionSource::LpFallback)
        }
        Err(LcpError::RayTermination { .. }) => {
            return Err(MarketError::Infeasible("complementary pivoting ended on a ray".into()))
        }
        Err(e) => return Err(MarketError::SolverFailure(e.to_string())),
    };
    let sol = map_solution(case, &am.layout, x, pivots, source, diagnostics);
    verify(case, am, &sol, opts)?;
    Ok(sol)
}

fn map_solution(
    case: &MarketCase,
    layout: &LcpLayout,
    x: Vec<f64>,
    pivots: usize,
    source: SolutionSource,
    mut diagnostics: Vec<String>,
) -> EquilibriumSolution {
    let pick = |idx: &Vec<Vec<usize>>| -> Vec<Vec<f64>> { idx.iter().map(|r| r.iter().map(|&i| x[i]).collect()).collect() };
    let angles = layout.angles(&x);
    let base = case.network.mva_base;
    let flows = case
        .network
        .lines
        .iter()
        .zip(&layout.line_ends)
        .map(|(l, &(f, t))| base * l.susceptance_pu() * (angles[f] - angles[t]))
        .collect();
    let lmp: Vec<f64> = layout.balance.iter().map(|&i| x[i]).collect();

    let mut load = vec![0.0; lmp.len()];
    for (j, blocks) in layout.demand_block.iter().enumerate() {
        load[layout.demand_bus[j]] += blocks.iter().map(|&i| x[i]).sum::<f64>();
    }
    for (n, (&p, &l)) in lmp.iter().zip(&load).enumerate() {
        if p <= 1e-9 && l > 1e-9 {
            diagnostics.push(format!("bus {}: price is zero with {l:.6} MW of local demand", case.network.buses[n].number));
        }
    }

    EquilibriumSolution {
        generation_mw: pick(&layout.gen_block),
        consumption_mw: pick(&layout.demand_block),
        angles_rad: angles,
        lmp,
        line_flows_mw: flows,
        duals: Duals {
            unit_capacity: layout.unit_capacity.iter().map(|&i| x[i]).collect(),
            block_capacity: pick(&layout.block_capacity),
            demand_max: pick(&layout.demand_max),
            demand_min: layout.demand_min.iter().map(|&i| x[i]).collect(),
            line_limit: layout.line_limit.iter().map(|&(a, b)| (x[a], x[b])).collect(),
        },
        source,
        pivots,
        x,
        diagnostics,
    }
}

/// Nodal balance residual of every bus: generation - consumption - export, MW.
pub(crate) fn balance_residuals(case: &MarketCase, layout: &LcpLayout, sol: &EquilibriumSolution) -> Vec<f64> {
    let mut r = vec![0.0; case.network.buses.len()];
    for (i, g) in sol.generation_mw.iter().enumerate() {
        r[layout.gen_bus[i]] += g.iter().sum::<f64>();
    }
    for (j, d) in sol.consumption_mw.iter().enumerate() {
        r[layout.demand_bus[j]] -= d.iter().sum::<f64>();
    }
    for (l, &(f, t)) in layout.line_ends.iter().enumerate() {
        r[f] -= sol.line_flows_mw[l];
        r[t] += sol.line_flows_mw[l];
    }
    r
}

fn verify(case: &MarketCase, am: &AssembledMarket, sol: &EquilibriumSolution, opts: &MarketOptions) -> Result<(), MarketError> {
    let tol = opts.verify_tolerance;
    let fail = |msg: String| Err(MarketError::SolverFailure(format!("equilibrium check failed: {msg}")));
    for (n, r) in balance_residuals(case, &am.layout, sol).iter().enumerate() {
        if r.abs() > tol {
            return fail(format!("bus {} balance residual {r:e} MW", case.network.buses[n].number));
        }
    }
    for (l, (f, line)) in sol.line_flows_mw.iter().zip(&case.network.lines).enumerate() {
        if f.abs() > line.capacity_mw + tol {
            return fail(format!("line {l} flow {f} exceeds {}", line.capacity_mw));
        }
    }
    for (g, unit) in sol.generation_mw.iter().zip(&case.generators) {
        for (p, b) in g.iter().zip(&unit.blocks) {
            if *p < -tol || *p > b.size_mw + tol {
                return fail(format!("{} block output {p} outside [0, {}]", unit.id, b.size_mw));
            }
        }
        if g.iter().sum::<f64>() > unit.unit_capacity_mw + tol {
            return fail(format!("{} exceeds unit capacity", unit.id));
        }
    }
    for (d, unit) in sol.consumption_mw.iter().zip(&case.demands) {
        for (p, b) in d.iter().zip(&unit.blocks) {
            if *p < -tol || *p > b.size_mw + tol {
                return fail(format!("{} block consumption {p} outside [0, {}]", unit.id, b.size_mw));
            }
        }
        if d.iter().sum::<f64>() < unit.min_demand_mw - tol {
            return fail(format!("{} below minimum demand", unit.id));
        }
    }
    let kkt = kkt_residuals(&am.instance, &sol.x);
    if kkt.max() > opts.solver.tolerance.max(1e-8) {
        return fail(format!("complementarity residual {:e}", kkt.max()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{DemandUnit, GenBlock, GeneratorKind, GeneratorUnit};
    use super::*;

    #[test]
    fn one_bus_hand_case() {
        let sol = solve_market(&one_bus(), &MarketOptions::default()).unwrap();
        assert!((sol.generation_mw[0][0] - 5.0).abs() < 1e-9);
        assert!((sol.lmp[0] - 20.0).abs() < 1e-9);
        assert_eq!(sol.source, SolutionSource::Lemke);
    }

    #[test]
    fn uncongested_two_bus_has_uniform_price() {
        let sol = solve_market(&two_bus(1e4), &MarketOptions::default()).unwrap();
        assert!(sol.lmp_spread() < 1e-9);
        assert!((sol.lmp[0] - 20.0).abs() < 1e-9);
        assert!((sol.line_flows_mw[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn congested_two_bus_splits_prices() {
        let sol = solve_market(&two_bus(5.0), &MarketOptions::default()).unwrap();
        assert!((sol.line_flows_mw[0] - 5.0).abs() < 1e-9);
        assert!((sol.generation_mw[0][0] - 5.0).abs() < 1e-9);
        assert!((sol.generation_mw[1][0] - 5.0).abs() < 1e-9);
        assert!((sol.lmp[0] - 20.0).abs() < 1e-9);
        assert!((sol.lmp[1] - 50.0).abs() < 1e-9);
        assert!(sol.duals.line_limit[0].0 > 1.0);
    }

    #[test]
    fn zero_demand_clears_nothing() {
        let mut c = one_bus();
        c.demands.clear();
        let sol = solve_market(&c, &MarketOptions::default()).unwrap();
        assert_eq!(sol.total_generation_mw(), 0.0);
    }

    #[test]
    fn infeasible_minimum_demand() {
        let mut c = one_bus();
        c.demands = vec![DemandUnit::fixed("big", 1, 50.0)];
        assert!(matches!(solve_market(&c, &MarketOptions::default()), Err(MarketError::Infeasible(_))));
    }

    #[test]
    fn lp_fallback_agrees_with_pivoting() {
        let mut c = two_bus(5.0);
        c.generators.push(GeneratorUnit {
            id: "g3".into(),
            bus: 1,
            blocks: vec![GenBlock::new(3.0, 10.0), GenBlock::new(3.0, 60.0)],
            unit_capacity_mw: 6.0,
            kind: GeneratorKind::Conventional,
        });
        let am = assemble_lcp(&c, &ValidationOptions::default()).unwrap();
        let direct = solve_market(&c, &MarketOptions::default()).unwrap();
        let (x, p) = solve_via_lp(&am, &LpOptions::default()).unwrap();
        let via_lp = map_solution(&c, &am.layout, x, p, SolutionSource::LpFallback, vec![]);
        verify(&c, &am, &via_lp, &MarketOptions::default()).unwrap();
        for (a, b) in direct.lmp.iter().zip(&via_lp.lmp) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
