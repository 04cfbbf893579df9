//! Wholesale market description: block-bidding generators and consumers on a
//! DC network cleared by a social-welfare-maximising system operator.
//!
//! [`assemble_lcp`] turns a [`MarketCase`] into the complementarity problem
//! whose solution is the market equilibrium, and [`solve_market`] solves it
//! and maps the result back to dispatch, angles, flows and prices.

mod assemble;
mod report;
mod solve;
mod welfare;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assemble::{assemble_lcp, AssembledMarket, LcpLayout, LinearForm};
pub use report::{
    settlement, social_welfare, wind_penetration, DemandSettlement, GeneratorSettlement, PenetrationMode,
    SettlementReport,
};
pub use solve::{
    kkt_residuals, solve_assembled, solve_market, Duals, EquilibriumSolution, KktResiduals, MarketOptions, SolutionSource,
};
pub use welfare::{solve_welfare_lp, WelfareLpSolution};

use crate::lcp::LcpError;
use crate::lp::LpError;

/// Utility assigned to fixed loads so they always clear, $/MWh.
pub const FIXED_LOAD_UTILITY: f64 = 1e4;

/// Default system base, MW.
pub const DEFAULT_MVA_BASE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenBlock {
    pub size_mw: f64,
    pub marginal_cost_per_mwh: f64,
    /// Declared bid; used only under [`BidPolicy::DeclaredBids`].
    #[serde(default)]
    pub bid_per_mwh: Option<f64>,
    /// Per-MWh reserve adder carried by a perturbed wind block.
    #[serde(default)]
    pub reserve_adder_per_mwh: f64,
}

impl GenBlock {
    pub fn new(size_mw: f64, marginal_cost_per_mwh: f64) -> Self {
        Self { size_mw, marginal_cost_per_mwh, bid_per_mwh: None, reserve_adder_per_mwh: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandBlock {
    pub size_mw: f64,
    pub marginal_utility_per_mwh: f64,
    #[serde(default)]
    pub bid_per_mwh: Option<f64>,
}

impl DemandBlock {
    pub fn new(size_mw: f64, marginal_utility_per_mwh: f64) -> Self {
        Self { size_mw, marginal_utility_per_mwh, bid_per_mwh: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GeneratorKind {
    Conventional,
    Wind {
        /// Forecast mean power per block, MW.
        mean_power_mw: Vec<f64>,
        /// Linear reserve-cost coefficient `b_w`, $/MWh per MW.
        reserve_cost_b: f64,
        /// Quadratic reserve-cost coefficient `c_w`, $/MWh per MW^2.
        reserve_cost_c: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorUnit {
    pub id: String,
    /// Bus number as used in the network description.
    pub bus: usize,
    pub blocks: Vec<GenBlock>,
    pub unit_capacity_mw: f64,
    pub kind: GeneratorKind,
}

impl GeneratorUnit {
    pub fn block_total_mw(&self) -> f64 {
        self.blocks.iter().map(|b| b.size_mw).sum()
    }

    pub fn is_wind(&self) -> bool {
        matches!(self.kind, GeneratorKind::Wind { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandUnit {
    pub id: String,
    pub bus: usize,
    pub blocks: Vec<DemandBlock>,
    pub min_demand_mw: f64,
    /// `false` for fixed loads: one block, minimum equal to its size.
    pub dispatchable: bool,
}

impl DemandUnit {
    /// A non-participating load that always clears at `mw`.
    pub fn fixed(id: impl Into<String>, bus: usize, mw: f64) -> Self {
        Self {
            id: id.into(),
            bus,
            blocks: vec![DemandBlock::new(mw, FIXED_LOAD_UTILITY)],
            min_demand_mw: mw,
            dispatchable: false,
        }
    }

    pub fn block_total_mw(&self) -> f64 {
        self.blocks.iter().map(|b| b.size_mw).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub number: usize,
    #[serde(default)]
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub reactance_pu: f64,
    pub capacity_mw: f64,
}

impl Line {
    /// `B_nm = 1 / x_nm`, per unit.
    pub fn susceptance_pu(&self) -> f64 {
        1.0 / self.reactance_pu
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub mva_base: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
}

impl Network {
    /// Position of the bus with the given number.
    pub fn bus_index(&self, number: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.number == number)
    }

    pub fn reference_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.reference)
    }

    /// Single bus, no lines.
    pub fn single_bus(number: usize) -> Self {
        Self { mva_base: DEFAULT_MVA_BASE, buses: vec![Bus { number, reference: true }], lines: vec![] }
    }

    fn is_connected(&self) -> bool {
        let n = self.buses.len();
        if n == 0 {
            return false;
        }
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            if let (Some(a), Some(b)) = (self.bus_index(l.from), self.bus_index(l.to)) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BidPolicy {
    /// Generators bid their marginal cost, consumers their marginal utility.
    #[default]
    BidMarginalCost,
    /// Use the declared `bid_per_mwh` where present.
    DeclaredBids,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketCase {
    pub name: String,
    pub network: Network,
    pub generators: Vec<GeneratorUnit>,
    pub demands: Vec<DemandUnit>,
    #[serde(default)]
    pub bid_policy: BidPolicy,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOptions {
    /// Reject non-rational bid stacks instead of warning.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("case has no generators")]
    NoGenerators,
    #[error("network has no buses")]
    NoBuses,
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("duplicate bus number {0}")]
    DuplicateBus(usize),
    #[error("expected exactly one reference bus, found {0}")]
    DuplicateReference(usize),
    #[error("network is not connected")]
    UnconnectedNetwork,
    #[error("{owner} refers to unknown bus {bus}")]
    UnknownBus { owner: String, bus: usize },
    #[error("line {line}: {reason}")]
    InvalidLine { line: usize, reason: String },
    #[error("{unit}: {reason}")]
    InvalidUnit { unit: String, reason: String },
    #[error("{unit}: block prices violate bid rationality")]
    NonRationalBids { unit: String },
    #[error("market is infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Lcp(#[from] LcpError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

fn check_finite_nonneg(unit: &str, what: &str, v: f64) -> Result<(), MarketError> {
    if !v.is_finite() || v < 0.0 {
        return Err(MarketError::InvalidUnit { unit: unit.into(), reason: format!("{what} must be finite and >= 0, got {v}") });
    }
    Ok(())
}

impl MarketCase {
    /// Checks every structural invariant and returns non-fatal warnings.
    pub fn validate(&self, opts: &ValidationOptions) -> Result<Vec<String>, MarketError> {
        let mut warnings = Vec::new();
        let net = &self.network;
        if net.buses.is_empty() {
            return Err(MarketError::NoBuses);
        }
        if self.generators.is_empty() {
            return Err(MarketError::NoGenerators);
        }
        if !(net.mva_base.is_finite() && net.mva_base > 0.0) {
            return Err(MarketError::InvalidLine { line: 0, reason: format!("mva_base must be > 0, got {}", net.mva_base) });
        }
        let mut numbers = BTreeSet::new();
        for b in &net.buses {
            if !numbers.insert(b.number) {
                return Err(MarketError::DuplicateBus(b.number));
            }
        }
        let refs = net.buses.iter().filter(|b| b.reference).count();
        if refs != 1 {
            return Err(MarketError::DuplicateReference(refs));
        }
        for (i, l) in net.lines.iter().enumerate() {
            for bus in [l.from, l.to] {
                if !numbers.contains(&bus) {
                    return Err(MarketError::UnknownBus { owner: format!("line {i}"), bus });
                }
            }
            if l.from == l.to {
                return Err(MarketError::InvalidLine { line: i, reason: "line connects a bus to itself".into() });
            }
            if !(l.reactance_pu.is_finite() && l.reactance_pu > 0.0) {
                return Err(MarketError::InvalidLine { line: i, reason: format!("reactance must be > 0, got {}", l.reactance_pu) });
            }
            if !(l.capacity_mw.is_finite() && l.capacity_mw > 0.0) {
                return Err(MarketError::InvalidLine { line: i, reason: format!("capacity must be > 0, got {}", l.capacity_mw) });
            }
        }
        if !net.is_connected() {
            return Err(MarketError::UnconnectedNetwork);
        }

        let mut ids: HashMap<&str, ()> = HashMap::new();
        for g in &self.generators {
            if ids.insert(&g.id, ()).is_some() {
                return Err(MarketError::DuplicateId(g.id.clone()));
            }
            if !numbers.contains(&g.bus) {
                return Err(MarketError::UnknownBus { owner: g.id.clone(), bus: g.bus });
            }
            if g.blocks.is_empty() {
                return Err(MarketError::InvalidUnit { unit: g.id.clone(), reason: "no blocks".into() });
            }
            for b in &g.blocks {
                check_finite_nonneg(&g.id, "block size", b.size_mw)?;
                check_finite_nonneg(&g.id, "reserve adder", b.reserve_adder_per_mwh)?;
                if !b.marginal_cost_per_mwh.is_finite() || b.bid_per_mwh.is_some_and(|v| !v.is_finite()) {
                    return Err(MarketError::InvalidUnit { unit: g.id.clone(), reason: "non-finite price".into() });
                }
            }
            check_finite_nonneg(&g.id, "unit capacity", g.unit_capacity_mw)?;
            if g.unit_capacity_mw < g.block_total_mw() - 1e-9 {
                warnings.push(format!(
                    "{}: unit capacity {} MW is below the block total {} MW",
                    g.id,
                    g.unit_capacity_mw,
                    g.block_total_mw()
                ));
            }
            if g.blocks.windows(2).any(|w| w[1].marginal_cost_per_mwh < w[0].marginal_cost_per_mwh) {
                if opts.strict {
                    return Err(MarketError::NonRationalBids { unit: g.id.clone() });
                }
                warnings.push(format!("{}: block costs are not nondecreasing", g.id));
            }
            if let GeneratorKind::Wind { mean_power_mw, reserve_cost_b, reserve_cost_c } = &g.kind {
                if mean_power_mw.len() != g.blocks.len() {
                    return Err(MarketError::InvalidUnit {
                        unit: g.id.clone(),
                        reason: format!("{} mean powers for {} blocks", mean_power_mw.len(), g.blocks.len()),
                    });
                }
                for &p in mean_power_mw {
                    check_finite_nonneg(&g.id, "mean power", p)?;
                }
                check_finite_nonneg(&g.id, "reserve cost b", *reserve_cost_b)?;
                check_finite_nonneg(&g.id, "reserve cost c", *reserve_cost_c)?;
            }
        }
        for d in &self.demands {
            if ids.insert(&d.id, ()).is_some() {
                return Err(MarketError::DuplicateId(d.id.clone()));
            }
            if !numbers.contains(&d.bus) {
                return Err(MarketError::UnknownBus { owner: d.id.clone(), bus: d.bus });
            }
            if d.blocks.is_empty() {
                return Err(MarketError::InvalidUnit { unit: d.id.clone(), reason: "no blocks".into() });
            }
            for b in &d.blocks {
                check_finite_nonneg(&d.id, "block size", b.size_mw)?;
                if !b.marginal_utility_per_mwh.is_finite() || b.bid_per_mwh.is_some_and(|v| !v.is_finite()) {
                    return Err(MarketError::InvalidUnit { unit: d.id.clone(), reason: "non-finite price".into() });
                }
            }
            check_finite_nonneg(&d.id, "minimum demand", d.min_demand_mw)?;
            if d.min_demand_mw > d.block_total_mw() + 1e-9 {
                return Err(MarketError::InvalidUnit {
                    unit: d.id.clone(),
                    reason: format!("minimum demand {} MW exceeds block total {} MW", d.min_demand_mw, d.block_total_mw()),
                });
            }
            if d.blocks.windows(2).any(|w| w[1].marginal_utility_per_mwh > w[0].marginal_utility_per_mwh) {
                if opts.strict {
                    return Err(MarketError::NonRationalBids { unit: d.id.clone() });
                }
                warnings.push(format!("{}: block utilities are not nonincreasing", d.id));
            }
        }
        Ok(warnings)
    }

    /// Effective generator bid including any reserve adder, $/MWh.
    pub fn gen_bid(&self, unit: usize, block: usize) -> f64 {
        let b = &self.generators[unit].blocks[block];
        let base = match self.bid_policy {
            BidPolicy::BidMarginalCost => b.marginal_cost_per_mwh,
            BidPolicy::DeclaredBids => b.bid_per_mwh.unwrap_or(b.marginal_cost_per_mwh),
        };
        base + b.reserve_adder_per_mwh
    }

    pub fn demand_bid(&self, unit: usize, block: usize) -> f64 {
        let b = &self.demands[unit].blocks[block];
        match self.bid_policy {
            BidPolicy::BidMarginalCost => b.marginal_utility_per_mwh,
            BidPolicy::DeclaredBids => b.bid_per_mwh.unwrap_or(b.marginal_utility_per_mwh),
        }
    }

    pub fn generator_index(&self, id: &str) -> Option<usize> {
        self.generators.iter().position(|g| g.id == id)
    }

    pub fn demand_index(&self, id: &str) -> Option<usize> {
        self.demands.iter().position(|d| d.id == id)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// One bus, one 10 MW generator at 20 $/MWh, one dispatchable 5 MW
    /// demand at 30 $/MWh with a 5 MW minimum.
    pub fn one_bus() -> MarketCase {
        MarketCase {
            name: "one-bus".into(),
            network: Network::single_bus(1),
            generators: vec![GeneratorUnit {
                id: "g1".into(),
                bus: 1,
                blocks: vec![GenBlock::new(10.0, 20.0)],
                unit_capacity_mw: 10.0,
                kind: GeneratorKind::Conventional,
            }],
            demands: vec![DemandUnit {
                id: "d1".into(),
                bus: 1,
                blocks: vec![DemandBlock::new(5.0, 30.0)],
                min_demand_mw: 5.0,
                dispatchable: true,
            }],
            bid_policy: BidPolicy::BidMarginalCost,
        }
    }

    /// Two buses joined by one line of the given capacity; 20 $/MWh at bus 1,
    /// 50 $/MWh at bus 2, 10 MW fixed load at bus 2.
    pub fn two_bus(capacity_mw: f64) -> MarketCase {
        MarketCase {
            name: "two-bus".into(),
            network: Network {
                mva_base: DEFAULT_MVA_BASE,
                buses: vec![Bus { number: 1, reference: true }, Bus { number: 2, reference: false }],
                lines: vec![Line { from: 1, to: 2, reactance_pu: 0.1, capacity_mw }],
            },
            generators: vec![
                GeneratorUnit {
                    id: "g1".into(),
                    bus: 1,
                    blocks: vec![GenBlock::new(20.0, 20.0)],
                    unit_capacity_mw: 20.0,
                    kind: GeneratorKind::Conventional,
                },
                GeneratorUnit {
                    id: "g2".into(),
                    bus: 2,
                    blocks: vec![GenBlock::new(20.0, 50.0)],
                    unit_capacity_mw: 20.0,
                    kind: GeneratorKind::Conventional,
                },
            ],
            demands: vec![DemandUnit::fixed("load2", 2, 10.0)],
            bid_policy: BidPolicy::BidMarginalCost,
        }
    }
}
