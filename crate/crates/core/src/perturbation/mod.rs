//! Wind-forecast error and demand-response curtailment as perturbations of
//! the market LCP, and the resulting equilibrium-shift diagnostics.
//!
//! A wind block whose mean power was overestimated by the fraction `delta`
//! loses `Delta_w = mean * delta` MW of capacity and its bid is raised by
//! the reserve cost `b Delta_w + (c/2) Delta_w^2` spread over the capacity
//! that remains. A curtailment `kappa` scales a demand block (and the
//! unit's minimum, pro rata) by `1 - kappa`. Both only move entries of
//! `q`; `M` is unchanged.

mod shift;
mod sweep;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use shift::{canonical_vector, SINGULAR_NOTE, shift_analysis, shift_analysis_with_beta, ShiftOptions, ShiftReport};
pub use sweep::{sweep, SweepAxes, SweepRow, SweepTable, SWEEP_CSV_HEADER};

use crate::lcp::LcpError;
use crate::market::{assemble_lcp, GeneratorKind, GeneratorUnit, MarketCase, MarketError, ValidationOptions};

/// Guard on the remaining wind capacity when amortising reserve cost, MW.
pub const ADDER_EPSILON_MW: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindDelta {
    pub unit: String,
    pub block: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curtailment {
    pub unit: String,
    pub block: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    #[serde(default)]
    pub wind_deltas: Vec<WindDelta>,
    #[serde(default)]
    pub curtailments: Vec<Curtailment>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerturbationError {
    #[error("unknown unit {0:?}")]
    UnknownUnit(String),
    #[error("{unit} has no block {block}")]
    BlockOutOfRange { unit: String, block: usize },
    #[error("{0} is not a wind unit")]
    NotWindUnit(String),
    #[error("{0} is a conventional unit; wind deltas apply to wind units only")]
    SpecTargetsConventionalUnit(String),
    #[error("{0} is a fixed load; curtailment applies to dispatchable demand only")]
    SpecTargetsFixedLoad(String),
    #[error("{what} = {value} must lie strictly between 0 and 1")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("{unit} block {block} is listed twice")]
    Duplicate { unit: String, block: usize },
    #[error("penetration scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Lcp(#[from] LcpError),
}

fn open_unit_interval(what: &'static str, value: f64) -> Result<(), PerturbationError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(PerturbationError::OutOfRange { what, value })
    }
}

impl PerturbationSpec {
    pub fn is_empty(&self) -> bool {
        self.wind_deltas.is_empty() && self.curtailments.is_empty()
    }

    /// The same `delta` on every block of a wind unit.
    pub fn with_uniform_wind(mut self, case: &MarketCase, unit: &str, delta: f64) -> Result<Self, PerturbationError> {
        let i = case.generator_index(unit).ok_or_else(|| PerturbationError::UnknownUnit(unit.into()))?;
        for block in 0..case.generators[i].blocks.len() {
            self.wind_deltas.push(WindDelta { unit: unit.into(), block, delta });
        }
        Ok(self)
    }

    /// The same `kappa` on every block of a demand unit.
    pub fn with_uniform_curtailment(mut self, case: &MarketCase, unit: &str, kappa: f64) -> Result<Self, PerturbationError> {
        let j = case.demand_index(unit).ok_or_else(|| PerturbationError::UnknownUnit(unit.into()))?;
        for block in 0..case.demands[j].blocks.len() {
            self.curtailments.push(Curtailment { unit: unit.into(), block, kappa });
        }
        Ok(self)
    }

    pub fn validate(&self, case: &MarketCase) -> Result<(), PerturbationError> {
        let mut seen = std::collections::BTreeSet::new();
        for w in &self.wind_deltas {
            let i = case.generator_index(&w.unit).ok_or_else(|| PerturbationError::UnknownUnit(w.unit.clone()))?;
            let g = &case.generators[i];
            if !g.is_wind() {
                return Err(PerturbationError::SpecTargetsConventionalUnit(w.unit.clone()));
            }
            if w.block >= g.blocks.len() {
                return Err(PerturbationError::BlockOutOfRange { unit: w.unit.clone(), block: w.block });
            }
            open_unit_interval("wind delta", w.delta)?;
            if !seen.insert((0, w.unit.clone(), w.block)) {
                return Err(PerturbationError::Duplicate { unit: w.unit.clone(), block: w.block });
            }
        }
        for c in &self.curtailments {
            let j = case.demand_index(&c.unit).ok_or_else(|| PerturbationError::UnknownUnit(c.unit.clone()))?;
            let d = &case.demands[j];
            if !d.dispatchable {
                return Err(PerturbationError::SpecTargetsFixedLoad(c.unit.clone()));
            }
            if c.block >= d.blocks.len() {
                return Err(PerturbationError::BlockOutOfRange { unit: c.unit.clone(), block: c.block });
            }
            open_unit_interval("curtailment factor", c.kappa)?;
            if !seen.insert((1, c.unit.clone(), c.block)) {
                return Err(PerturbationError::Duplicate { unit: c.unit.clone(), block: c.block });
            }
        }
        Ok(())
    }
}

/// Reserve cost `b Delta_w + (c/2) Delta_w^2` of a forecast shortfall, $/h,
/// with `Delta_w = mean_power * delta`.
pub fn reserve_cost(unit: &GeneratorUnit, block: usize, delta: f64) -> Result<f64, PerturbationError> {
    let GeneratorKind::Wind { mean_power_mw, reserve_cost_b, reserve_cost_c } = &unit.kind else {
        return Err(PerturbationError::NotWindUnit(unit.id.clone()));
    };
    let mean = *mean_power_mw
        .get(block)
        .ok_or_else(|| PerturbationError::BlockOutOfRange { unit: unit.id.clone(), block })?;
    let dw = mean * delta;
    Ok(reserve_cost_b * dw + 0.5 * reserve_cost_c * dw * dw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedMarket {
    pub case: MarketCase,
    /// `M_perturbed - M_nominal`.
    pub delta_m: DMatrix<f64>,
    /// `q_perturbed - q_nominal`.
    pub delta_q: DVector<f64>,
}

/// Builds the perturbed case and the exact differences of its assembled
/// LCP data from the nominal one.
pub fn apply_perturbation(case: &MarketCase, spec: &PerturbationSpec) -> Result<PerturbedMarket, PerturbationError> {
    spec.validate(case)?;
    let mut out = case.clone();
    for w in &spec.wind_deltas {
        let i = case.generator_index(&w.unit).expect("validated");
        let cost = reserve_cost(&case.generators[i], w.block, w.delta)?;
        let GeneratorKind::Wind { mean_power_mw, .. } = &case.generators[i].kind else { unreachable!() };
        let dw = mean_power_mw[w.block] * w.delta;
        let blk = &mut out.generators[i].blocks[w.block];
        let nominal = case.generators[i].blocks[w.block].size_mw;
        blk.size_mw = (nominal - dw).max(0.0);
        blk.reserve_adder_per_mwh += cost / (nominal - dw).max(ADDER_EPSILON_MW);
    }
    for c in &spec.curtailments {
        let j = case.demand_index(&c.unit).expect("validated");
        out.demands[j].blocks[c.block].size_mw = case.demands[j].blocks[c.block].size_mw * (1.0 - c.kappa);
    }
    for (j, d) in case.demands.iter().enumerate() {
        let before = d.block_total_mw();
        let after = out.demands[j].block_total_mw();
        if before > 0.0 && after != before {
            out.demands[j].min_demand_mw = d.min_demand_mw * (after / before);
        }
    }
    let opts = ValidationOptions::default();
    let nominal = assemble_lcp(case, &opts)?;
    let perturbed = assemble_lcp(&out, &opts)?;
    Ok(PerturbedMarket {
        delta_m: &perturbed.instance.m - &nominal.instance.m,
        delta_q: &perturbed.instance.q - &nominal.instance.q,
        case: out,
    })
}

/// Scales every wind unit's block sizes, mean powers and unit capacity by
/// `factor`; demand is untouched.
pub fn scale_wind_penetration(case: &MarketCase, factor: f64) -> Result<MarketCase, PerturbationError> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(PerturbationError::InvalidScale(factor));
    }
    let mut out = case.clone();
    for g in out.generators.iter_mut() {
        if let GeneratorKind::Wind { mean_power_mw, .. } = &mut g.kind {
            mean_power_mw.iter_mut().for_each(|p| *p *= factor);
            g.blocks.iter_mut().for_each(|b| b.size_mw *= factor);
            g.unit_capacity_mw *= factor;
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::market::*;

    /// One bus: a 2x10 MW wind unit at 5 and 15 $/MWh, a 40 MW thermal unit
    /// at 30 $/MWh, a dispatchable demand and a 12 MW fixed load.
    pub fn windy_bus() -> MarketCase {
        MarketCase {
            name: "windy".into(),
            network: Network::single_bus(1),
            generators: vec![
                GeneratorUnit {
                    id: "w".into(),
                    bus: 1,
                    blocks: vec![GenBlock::new(10.0, 5.0), GenBlock::new(10.0, 15.0)],
                    unit_capacity_mw: 20.0,
                    kind: GeneratorKind::Wind { mean_power_mw: vec![10.0, 10.0], reserve_cost_b: 2.0, reserve_cost_c: 4.0 },
                },
                GeneratorUnit {
                    id: "t".into(),
                    bus: 1,
                    blocks: vec![GenBlock::new(40.0, 30.0)],
                    unit_capacity_mw: 40.0,
                    kind: GeneratorKind::Conventional,
                },
            ],
            demands: vec![
                DemandUnit {
                    id: "d".into(),
                    bus: 1,
                    blocks: vec![DemandBlock::new(10.0, 60.0), DemandBlock::new(10.0, 40.0)],
                    min_demand_mw: 5.0,
                    dispatchable: true,
                },
                DemandUnit::fixed("f", 1, 12.0),
            ],
            bid_policy: BidPolicy::BidMarginalCost,
        }
    }
}
