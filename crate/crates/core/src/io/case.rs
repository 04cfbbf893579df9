//! The JSON case format.
//!
//! A case is one JSON document with explicit units in field names. Reading
//! it goes through three gates: the version check, the typed parse (which
//! reports line and column), and case validation. Fields the schema does not
//! know are rejected in strict mode and reported as warnings otherwise.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::market::{
    BidPolicy, Bus, DemandBlock, DemandUnit, GenBlock, GeneratorKind, GeneratorUnit, Line, MarketCase, MarketError,
    Network, ValidationOptions, DEFAULT_MVA_BASE,
};
use crate::perturbation::{PerturbationError, PerturbationSpec};

pub const SCHEMA_VERSION: u32 = 1;
/// Applied to lines that omit `capacity_mw`.
pub const DEFAULT_LINE_CAPACITY_MW: f64 = 100.0;
/// Reserve-cost coefficients used when a wind section omits them.
pub const DEFAULT_RESERVE_COST_B: f64 = 5.0;
pub const DEFAULT_RESERVE_COST_C: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metadata {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub from: usize,
    pub to: usize,
    pub reactance_pu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_mw: Option<f64>,
}

fn default_mva_base() -> f64 {
    DEFAULT_MVA_BASE
}

fn default_capacity() -> f64 {
    DEFAULT_LINE_CAPACITY_MW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSection {
    #[serde(default = "default_mva_base")]
    pub mva_base: f64,
    pub reference_bus: usize,
    #[serde(default = "default_capacity")]
    pub default_capacity_mw: f64,
    pub buses: Vec<usize>,
    pub lines: Vec<LineRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenBlockRecord {
    pub size_mw: f64,
    pub marginal_cost_per_mwh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bid_per_mwh: Option<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub reserve_adder_per_mwh: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

fn default_b() -> f64 {
    DEFAULT_RESERVE_COST_B
}

fn default_c() -> f64 {
    DEFAULT_RESERVE_COST_C
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindSection {
    /// Forecast mean output per block; defaults to the block sizes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_power_mw: Option<Vec<f64>>,
    #[serde(default = "default_b")]
    pub reserve_cost_b: f64,
    #[serde(default = "default_c")]
    pub reserve_cost_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub id: String,
    pub bus: usize,
    /// Defaults to the sum of the block sizes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_capacity_mw: Option<f64>,
    pub blocks: Vec<GenBlockRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wind: Option<WindSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandBlockRecord {
    pub size_mw: f64,
    pub marginal_utility_per_mwh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bid_per_mwh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandRecord {
    pub id: String,
    pub bus: usize,
    #[serde(default)]
    pub min_demand_mw: f64,
    pub blocks: Vec<DemandBlockRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedLoadRecord {
    pub id: String,
    pub bus: usize,
    pub demand_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFile {
    pub schema_version: u32,
    pub metadata: Metadata,
    #[serde(default)]
    pub bid_policy: BidPolicy,
    pub network: NetworkSection,
    pub generators: Vec<GeneratorRecord>,
    #[serde(default)]
    pub demands: Vec<DemandRecord>,
    #[serde(default)]
    pub fixed_loads: Vec<FixedLoadRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema { line: usize, column: usize, message: String },
    #[error("unsupported schema_version {found}; this build reads version {supported}")]
    Version { found: Value, supported: u32 },
    #[error("unknown fields: {}", .0.join(", "))]
    UnknownFields(Vec<String>),
    #[error("invalid case: {0}")]
    Validation(#[from] MarketError),
    #[error("invalid perturbation section: {0}")]
    Perturbation(#[from] PerturbationError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Reject unknown fields and non-rational bid stacks.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCase {
    pub case: MarketCase,
    pub metadata: Metadata,
    pub perturbation: Option<PerturbationSpec>,
    pub warnings: Vec<String>,
}

fn schema_error(e: serde_json::Error) -> CaseError {
    CaseError::Schema { line: e.line(), column: e.column(), message: e.to_string() }
}

/// Paths present in `input` but not in `known`, ignoring explicit nulls.
fn unknown_paths(input: &Value, known: &Value, path: &str, out: &mut Vec<String>) {
    match (input, known) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in a {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get(k) {
                    Some(kv) => unknown_paths(v, kv, &p, out),
                    None if !v.is_null() => out.push(p),
                    None => {}
                }
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            for (i, (v, kv)) in a.iter().zip(b).enumerate() {
                unknown_paths(v, kv, &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

pub fn parse_case_str(text: &str, opts: &ParseOptions) -> Result<ParsedCase, CaseError> {
    let raw: Value = serde_json::from_str(text).map_err(schema_error)?;
    match raw.get("schema_version") {
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION as u64) => {}
        Some(v) => return Err(CaseError::Version { found: v.clone(), supported: SCHEMA_VERSION }),
        None => {
            return Err(CaseError::Schema { line: 1, column: 1, message: "missing field `schema_version`".into() });
        }
    }
    let file: CaseFile = serde_json::from_str(text).map_err(schema_error)?;
    let known = serde_json::to_value(&file).expect("case file serialises");
    let mut unknown = Vec::new();
    unknown_paths(&raw, &known, "", &mut unknown);
    let mut warnings = Vec::new();
    if !unknown.is_empty() {
        if opts.strict {
            return Err(CaseError::UnknownFields(unknown));
        }
        warnings.extend(unknown.into_iter().map(|p| format!("ignored unknown field {p}")));
    }
    let case = file.to_market_case();
    warnings.extend(case.validate(&ValidationOptions { strict: opts.strict })?);
    if let Some(spec) = &file.perturbation {
        spec.validate(&case)?;
    }
    Ok(ParsedCase { case, metadata: file.metadata, perturbation: file.perturbation, warnings })
}

pub fn parse_case_file(path: &Path, opts: &ParseOptions) -> Result<ParsedCase, CaseError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CaseError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_case_str(&text, opts)
}

impl CaseFile {
    /// Builds the in-memory case. Fixed loads follow the dispatchable
    /// demands, in file order.
    pub fn to_market_case(&self) -> MarketCase {
        let net = &self.network;
        let network = Network {
            mva_base: net.mva_base,
            buses: net.buses.iter().map(|&n| Bus { number: n, reference: n == net.reference_bus }).collect(),
            lines: net
                .lines
                .iter()
                .map(|l| Line {
                    from: l.from,
                    to: l.to,
                    reactance_pu: l.reactance_pu,
                    capacity_mw: l.capacity_mw.unwrap_or(net.default_capacity_mw),
                })
                .collect(),
        };
        let generators = self
            .generators
            .iter()
            .map(|g| {
                let blocks: Vec<GenBlock> = g
                    .blocks
                    .iter()
                    .map(|b| GenBlock {
                        size_mw: b.size_mw,
                        marginal_cost_per_mwh: b.marginal_cost_per_mwh,
                        bid_per_mwh: b.bid_per_mwh,
                        reserve_adder_per_mwh: b.reserve_adder_per_mwh,
                    })
                    .collect();
                let total: f64 = blocks.iter().map(|b| b.size_mw).sum();
                let kind = match &g.wind {
                    None => GeneratorKind::Conventional,
                    Some(w) => GeneratorKind::Wind {
                        mean_power_mw: w.mean_power_mw.clone().unwrap_or_else(|| blocks.iter().map(|b| b.size_mw).collect()),
                        reserve_cost_b: w.reserve_cost_b,
                        reserve_cost_c: w.reserve_cost_c,
                    },
                };
                GeneratorUnit { id: g.id.clone(), bus: g.bus, unit_capacity_mw: g.unit_capacity_mw.unwrap_or(total), blocks, kind }
            })
            .collect();
        let mut demands: Vec<DemandUnit> = self
            .demands
            .iter()
            .map(|d| DemandUnit {
                id: d.id.clone(),
                bus: d.bus,
                blocks: d
                    .blocks
                    .iter()
                    .map(|b| DemandBlock {
                        size_mw: b.size_mw,
                        marginal_utility_per_mwh: b.marginal_utility_per_mwh,
                        bid_per_mwh: b.bid_per_mwh,
                    })
                    .collect(),
                min_demand_mw: d.min_demand_mw,
                dispatchable: true,
            })
            .collect();
        demands.extend(self.fixed_loads.iter().map(|f| DemandUnit::fixed(f.id.clone(), f.bus, f.demand_mw)));
        MarketCase { name: self.metadata.name.clone(), network, generators, demands, bid_policy: self.bid_policy }
    }

    /// The file form of a case. Every line capacity and unit capacity is
    /// written explicitly; non-dispatchable demands become fixed loads.
    pub fn from_market_case(case: &MarketCase, perturbation: Option<PerturbationSpec>) -> CaseFile {
        let net = &case.network;
        let reference_bus = net.buses.iter().find(|b| b.reference).map(|b| b.number).unwrap_or(0);
        CaseFile {
            schema_version: SCHEMA_VERSION,
            metadata: Metadata { name: case.name.clone(), source: None, notes: Vec::new() },
            bid_policy: case.bid_policy,
            network: NetworkSection {
                mva_base: net.mva_base,
                reference_bus,
                default_capacity_mw: DEFAULT_LINE_CAPACITY_MW,
                buses: net.buses.iter().map(|b| b.number).collect(),
                lines: net
                    .lines
                    .iter()
                    .map(|l| LineRecord { from: l.from, to: l.to, reactance_pu: l.reactance_pu, capacity_mw: Some(l.capacity_mw) })
                    .collect(),
            },
            generators: case
                .generators
                .iter()
                .map(|g| GeneratorRecord {
                    id: g.id.clone(),
                    bus: g.bus,
                    unit_capacity_mw: Some(g.unit_capacity_mw),
                    blocks: g
                        .blocks
                        .iter()
                        .map(|b| GenBlockRecord {
                            size_mw: b.size_mw,
                            marginal_cost_per_mwh: b.marginal_cost_per_mwh,
                            bid_per_mwh: b.bid_per_mwh,
                            reserve_adder_per_mwh: b.reserve_adder_per_mwh,
                        })
                        .collect(),
                    wind: match &g.kind {
                        GeneratorKind::Conventional => None,
                        GeneratorKind::Wind { mean_power_mw, reserve_cost_b, reserve_cost_c } => Some(WindSection {
                            mean_power_mw: Some(mean_power_mw.clone()),
                            reserve_cost_b: *reserve_cost_b,
                            reserve_cost_c: *reserve_cost_c,
                        }),
                    },
                })
                .collect(),
            demands: case
                .demands
                .iter()
                .filter(|d| d.dispatchable)
                .map(|d| DemandRecord {
                    id: d.id.clone(),
                    bus: d.bus,
                    min_demand_mw: d.min_demand_mw,
                    blocks: d
                        .blocks
                        .iter()
                        .map(|b| DemandBlockRecord {
                            size_mw: b.size_mw,
                            marginal_utility_per_mwh: b.marginal_utility_per_mwh,
                            bid_per_mwh: b.bid_per_mwh,
                        })
                        .collect(),
                })
                .collect(),
            fixed_loads: case
                .demands
                .iter()
                .filter(|d| !d.dispatchable)
                .map(|d| FixedLoadRecord { id: d.id.clone(), bus: d.bus, demand_mw: d.block_total_mw() })
                .collect(),
            perturbation,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("case file serialises");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::fixtures::two_bus;

    const MINIMAL: &str = r#"{
  "schema_version": 1,
  "metadata": {"name": "mini"},
  "network": {"reference_bus": 1, "buses": [1, 2],
              "lines": [{"from": 1, "to": 2, "reactance_pu": 0.0575}]},
  "generators": [{"id": "g", "bus": 1, "blocks": [{"size_mw": 10, "marginal_cost_per_mwh": 20}]}],
  "fixed_loads": [{"id": "f", "bus": 2, "demand_mw": 5}]
}"#;

    #[test]
    fn defaults_are_applied() {
        let p = parse_case_str(MINIMAL, &ParseOptions::default()).unwrap();
        let c = &p.case;
        assert_eq!(c.network.mva_base, 100.0);
        assert_eq!(c.network.lines[0].capacity_mw, 100.0);
        assert!((c.network.lines[0].susceptance_pu() - 17.391304).abs() < 1e-6);
        assert_eq!(c.generators[0].unit_capacity_mw, 10.0);
        assert!(!c.demands[0].dispatchable);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn unknown_fields_warn_or_fail() {
        let text = MINIMAL.replace("\"name\": \"mini\"", "\"name\": \"mini\", \"colour\": \"red\"");
        let p = parse_case_str(&text, &ParseOptions::default()).unwrap();
        assert_eq!(p.warnings, vec!["ignored unknown field metadata.colour".to_string()]);
        match parse_case_str(&text, &ParseOptions { strict: true }) {
            Err(CaseError::UnknownFields(f)) => assert_eq!(f, vec!["metadata.colour".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_and_schema_errors() {
        let text = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(parse_case_str(&text, &ParseOptions::default()), Err(CaseError::Version { .. })));
        let text = MINIMAL.replace("\"demand_mw\": 5", "\"demand_mw\": \"five\"");
        match parse_case_str(&text, &ParseOptions::default()) {
            Err(CaseError::Schema { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_generators_fail_validation() {
        let text = MINIMAL.replace(
            r#"[{"id": "g", "bus": 1, "blocks": [{"size_mw": 10, "marginal_cost_per_mwh": 20}]}]"#,
            "[]",
        );
        assert!(matches!(
            parse_case_str(&text, &ParseOptions::default()),
            Err(CaseError::Validation(MarketError::NoGenerators))
        ));
    }

    #[test]
    fn round_trip() {
        let c = two_bus(5.0);
        let text = CaseFile::from_market_case(&c, None).to_json();
        let back = parse_case_str(&text, &ParseOptions { strict: true }).unwrap();
        assert_eq!(back.case, c);
    }
}
