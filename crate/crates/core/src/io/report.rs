//! Run reports and their JSON, CSV and text renderings.
//!
//! Every section is optional; each CLI subcommand fills the ones it
//! produces. CSV output is a single table chosen from the populated
//! sections (sweep, then settlement, then certificate, then dispatch);
//! a report with none of those falls back to a `field,value` listing.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::game::{EquilibriumCertificate, TwoAlphaReport};
use crate::lcp::{MatrixClassReport, PerturbationBound};
use crate::market::{EquilibriumSolution, MarketCase, SettlementReport, SolutionSource};
use crate::perturbation::{ShiftReport, SweepTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusPrice {
    pub bus: usize,
    pub lmp_per_mwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitDispatch {
    pub unit_id: String,
    pub bus: usize,
    /// `generator` or `demand`.
    pub role: String,
    pub blocks_mw: Vec<f64>,
    pub total_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFlow {
    pub from: usize,
    pub to: usize,
    pub flow_mw: f64,
    pub capacity_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub prices: Vec<BusPrice>,
    pub lmp_spread_per_mwh: f64,
    pub dispatch: Vec<UnitDispatch>,
    pub flows: Vec<LineFlow>,
    pub total_generation_mw: f64,
    pub total_consumption_mw: f64,
    pub binding_lines: usize,
    pub source: SolutionSource,
    pub pivots: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl SolutionSummary {
    pub fn new(case: &MarketCase, sol: &EquilibriumSolution) -> Self {
        let net = &case.network;
        let mut dispatch: Vec<UnitDispatch> = case
            .generators
            .iter()
            .zip(&sol.generation_mw)
            .map(|(g, p)| UnitDispatch {
                unit_id: g.id.clone(),
                bus: g.bus,
                role: "generator".into(),
                blocks_mw: p.clone(),
                total_mw: p.iter().sum(),
            })
            .collect();
        dispatch.extend(case.demands.iter().zip(&sol.consumption_mw).map(|(d, p)| UnitDispatch {
            unit_id: d.id.clone(),
            bus: d.bus,
            role: if d.dispatchable { "demand" } else { "fixed_load" }.into(),
            blocks_mw: p.clone(),
            total_mw: p.iter().sum(),
        }));
        SolutionSummary {
            prices: net.buses.iter().zip(&sol.lmp).map(|(b, p)| BusPrice { bus: b.number, lmp_per_mwh: *p }).collect(),
            lmp_spread_per_mwh: sol.lmp_spread(),
            dispatch,
            flows: net
                .lines
                .iter()
                .zip(&sol.line_flows_mw)
                .map(|(l, f)| LineFlow { from: l.from, to: l.to, flow_mw: *f, capacity_mw: l.capacity_mw })
                .collect(),
            total_generation_mw: sol.total_generation_mw(),
            total_consumption_mw: sol.total_consumption_mw(),
            binding_lines: sol.binding_lines(case, 1e-6).len(),
            source: sol.source,
            pivots: sol.pivots,
            diagnostics: sol.diagnostics.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSummary {
    pub bound: Option<PerturbationBound>,
    pub bound_note: Option<String>,
    pub mu_is_heuristic: bool,
    pub observed_shift: f64,
    pub containment: Option<bool>,
    pub max_lmp_change_per_mwh: f64,
    pub penetration: f64,
    pub nominal_prices: Vec<BusPrice>,
    pub perturbed_prices: Vec<BusPrice>,
}

impl ShiftSummary {
    pub fn new(case: &MarketCase, r: &ShiftReport) -> Self {
        let prices = |lmp: &[f64]| {
            case.network.buses.iter().zip(lmp).map(|(b, p)| BusPrice { bus: b.number, lmp_per_mwh: *p }).collect()
        };
        ShiftSummary {
            bound: r.bound.clone(),
            bound_note: r.bound_note.clone(),
            mu_is_heuristic: r.mu_is_heuristic,
            observed_shift: r.observed_shift,
            containment: r.containment,
            max_lmp_change_per_mwh: r.max_lmp_change,
            penetration: r.penetration,
            nominal_prices: prices(&r.nominal_lmp),
            perturbed_prices: prices(&r.perturbed_lmp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub dimension: usize,
    pub bases_checked: usize,
    pub distinct_solutions: usize,
    /// Largest componentwise gap between the pivoting solution and the
    /// nearest enumerated one.
    pub max_abs_difference: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<SolutionSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settlement: Option<SettlementReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_class: Option<MatrixClassReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<PerturbationBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<ShiftSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<EquilibriumCertificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_alpha: Option<TwoAlphaReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
}

pub const SETTLEMENT_CSV_HEADER: [&str; 8] =
    ["role", "unit_id", "bus", "quantity_mw", "price_per_mwh", "revenue_per_h", "cost_per_h", "profit_per_h"];
pub const CERTIFICATE_CSV_HEADER: [&str; 5] = ["player", "kind", "realized_per_h", "best_response_per_h", "gap_per_h"];
pub const DISPATCH_CSV_HEADER: [&str; 5] = ["role", "unit_id", "bus", "quantity_mw", "lmp_per_mwh"];

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(buf)
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Settlement rows. For demands the money columns read from the
/// consumer's side: revenue is the value of energy consumed, cost is the
/// payment and profit is the surplus.
fn settlement_csv(s: &SettlementReport) -> Result<Vec<u8>, csv::Error> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(SETTLEMENT_CSV_HEADER)?;
        for g in &s.generators {
            w.write_record([
                "generator".into(),
                g.id.clone(),
                g.bus.to_string(),
                num(g.power_mw),
                num(g.price_per_mwh),
                num(g.revenue_per_h),
                num(g.cost_per_h),
                num(g.profit_per_h),
            ])?;
        }
        for d in &s.demands {
            w.write_record([
                "demand".into(),
                d.id.clone(),
                d.bus.to_string(),
                num(d.consumption_mw),
                num(d.price_per_mwh),
                num(d.utility_per_h),
                num(d.payment_per_h),
                num(d.surplus_per_h),
            ])?;
        }
        w.flush()?;
    }
    Ok(buf)
}

fn certificate_csv(c: &EquilibriumCertificate) -> Result<Vec<u8>, csv::Error> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(CERTIFICATE_CSV_HEADER)?;
        for g in &c.gaps {
            let kind = serde_json::to_value(g.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            w.write_record([
                g.player.clone(),
                kind,
                num(g.realized_per_h),
                num(g.best_response_per_h),
                num(g.gap_per_h),
            ])?;
        }
        w.flush()?;
    }
    Ok(buf)
}

fn dispatch_csv(s: &SolutionSummary) -> Result<Vec<u8>, csv::Error> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(DISPATCH_CSV_HEADER)?;
        let price = |bus: usize| s.prices.iter().find(|p| p.bus == bus).map(|p| p.lmp_per_mwh).unwrap_or(f64::NAN);
        for d in &s.dispatch {
            w.write_record([d.role.clone(), d.unit_id.clone(), d.bus.to_string(), num(d.total_mw), num(price(d.bus))])?;
        }
        w.flush()?;
    }
    Ok(buf)
}

fn flatten(v: &Value, path: &str, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(x, &if path.is_empty() { k.clone() } else { format!("{path}.{k}") }, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(x, &format!("{path}[{i}]"), out);
            }
        }
        Value::String(s) => out.push((path.into(), s.clone())),
        Value::Null => out.push((path.into(), String::new())),
        other => out.push((path.into(), other.to_string())),
    }
}

fn field_value_csv(r: &RunReport) -> Result<Vec<u8>, csv::Error> {
    let mut rows = Vec::new();
    flatten(&serde_json::to_value(r).expect("report serialises"), "", &mut rows);
    let mut buf = Vec::new();
    if rows.is_empty() {
        return Ok(buf);
    }
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(["field", "value"])?;
        for (k, v) in rows {
            w.write_record([k, v])?;
        }
        w.flush()?;
    }
    Ok(buf)
}

/// Serialises a report. JSON is pretty-printed with a trailing newline and
/// parses back to the same report; an empty report is `{}`.
pub fn emit_report(r: &RunReport, format: ReportFormat) -> Result<Vec<u8>, csv::Error> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(r).expect("report serialises");
            s.push('\n');
            Ok(s.into_bytes())
        }
        ReportFormat::Csv => {
            if let Some(t) = &r.sweep {
                let mut buf = Vec::new();
                t.write_csv(&mut buf)?;
                Ok(buf)
            } else if let Some(s) = &r.settlement {
                settlement_csv(s)
            } else if let Some(c) = &r.certificate {
                certificate_csv(c)
            } else if let Some(s) = &r.solution {
                dispatch_csv(s)
            } else {
                field_value_csv(r)
            }
        }
        ReportFormat::Text => Ok(render_text(r).into_bytes()),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "n/a".into())
}

/// Human-readable summary for the terminal.
pub fn render_text(r: &RunReport) -> String {
    let mut s = String::new();
    if let Some(c) = &r.case {
        let _ = writeln!(s, "case: {c}");
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    if let Some(sol) = &r.solution {
        if sol.lmp_spread_per_mwh <= 1e-6 {
            let _ = writeln!(s, "uniform LMP: {:.4} $/MWh at all {} buses", sol.prices[0].lmp_per_mwh, sol.prices.len());
        } else {
            let _ = writeln!(s, "LMP spread: {:.4} $/MWh", sol.lmp_spread_per_mwh);
            for p in &sol.prices {
                let _ = writeln!(s, "  bus {:>3}: {:.4} $/MWh", p.bus, p.lmp_per_mwh);
            }
        }
        let _ = writeln!(
            s,
            "generation {:.4} MW, consumption {:.4} MW, binding lines {}",
            sol.total_generation_mw, sol.total_consumption_mw, sol.binding_lines
        );
        for d in &sol.dispatch {
            let _ = writeln!(s, "  {:<10} {:<10} bus {:>3}: {:.4} MW", d.role, d.unit_id, d.bus, d.total_mw);
        }
        for d in &sol.diagnostics {
            let _ = writeln!(s, "note: {d}");
        }
    }
    if let Some(st) = &r.settlement {
        let _ = writeln!(s, "{:<8} {:>12} {:>14} {:>14} {:>14}", "unit", "power MW", "revenue $/h", "cost $/h", "profit $/h");
        for g in &st.generators {
            let _ = writeln!(
                s,
                "{:<8} {:>12.4} {:>14.4} {:>14.4} {:>14.4}",
                g.id, g.power_mw, g.revenue_per_h, g.cost_per_h, g.profit_per_h
            );
        }
        let _ = writeln!(s, "{:<8} {:>12} {:>14}", "demand", "consumed MW", "payment $/h");
        for d in &st.demands {
            let _ = writeln!(s, "{:<8} {:>12.4} {:>14.4}", d.id, d.consumption_mw, d.payment_per_h);
        }
        let _ = writeln!(s, "fixed load {:.4} MW paying {:.4} $/h", st.fixed_load_mw, st.fixed_load_payment_per_h);
    }
    if let Some(m) = &r.matrix_class {
        let _ = writeln!(
            s,
            "P-matrix: {} (method {:?}, n = {}, minors checked {}, min minor {:e})",
            m.is_p_matrix, m.method, m.dimension, m.minors_checked, m.min_minor
        );
    }
    let bound_line = |s: &mut String, b: &PerturbationBound| {
        let _ = writeln!(
            s,
            "beta {:.6}{} eta {:.6} epsilon {:.6} mu {}",
            b.beta,
            if b.beta_is_lower_bound { " (lower bound)" } else { "" },
            b.eta,
            b.epsilon,
            opt(b.mu)
        );
    };
    if let Some(b) = &r.bound {
        bound_line(&mut s, b);
    }
    if let Some(sh) = &r.shift {
        if let Some(b) = &sh.bound {
            bound_line(&mut s, b);
        }
        if let Some(n) = &sh.bound_note {
            let _ = writeln!(s, "note: {n}");
        }
        let _ = writeln!(
            s,
            "observed shift {:.6}, max LMP change {:.4} $/MWh, containment {}",
            sh.observed_shift,
            sh.max_lmp_change_per_mwh,
            sh.containment.map(|c| c.to_string()).unwrap_or_else(|| "not certified".into())
        );
    }
    if let Some(t) = &r.sweep {
        let _ = writeln!(s, "sweep: {} cells", t.rows.len());
    }
    if let Some(c) = &r.certificate {
        let _ = writeln!(s, "epsilon {:e} $/h (tolerance {:e}): nash = {}", c.epsilon_per_h, c.tolerance_per_h, c.is_nash_within);
    }
    if let Some(t) = &r.two_alpha {
        let _ = writeln!(
            s,
            "alpha {:.6} $/h, epsilon in nominal game {:.6} $/h <= 2 alpha: {}",
            t.alpha_per_h, t.epsilon_in_nominal_per_h, t.holds
        );
        let _ = writeln!(s, "note: {}", t.note);
    }
    if let Some(o) = &r.oracle {
        let _ = writeln!(
            s,
            "oracle: n = {}, {} bases, {} distinct solutions, max difference {:e}, agrees {}",
            o.dimension, o.bases_checked, o.distinct_solutions, o.max_abs_difference, o.agrees
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::fixtures::two_bus;
    use crate::market::{settlement, solve_market, MarketOptions};

    #[test]
    fn empty_report() {
        let r = RunReport::default();
        assert_eq!(emit_report(&r, ReportFormat::Json).unwrap(), b"{}\n");
        assert!(emit_report(&r, ReportFormat::Csv).unwrap().is_empty());
    }

    #[test]
    fn json_round_trip_and_csv_shape() {
        let c = two_bus(5.0);
        let sol = solve_market(&c, &MarketOptions::default()).unwrap();
        let r = RunReport {
            case: Some(c.name.clone()),
            solution: Some(SolutionSummary::new(&c, &sol)),
            settlement: Some(settlement(&sol, &c)),
            ..Default::default()
        };
        let json = emit_report(&r, ReportFormat::Json).unwrap();
        let back: RunReport = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, r);
        let csv = String::from_utf8(emit_report(&r, ReportFormat::Csv).unwrap()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], SETTLEMENT_CSV_HEADER.join(","));
        assert_eq!(lines.len(), 1 + c.generators.len());
        assert!(lines.iter().all(|l| l.split(',').count() == 8));
    }
}
