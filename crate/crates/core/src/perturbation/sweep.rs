//! Grid sweeps over wind error, curtailment and wind penetration.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{scale_wind_penetration, shift_analysis_with_beta, PerturbationError, PerturbationSpec, ShiftOptions};
use crate::lcp::{beta_of, BetaEstimate, LcpError};
use crate::market::{assemble_lcp, wind_penetration, MarketCase, PenetrationMode};

pub const SWEEP_CSV_HEADER: [&str; 12] = [
    "wind_delta",
    "kappa",
    "penetration_scale",
    "penetration",
    "beta",
    "beta_is_lower_bound",
    "eta",
    "mu",
    "observed_shift",
    "max_lmp_change_per_mwh",
    "containment",
    "error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxes {
    /// Wind unit receiving the same `delta` on every block.
    pub wind_unit: String,
    /// Zero means "no wind error".
    pub wind_deltas: Vec<f64>,
    /// Demand unit receiving the same `kappa` on every block.
    pub curtailed_unit: Option<String>,
    /// Zero means "no curtailment".
    pub kappas: Vec<f64>,
    pub penetration_scales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub wind_delta: f64,
    pub kappa: f64,
    pub penetration_scale: f64,
    pub penetration: Option<f64>,
    pub beta: Option<f64>,
    pub beta_is_lower_bound: Option<bool>,
    pub eta: Option<f64>,
    pub mu: Option<f64>,
    pub observed_shift: Option<f64>,
    pub max_lmp_change_per_mwh: Option<f64>,
    pub containment: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Long-form CSV, one row per grid point, header first.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(SWEEP_CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                format!("{}", r.wind_delta),
                format!("{}", r.kappa),
                format!("{}", r.penetration_scale),
                opt(r.penetration),
                opt(r.beta),
                r.beta_is_lower_bound.map(|b| b.to_string()).unwrap_or_default(),
                opt(r.eta),
                opt(r.mu),
                opt(r.observed_shift),
                opt(r.max_lmp_change_per_mwh),
                r.containment.map(|b| b.to_string()).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_axis(name: &str, values: &[f64]) -> Result<(), PerturbationError> {
    if values.is_empty() {
        return Err(PerturbationError::Market(crate::market::MarketError::InvalidUnit {
            unit: "sweep".into(),
            reason: format!("axis {name} is empty"),
        }));
    }
    Ok(())
}

/// Evaluates every `(delta, kappa, scale)` cell in that lexicographic order.
/// Cell failures are recorded in the row and the sweep continues; `beta(M)`
/// is computed once per distinct `M`.
pub fn sweep(case: &MarketCase, axes: &SweepAxes, opts: &ShiftOptions) -> Result<SweepTable, PerturbationError> {
    check_axis("wind_deltas", &axes.wind_deltas)?;
    check_axis("kappas", &axes.kappas)?;
    check_axis("penetration_scales", &axes.penetration_scales)?;
    let mut cache: Vec<(DMatrix<f64>, Result<BetaEstimate, LcpError>)> = Vec::new();
    let mut rows = Vec::new();
    for &delta in &axes.wind_deltas {
        for &kappa in &axes.kappas {
            for &scale in &axes.penetration_scales {
                let mut row = SweepRow {
                    wind_delta: delta,
                    kappa,
                    penetration_scale: scale,
                    penetration: None,
                    beta: None,
                    beta_is_lower_bound: None,
                    eta: None,
                    mu: None,
                    observed_shift: None,
                    max_lmp_change_per_mwh: None,
                    containment: None,
                    error: None,
                };
                match cell(case, axes, opts, delta, kappa, scale, &mut cache, &mut row) {
                    Ok(()) => {}
                    Err(e) => row.error = Some(e.to_string()),
                }
                rows.push(row);
            }
        }
    }
    Ok(SweepTable { rows })
}

#[allow(clippy::too_many_arguments)]
fn cell(
    case: &MarketCase,
    axes: &SweepAxes,
    opts: &ShiftOptions,
    delta: f64,
    kappa: f64,
    scale: f64,
    cache: &mut Vec<(DMatrix<f64>, Result<BetaEstimate, LcpError>)>,
    row: &mut SweepRow,
) -> Result<(), PerturbationError> {
    let scaled = scale_wind_penetration(case, scale)?;
    row.penetration = Some(wind_penetration(&scaled, PenetrationMode::Capacity));
    let mut spec = PerturbationSpec::default();
    if delta != 0.0 {
        spec = spec.with_uniform_wind(&scaled, &axes.wind_unit, delta)?;
    }
    if kappa != 0.0 {
        if let Some(unit) = &axes.curtailed_unit {
            spec = spec.with_uniform_curtailment(&scaled, unit, kappa)?;
        }
    }
    let m = assemble_lcp(&scaled, &opts.market.validation)?.instance.m;
    let beta = match cache.iter().find(|(cm, _)| *cm == m) {
        Some((_, b)) => b.clone(),
        None => {
            let b = beta_of(&m, &opts.beta);
            cache.push((m, b.clone()));
            b
        }
    };
    let report = shift_analysis_with_beta(&scaled, &spec, opts, beta)?;
    if let Some(b) = &report.bound {
        row.beta = Some(b.beta);
        row.beta_is_lower_bound = Some(b.beta_is_lower_bound);
        row.eta = Some(b.eta);
        row.mu = b.mu;
    }
    row.observed_shift = Some(report.observed_shift);
    row.max_lmp_change_per_mwh = Some(report.max_lmp_change);
    row.containment = report.containment;
    row.error = report.bound_note;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::windy_bus;
    use super::*;

    fn axes(deltas: Vec<f64>, kappas: Vec<f64>) -> SweepAxes {
        SweepAxes {
            wind_unit: "w".into(),
            wind_deltas: deltas,
            curtailed_unit: Some("d".into()),
            kappas,
            penetration_scales: vec![1.0],
        }
    }

    #[test]
    fn grid_order_and_size() {
        let t = sweep(&windy_bus(), &axes(vec![0.1, 0.2, 0.3], vec![0.0, 0.1, 0.2]), &ShiftOptions::default()).unwrap();
        assert_eq!(t.rows.len(), 9);
        let keys: Vec<(f64, f64)> = t.rows.iter().map(|r| (r.wind_delta, r.kappa)).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(keys, sorted);
    }

    #[test]
    fn single_cell_matches_shift_analysis() {
        let c = windy_bus();
        let t = sweep(&c, &axes(vec![0.2], vec![0.1]), &ShiftOptions::default()).unwrap();
        let spec = PerturbationSpec::default()
            .with_uniform_wind(&c, "w", 0.2)
            .unwrap()
            .with_uniform_curtailment(&c, "d", 0.1)
            .unwrap();
        let r = super::super::shift_analysis(&c, &spec, &ShiftOptions::default()).unwrap();
        assert_eq!(t.rows[0].observed_shift, Some(r.observed_shift));
        assert_eq!(t.rows[0].mu, r.bound.as_ref().and_then(|b| b.mu));
    }

    #[test]
    fn bad_cells_do_not_stop_the_sweep() {
        let t = sweep(&windy_bus(), &axes(vec![0.1, 1.5], vec![0.0]), &ShiftOptions::default()).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows[0].observed_shift.is_some());
        assert!(t.rows[1].error.is_some());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let t = sweep(&windy_bus(), &axes(vec![0.1, 0.2], vec![0.0, 0.1]), &ShiftOptions::default()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("wind_delta,kappa,penetration_scale"));
    }
}
