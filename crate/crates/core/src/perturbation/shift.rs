//! Nominal-vs-perturbed equilibrium comparison.

use serde::{Deserialize, Serialize};

use super::{apply_perturbation, PerturbationError, PerturbationSpec};
use crate::lcp::linalg::norm_inf;
use crate::lcp::{beta_of, is_singular, perturbation_bound_with_beta, BetaEstimate, BetaOptions, LcpError, PerturbationBound};
use crate::market::{
    assemble_lcp, solve_assembled, wind_penetration, EquilibriumSolution, LcpLayout, MarketOptions, PenetrationMode,
};

/// Attached to sampled bounds whose `M` is singular.
pub const SINGULAR_NOTE: &str =
    "M is singular, so beta(M) is unbounded; the sampled beta is a finite lower bound and mu is heuristic";

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ShiftOptions {
    pub market: MarketOptions,
    pub beta: BetaOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub spec: PerturbationSpec,
    /// Present whenever `beta(M)` could be evaluated; `mu` inside is absent
    /// when `eta >= 1`.
    pub bound: Option<PerturbationBound>,
    /// Why the bound is missing or incomplete, if it is.
    pub bound_note: Option<String>,
    /// `beta` came from sampling, so `mu` is not a certified bound.
    pub mu_is_heuristic: bool,
    /// `||x* - x*_D||_inf / ||x*||_inf` over the canonical LCP vectors.
    pub observed_shift: f64,
    /// `observed_shift <= mu`; only set when `mu` is defined and certified.
    pub containment: Option<bool>,
    pub nominal_lmp: Vec<f64>,
    pub perturbed_lmp: Vec<f64>,
    pub max_lmp_change: f64,
    /// Wind penetration of the nominal case (capacity basis).
    pub penetration: f64,
    pub nominal: EquilibriumSolution,
    pub perturbed: EquilibriumSolution,
}

/// The LCP vector with every angle split as `(max(d, 0), max(-d, 0))`.
/// Angle splits are not unique, so shifts are measured on this form.
pub fn canonical_vector(layout: &LcpLayout, x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    for (d, (p, n)) in layout.angles(x).into_iter().zip(layout.angle_pos.iter().zip(&layout.angle_neg)) {
        if let (Some(p), Some(n)) = (p, n) {
            v[*p] = d.max(0.0);
            v[*n] = (-d).max(0.0);
        }
    }
    v
}

pub fn shift_analysis(
    case: &crate::market::MarketCase,
    spec: &PerturbationSpec,
    opts: &ShiftOptions,
) -> Result<ShiftReport, PerturbationError> {
    let nominal = assemble_lcp(case, &opts.market.validation)?;
    let beta = beta_of(&nominal.instance.m, &opts.beta);
    shift_analysis_with_beta(case, spec, opts, beta)
}

/// [`shift_analysis`] with `beta(M)` supplied (or its failure), so sweeps can
/// reuse it across cells sharing the same `M`.
pub fn shift_analysis_with_beta(
    case: &crate::market::MarketCase,
    spec: &PerturbationSpec,
    opts: &ShiftOptions,
    beta: Result<BetaEstimate, LcpError>,
) -> Result<ShiftReport, PerturbationError> {
    let pm = apply_perturbation(case, spec)?;
    let nominal_am = assemble_lcp(case, &opts.market.validation)?;
    let perturbed_am = assemble_lcp(&pm.case, &opts.market.validation)?;
    let nominal = solve_assembled(case, &nominal_am, &opts.market)?;
    let perturbed = solve_assembled(&pm.case, &perturbed_am, &opts.market)?;

    let x0 = canonical_vector(&nominal_am.layout, &nominal.x);
    let x1 = canonical_vector(&perturbed_am.layout, &perturbed.x);
    let diff: Vec<f64> = x0.iter().zip(&x1).map(|(a, b)| a - b).collect();
    let denom = norm_inf(&x0);
    let num = norm_inf(&diff);
    let observed_shift = if num == 0.0 { 0.0 } else { num / denom };

    let (bound, bound_note, heuristic) = match beta {
        Ok(est) => match perturbation_bound_with_beta(&nominal_am.instance, &pm.delta_m, &pm.delta_q, &est) {
            Ok(b) => (Some(b), None, est.is_lower_bound),
            Err(LcpError::EtaExceedsOne { bound, eta }) => {
                (Some(*bound), Some(format!("eta = {eta} >= 1; perturbed uniqueness not certified")), est.is_lower_bound)
            }
            Err(e) => return Err(e.into()),
        },
        Err(e) => (None, Some(format!("beta(M) unavailable: {e}")), true),
    };
    let bound_note = match (&bound, bound_note) {
        (Some(b), note) if b.beta_is_lower_bound && is_singular(&nominal_am.instance.m) => Some(
            [note, Some(SINGULAR_NOTE.to_string())].into_iter().flatten().collect::<Vec<_>>().join("; "),
        ),
        (_, note) => note,
    };
    let containment = match (&bound, heuristic) {
        (Some(PerturbationBound { mu: Some(mu), .. }), false) => Some(observed_shift <= *mu),
        _ => None,
    };
    let max_lmp_change = nominal.lmp.iter().zip(&perturbed.lmp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(ShiftReport {
        spec: spec.clone(),
        bound,
        bound_note,
        mu_is_heuristic: heuristic,
        observed_shift,
        containment,
        nominal_lmp: nominal.lmp.clone(),
        perturbed_lmp: perturbed.lmp.clone(),
        max_lmp_change,
        penetration: wind_penetration(case, PenetrationMode::Capacity),
        nominal,
        perturbed,
    })
}
