//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input (arguments, case file,
//! perturbation spec), 2 solver failure, 3 a certificate or containment
//! check failed. Diagnostics go to standard error; the report goes to
//! `--out` or standard output.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::game::{certify_epsilon_equilibrium, check_two_alpha, GameError};
use crate::io::{emit_report, parse_case_file, CaseError, OracleSummary, ParseOptions, ParsedCase, ReportFormat, RunReport, ShiftSummary, SolutionSummary};
use crate::lcp::{
    beta_of, classify_p_matrix, is_singular, enumerate_lcp_oracle, perturbation_bound_with_beta, solve_lcp, BetaOptions,
    ClassifyOptions, LcpError, LcpInstance, LcpInstanceRecord, SolverOptions,
};
use crate::market::{assemble_lcp, settlement, solve_market, MarketError, MarketOptions, ValidationOptions};
use crate::perturbation::{
    apply_perturbation, shift_analysis, sweep, SINGULAR_NOTE, PerturbationError, PerturbationSpec, ShiftOptions, SweepAxes,
};

/// Environment variable overriding the default tolerance.
pub const TOLERANCE_ENV: &str = "MARKET_LCP_TOL";
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
/// Default `beta` sample count for matrices above the exhaustive limit.
pub const DEFAULT_BETA_SAMPLES: usize = 256;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "market-lcp", version, about = "Electricity market equilibria as linear complementarity problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Case file (JSON).
    #[arg(long, global = true)]
    pub case: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report format; defaults to csv for `sweep` and text otherwise.
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    /// Certification tolerance ($/h for game checks). Falls back to
    /// MARKET_LCP_TOL, then 1e-6.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Seed for every sampled computation.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Reject unknown case fields and non-rational bid stacks.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Random diagonals drawn when `beta` cannot be enumerated.
    #[arg(long, global = true, default_value_t = DEFAULT_BETA_SAMPLES)]
    pub beta_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
    Text,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Text => ReportFormat::Text,
        }
    }
}

#[derive(Debug, Args, Clone, Default)]
pub struct PerturbArgs {
    /// Wind forecast error applied to every block of the wind unit.
    #[arg(long)]
    pub wind_delta: Option<f64>,
    /// Curtailment applied to every block of the curtailed demand.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Wind unit id; defaults to the case's perturbation section, then the first wind unit.
    #[arg(long)]
    pub wind_unit: Option<String>,
    /// Curtailed demand id; defaults to the case's perturbation section, then the first dispatchable demand.
    #[arg(long)]
    pub curtail_unit: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    /// Comma-separated wind forecast errors.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub wind_delta: Vec<f64>,
    /// Comma-separated curtailment factors.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub kappa: Vec<f64>,
    /// Comma-separated factors applied to every wind unit's size.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub penetration_scale: Vec<f64>,
    /// Wind unit id; defaults as for `perturb`.
    #[arg(long)]
    pub wind_unit: Option<String>,
    /// Curtailed demand id; defaults as for `perturb`.
    #[arg(long)]
    pub curtail_unit: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clear the market and print prices and dispatch.
    Solve,
    /// Clear the market and print revenues, costs, profits and payments.
    Settle,
    /// Classify the assembled LCP matrix by its principal minors.
    Pmatrix,
    /// Perturbation bound for a wind-error / curtailment scenario.
    Bound(PerturbArgs),
    /// Solve nominal and perturbed markets and compare them with the bound.
    Perturb(PerturbArgs),
    /// Grid of perturbation scenarios as CSV.
    Sweep(SweepArgs),
    /// Certify the cleared market as a Nash equilibrium.
    VerifyNash,
    /// Check that the perturbed equilibrium is a 2-alpha equilibrium of the nominal game.
    #[command(name = "check-2alpha")]
    Check2alpha(PerturbArgs),
    /// Cross-check the pivoting solver against brute-force enumeration.
    Oracle {
        /// LCP instance file instead of a market case.
        #[arg(long)]
        lcp: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INVALID, message: message.into() }
    }
}

impl From<CaseError> for CliError {
    fn from(e: CaseError) -> Self {
        CliError::invalid(e.to_string())
    }
}

fn market_code(e: &MarketError) -> i32 {
    match e {
        MarketError::Infeasible(_) | MarketError::SolverFailure(_) | MarketError::Lcp(_) | MarketError::Lp(_) => EXIT_SOLVER,
        _ => EXIT_INVALID,
    }
}

impl From<MarketError> for CliError {
    fn from(e: MarketError) -> Self {
        CliError { code: market_code(&e), message: e.to_string() }
    }
}

impl From<PerturbationError> for CliError {
    fn from(e: PerturbationError) -> Self {
        let code = match &e {
            PerturbationError::Market(m) => market_code(m),
            PerturbationError::Lcp(_) => EXIT_SOLVER,
            _ => EXIT_INVALID,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<LcpError> for CliError {
    fn from(e: LcpError) -> Self {
        let code = match e {
            LcpError::Malformed(_) | LcpError::DimensionTooLarge { .. } => EXIT_INVALID,
            _ => EXIT_SOLVER,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<GameError> for CliError {
    fn from(e: GameError) -> Self {
        let code = match &e {
            GameError::AssertionFailed { .. } | GameError::NotAnEquilibrium { .. } => EXIT_CHECK_FAILED,
            GameError::IncompatibleGames(_) => EXIT_INVALID,
            GameError::Market(m) => market_code(m),
            _ => EXIT_SOLVER,
        };
        CliError { code, message: e.to_string() }
    }
}

struct Context {
    tol: f64,
    market: MarketOptions,
    beta: BetaOptions,
    parse: ParseOptions,
}

fn tolerance(flag: Option<f64>) -> Result<f64, CliError> {
    let tol = match flag {
        Some(t) => t,
        None => match std::env::var(TOLERANCE_ENV) {
            Ok(s) => s.trim().parse().map_err(|_| CliError::invalid(format!("{TOLERANCE_ENV}={s:?} is not a number")))?,
            Err(_) => DEFAULT_TOLERANCE,
        },
    };
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CliError::invalid(format!("tolerance must be positive, got {tol}")));
    }
    Ok(tol)
}

fn load(cli: &Cli, ctx: &Context) -> Result<ParsedCase, CliError> {
    let path = cli.case.as_deref().ok_or_else(|| CliError::invalid("--case is required"))?;
    Ok(parse_case_file(path, &ctx.parse)?)
}

fn default_wind_unit(p: &ParsedCase) -> Option<String> {
    p.perturbation
        .as_ref()
        .and_then(|s| s.wind_deltas.first().map(|w| w.unit.clone()))
        .or_else(|| p.case.generators.iter().find(|g| g.is_wind()).map(|g| g.id.clone()))
}

fn default_curtail_unit(p: &ParsedCase) -> Option<String> {
    p.perturbation
        .as_ref()
        .and_then(|s| s.curtailments.first().map(|c| c.unit.clone()))
        .or_else(|| p.case.demands.iter().find(|d| d.dispatchable).map(|d| d.id.clone()))
}

/// The scenario named by the flags, or the case's own perturbation section
/// when no magnitude flag is given.
fn scenario(p: &ParsedCase, a: &PerturbArgs) -> Result<PerturbationSpec, CliError> {
    if a.wind_delta.is_none() && a.kappa.is_none() {
        return match &p.perturbation {
            Some(s) if !s.is_empty() => Ok(s.clone()),
            _ => Err(CliError::invalid("no perturbation: pass --wind-delta/--kappa or add a perturbation section")),
        };
    }
    let mut spec = PerturbationSpec::default();
    if let Some(d) = a.wind_delta.filter(|d| *d != 0.0) {
        let unit = a.wind_unit.clone().or_else(|| default_wind_unit(p)).ok_or_else(|| CliError::invalid("case has no wind unit"))?;
        spec = spec.with_uniform_wind(&p.case, &unit, d)?;
    }
    if let Some(k) = a.kappa.filter(|k| *k != 0.0) {
        let unit = a
            .curtail_unit
            .clone()
            .or_else(|| default_curtail_unit(p))
            .ok_or_else(|| CliError::invalid("case has no dispatchable demand"))?;
        spec = spec.with_uniform_curtailment(&p.case, &unit, k)?;
    }
    spec.validate(&p.case)?;
    Ok(spec)
}

fn base_report(p: &ParsedCase) -> RunReport {
    RunReport { case: Some(p.case.name.clone()), warnings: p.warnings.clone(), ..Default::default() }
}

/// Runs one parsed command and returns the report plus the exit code it
/// should produce once written.
fn execute(cli: &Cli) -> Result<(RunReport, i32), CliError> {
    let tol = tolerance(cli.tol)?;
    let ctx = Context {
        tol,
        market: MarketOptions { validation: ValidationOptions { strict: cli.strict }, ..Default::default() },
        beta: BetaOptions { samples: cli.beta_samples, seed: cli.seed, ..Default::default() },
        parse: ParseOptions { strict: cli.strict },
    };
    match &cli.command {
        Command::Solve | Command::Settle => {
            let p = load(cli, &ctx)?;
            let sol = solve_market(&p.case, &ctx.market)?;
            let mut r = base_report(&p);
            r.solution = Some(SolutionSummary::new(&p.case, &sol));
            if matches!(cli.command, Command::Settle) {
                r.settlement = Some(settlement(&sol, &p.case));
            }
            Ok((r, EXIT_OK))
        }
        Command::Pmatrix => {
            let p = load(cli, &ctx)?;
            let am = assemble_lcp(&p.case, &ctx.market.validation)?;
            let mut r = base_report(&p);
            r.matrix_class = Some(classify_p_matrix(&am.instance.m, &ClassifyOptions { seed: cli.seed, ..Default::default() }));
            Ok((r, EXIT_OK))
        }
        Command::Bound(a) => {
            let p = load(cli, &ctx)?;
            let spec = scenario(&p, a)?;
            let pm = apply_perturbation(&p.case, &spec)?;
            let am = assemble_lcp(&p.case, &ctx.market.validation)?;
            let est = beta_of(&am.instance.m, &ctx.beta)
                .map_err(|e| CliError { code: EXIT_SOLVER, message: format!("bound unavailable: beta(M): {e}") })?;
            let mut r = base_report(&p);
            let bound = match perturbation_bound_with_beta(&am.instance, &pm.delta_m, &pm.delta_q, &est) {
                Ok(b) => b,
                Err(LcpError::EtaExceedsOne { bound, eta }) => {
                    r.warnings.push(format!("eta = {eta} >= 1: mu is undefined"));
                    *bound
                }
                Err(e) => return Err(e.into()),
            };
            if bound.beta_is_lower_bound {
                r.warnings.push(if is_singular(&am.instance.m) {
                    SINGULAR_NOTE.into()
                } else {
                    "beta is a sampled lower bound; mu is not certified".into()
                });
            }
            r.bound = Some(bound);
            Ok((r, EXIT_OK))
        }
        Command::Perturb(a) => {
            let p = load(cli, &ctx)?;
            let spec = scenario(&p, a)?;
            let rep = shift_analysis(&p.case, &spec, &ShiftOptions { market: ctx.market, beta: ctx.beta })?;
            let mut r = base_report(&p);
            let code = if rep.containment == Some(false) { EXIT_CHECK_FAILED } else { EXIT_OK };
            r.shift = Some(ShiftSummary::new(&p.case, &rep));
            Ok((r, code))
        }
        Command::Sweep(a) => {
            let p = load(cli, &ctx)?;
            let wind_unit = a.wind_unit.clone().or_else(|| default_wind_unit(&p)).ok_or_else(|| CliError::invalid("case has no wind unit"))?;
            let axes = SweepAxes {
                wind_unit,
                wind_deltas: a.wind_delta.clone(),
                curtailed_unit: a.curtail_unit.clone().or_else(|| default_curtail_unit(&p)),
                kappas: a.kappa.clone(),
                penetration_scales: a.penetration_scale.clone(),
            };
            let table = sweep(&p.case, &axes, &ShiftOptions { market: ctx.market, beta: ctx.beta })?;
            let mut r = base_report(&p);
            r.sweep = Some(table);
            Ok((r, EXIT_OK))
        }
        Command::VerifyNash => {
            let p = load(cli, &ctx)?;
            let sol = solve_market(&p.case, &ctx.market)?;
            let cert = certify_epsilon_equilibrium(&p.case, &sol, ctx.tol)?;
            let code = if cert.is_nash_within { EXIT_OK } else { EXIT_CHECK_FAILED };
            let mut r = base_report(&p);
            r.certificate = Some(cert);
            Ok((r, code))
        }
        Command::Check2alpha(a) => {
            let p = load(cli, &ctx)?;
            let spec = scenario(&p, a)?;
            let perturbed = apply_perturbation(&p.case, &spec)?.case;
            let sol = solve_market(&perturbed, &ctx.market)?;
            let rep = check_two_alpha(&p.case, &perturbed, &sol, &ctx.market, ctx.tol)?;
            let mut r = base_report(&p);
            r.two_alpha = Some(rep);
            Ok((r, EXIT_OK))
        }
        Command::Oracle { lcp } => {
            let (inst, mut r) = match lcp {
                Some(path) => (read_lcp(path)?, RunReport::default()),
                None => {
                    let p = load(cli, &ctx)?;
                    let inst = assemble_lcp(&p.case, &ctx.market.validation)?.instance;
                    (inst, base_report(&p))
                }
            };
            let summary = oracle_check(&inst, ctx.tol)?;
            let code = if summary.agrees { EXIT_OK } else { EXIT_CHECK_FAILED };
            r.oracle = Some(summary);
            Ok((r, code))
        }
    }
}

fn read_lcp(path: &Path) -> Result<LcpInstance, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))?;
    let rec: LcpInstanceRecord =
        serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    Ok(LcpInstance::try_from(&rec)?)
}

fn oracle_check(inst: &LcpInstance, tol: f64) -> Result<OracleSummary, CliError> {
    let all = enumerate_lcp_oracle(inst)?;
    let sol = solve_lcp(inst, &SolverOptions::default())?;
    let distinct = all.distinct(tol);
    let diff = distinct
        .iter()
        .map(|o| o.x.iter().zip(&sol.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min);
    Ok(OracleSummary {
        dimension: inst.dim(),
        bases_checked: all.bases_checked,
        distinct_solutions: distinct.len(),
        max_abs_difference: diff,
        agrees: diff <= tol,
    })
}

fn default_format(cmd: &Command) -> ReportFormat {
    match cmd {
        Command::Sweep(_) => ReportFormat::Csv,
        _ => ReportFormat::Text,
    }
}

fn write_output(cli: &Cli, report: &RunReport) -> Result<(), CliError> {
    let format = cli.format.map(ReportFormat::from).unwrap_or_else(|| default_format(&cli.command));
    let bytes = emit_report(report, format).map_err(|e| CliError { code: EXIT_SOLVER, message: e.to_string() })?;
    match &cli.out {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| CliError { code: EXIT_SOLVER, message: format!("cannot write {}: {e}", path.display()) }),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| CliError { code: EXIT_SOLVER, message: format!("cannot write output: {e}") })
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok((report, code)) => {
            if let Err(e) = write_output(&cli, &report) {
                eprintln!("error: {}", e.message);
                return e.code;
            }
            if code == EXIT_CHECK_FAILED {
                eprintln!("error: check failed; see report");
            }
            code
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_globals() {
        let cli = Cli::try_parse_from([
            "market-lcp",
            "sweep",
            "--case",
            "x.json",
            "--wind-delta",
            "0.1,0.2",
            "--kappa",
            "0.0,0.1",
            "--seed",
            "7",
        ])
        .unwrap();
        assert_eq!(cli.seed, 7);
        match cli.command {
            Command::Sweep(a) => {
                assert_eq!(a.wind_delta, vec![0.1, 0.2]);
                assert_eq!(a.kappa, vec![0.0, 0.1]);
                assert_eq!(a.penetration_scale, vec![1.0]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn usage_errors_are_validation_failures() {
        assert_eq!(run(["market-lcp", "no-such-command"]), EXIT_INVALID);
        assert_eq!(run(["market-lcp", "solve"]), EXIT_INVALID);
    }
}
