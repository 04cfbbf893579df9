//! Property tests over randomly generated instances, cases and reports.

mod common;

use market_lcp::game::{certify_epsilon_equilibrium, BlockSpace, DEFAULT_NASH_TOLERANCE};
use market_lcp::io::{emit_report, parse_case_file, parse_case_str, CaseFile, ParseOptions, ReportFormat, RunReport, SolutionSummary};
use market_lcp::lcp::{perturbation_bound, solve_lcp, BetaOptions, SolverOptions};
use market_lcp::market::{settlement, solve_market, solve_welfare_lp, MarketCase, MarketOptions};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{data_path, random_market, random_p_lcp};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random market that the welfare LP can clear.
fn feasible_market(seed: u64) -> MarketCase {
    let mut r = rng(seed);
    for tag in 0.. {
        let case = random_market(&mut r, tag);
        if solve_welfare_lp(&case, &Default::default()).is_ok() {
            return case;
        }
    }
    unreachable!()
}

fn round_trip(case: &MarketCase) -> MarketCase {
    let text = CaseFile::from_market_case(case, None).to_json();
    parse_case_str(&text, &ParseOptions::default()).expect("emitted case parses").case
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lemke_solutions_are_complementary(seed in any::<u64>(), n in 1usize..8) {
        let inst = random_p_lcp(&mut rng(seed), n);
        let sol = solve_lcp(&inst, &SolverOptions::default()).unwrap();
        prop_assert!(sol.satisfies(1e-9));
        prop_assert!(sol.residual(&inst) <= 1e-9);
    }

    #[test]
    fn random_cases_round_trip(seed in any::<u64>()) {
        let case = random_market(&mut rng(seed), 0);
        prop_assert_eq!(round_trip(&case), case);
    }

    #[test]
    fn best_response_is_scale_invariant(
        sizes in prop::collection::vec(0.5f64..20.0, 1..5),
        weights in prop::collection::vec(-50.0f64..50.0, 5),
        lower_frac in 0.0f64..1.0,
        scale in 0.01f64..100.0,
    ) {
        let total: f64 = sizes.iter().sum();
        let space = BlockSpace { sizes_mw: sizes.clone(), lower_mw: lower_frac * total * 0.5, upper_mw: total };
        let w = &weights[..sizes.len()];
        let scaled: Vec<f64> = w.iter().map(|v| v * scale).collect();
        let (v1, p1) = space.maximize(w);
        let (v2, p2) = space.maximize(&scaled);
        prop_assert!(space.contains(&p1, 1e-9));
        prop_assert_eq!(p1, p2);
        prop_assert!((v2 - scale * v1).abs() <= 1e-9 * (1.0 + v2.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reports_round_trip_through_json(seed in any::<u64>()) {
        let case = feasible_market(seed);
        let sol = solve_market(&case, &MarketOptions::default()).unwrap();
        let mut r = rng(seed ^ 0x5eed);
        let inst = random_p_lcp(&mut r, 3);
        let bound = perturbation_bound(&inst, &DMatrix::zeros(3, 3), &DVector::from_element(3, 1e-3), &BetaOptions::default()).unwrap();
        let report = RunReport {
            case: Some(case.name.clone()),
            warnings: vec![format!("seed {seed}")],
            solution: Some(SolutionSummary::new(&case, &sol)),
            settlement: Some(settlement(&sol, &case)),
            bound: Some(bound),
            certificate: Some(certify_epsilon_equilibrium(&case, &sol, DEFAULT_NASH_TOLERANCE).unwrap()),
            ..RunReport::default()
        };
        let bytes = emit_report(&report, ReportFormat::Json).unwrap();
        let back: RunReport = serde_json::from_slice(&bytes).unwrap();
        prop_assert_eq!(back, report);
    }

    #[test]
    fn solving_is_deterministic(seed in any::<u64>()) {
        let case = feasible_market(seed);
        let a = solve_market(&case, &MarketOptions::default()).unwrap();
        let b = solve_market(&case, &MarketOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn bundled_cases_round_trip() {
    for name in ["ieee30.json", "tiny2bus.json", "onebus.json"] {
        let parsed = parse_case_file(&data_path(name), &ParseOptions::default()).unwrap();
        let text = CaseFile::from_market_case(&parsed.case, parsed.perturbation.clone()).to_json();
        let again = parse_case_str(&text, &ParseOptions::default()).unwrap();
        assert_eq!(again.case, parsed.case, "{name}");
        assert_eq!(again.perturbation, parsed.perturbation, "{name}");
    }
}

#[test]
fn empty_report_is_an_empty_document() {
    let r = RunReport::default();
    assert_eq!(emit_report(&r, ReportFormat::Json).unwrap(), b"{}\n");
    assert!(emit_report(&r, ReportFormat::Csv).unwrap().is_empty());
}
