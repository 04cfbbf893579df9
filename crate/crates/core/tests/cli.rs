//! End-to-end runs of the command-line binary.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{data_path, golden_path};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_market-lcp"))
        .args(args)
        .env_remove("MARKET_LCP_TOL")
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn case(name: &str) -> String {
    data_path(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 output")
}

/// Compares with the pinned file; `UPDATE_GOLDEN=1` rewrites it instead.
fn check_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "output differs from {}", path.display());
}

#[test]
fn solve_prints_a_uniform_price_and_matches_golden() {
    let o = run(&["--case", &case("ieee30.json"), "solve"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("uniform LMP"), "{text}");
    check_golden("ieee30_solve.txt", &text);
}

#[test]
fn settle_matches_golden_in_text_and_csv() {
    let o = run(&["--case", &case("ieee30.json"), "settle"]);
    assert_eq!(o.status.code(), Some(0));
    check_golden("ieee30_settle.txt", &stdout(&o));

    let o = run(&["--case", &case("ieee30.json"), "--format", "csv", "settle"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = stdout(&o);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("role,unit_id,bus,quantity_mw,price_per_mwh,revenue_per_h,cost_per_h,profit_per_h")
    );
    // 5 generators and 6 dispatchable demands
    assert_eq!(lines.count(), 11);
    assert!(!csv.contains('\r'));
}

#[test]
fn sweep_grid_has_one_row_per_cell() {
    let o = run(&["--case", &case("ieee30.json"), "--beta-samples", "16", "sweep", "--wind-delta", "0.1,0.2", "--kappa", "0.0,0.1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5, "{csv}");
    assert!(lines[0].starts_with("wind_delta,kappa,penetration_scale"));
}

#[test]
fn pmatrix_on_small_case_is_exact() {
    let o = run(&["--case", &case("tiny2bus.json"), "--format", "json", "pmatrix"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["matrix_class"]["method"], "exact_minors");
    assert_eq!(v["matrix_class"]["dimension"], 20);
}

#[test]
fn strict_mode_rejects_the_bundled_demand_stacks() {
    let o = run(&["--case", &case("ieee30.json"), "--strict", "solve"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn usage_and_input_errors_exit_one() {
    assert_eq!(run(&["--case", "/nonexistent/case.json", "solve"]).status.code(), Some(1));
    assert_eq!(run(&["solve"]).status.code(), Some(1));
    assert_eq!(run(&["--case", &case("ieee30.json"), "sweep", "--wind-delta", "x"]).status.code(), Some(1));
    let bad_tol = Command::new(env!("CARGO_BIN_EXE_market-lcp"))
        .args(["--case", &case("onebus.json"), "verify-nash"])
        .env("MARKET_LCP_TOL", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(bad_tol.status.code(), Some(1));
}

#[test]
fn game_checks_pass_on_the_bundled_case() {
    let o = run(&["--case", &case("ieee30.json"), "--format", "json", "verify-nash"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["certificate"]["is_nash_within"], true);

    let o = run(&["--case", &case("ieee30.json"), "--format", "json", "check-2alpha"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["two_alpha"]["holds"], true);
}

#[test]
fn oracle_agrees_on_a_bundled_lcp_and_refuses_large_cases() {
    let o = run(&["--format", "json", "oracle", "--lcp", &case("lcp3.json")]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["--case", &case("ieee30.json"), "oracle"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn identical_inputs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let outputs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("r{i}.json"));
            let o = run(&[
                "--case",
                &case("onebus.json"),
                "--format",
                "json",
                "--seed",
                "7",
                "--out",
                out.to_str().unwrap(),
                "perturb",
            ]);
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
            std::fs::read(&out).unwrap()
        })
        .collect();
    assert!(!outputs[0].is_empty());
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn bundled_cases_exist() {
    for name in ["ieee30.json", "tiny2bus.json", "onebus.json", "lcp3.json", "case.schema.json"] {
        assert!(Path::new(&case(name)).exists(), "{name}");
    }
}
