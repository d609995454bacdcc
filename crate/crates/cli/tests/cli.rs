use std::path::Path;
use std::process::{Command, Output};

use rkenergy::rational::int;
use rkenergy::{catalog, ButcherTableau};

fn rkenergy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rkenergy"))
        .args(args)
        .env_remove("RKENERGY_PRECISION")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn field(o: &Output, key: &str) -> String {
    let prefix = format!("{key}=");
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&prefix).map(str::to_string))
        .unwrap_or_else(|| panic!("no `{key}` in\n{}", stdout(o)))
}

fn terms(o: &Output) -> Vec<String> {
    stdout(o)
        .lines()
        .filter_map(|l| l.strip_prefix("term=").map(str::to_string))
        .collect()
}

#[test]
fn analyze_reports_unique_quadrature_node() {
    let o = rkenergy(&["analyze", "ssprk33"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("unique quadrature node: yes"), "{text}");
    assert!(text.contains("Lipschitz-impossible theorem applies"), "{text}");
    assert!(text.contains("sign condition: violated at k = 1"), "{text}");
}

#[test]
fn analyze_proves_sign_condition() {
    let o = rkenergy(&["analyze", "paper_c4s2"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("sign condition: proved negative for all k"));
    let m = rkenergy(&["analyze", "paper_c4s2", "--format", "machine"]);
    assert_eq!(field(&m, "sign_condition"), "proved_negative_all_k");
    assert_eq!(field(&m, "sign_condition_route"), "binary_nodes");
    assert_eq!(field(&m, "unique_quadrature_nodes"), "none");
    assert_eq!(field(&m, "order"), "2");
}

#[test]
fn analyze_unknown_method_is_a_usage_error() {
    let o = rkenergy(&["analyze", "nosuchmethod"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nosuchmethod"));
}

#[test]
fn analyze_implicit_method_does_not_apply_theorems() {
    let o = rkenergy(&["analyze", "implicit_midpoint", "--format", "machine"]);
    assert_eq!(code(&o), 0);
    assert_eq!(field(&o, "explicit"), "false");
    assert_eq!(field(&o, "lipschitz_impossible_applies"), "false");
    assert_eq!(field(&o, "algebraically_stable"), "true");
}

#[test]
fn machine_output_is_byte_stable_key_value() {
    for args in [
        &["analyze", "ssprk104", "--format", "machine"][..],
        &["expand", "paper_c5s3", "6", "--format", "machine"][..],
    ] {
        let a = rkenergy(args);
        let b = rkenergy(args);
        assert_eq!(code(&a), 0);
        assert_eq!(a.stdout, b.stdout);
        for line in stdout(&a).lines() {
            let (k, _) = line.split_once('=').unwrap_or_else(|| panic!("not key=value: {line}"));
            assert!(!k.is_empty() && !k.contains(' '), "{line}");
        }
    }
}

#[test]
fn expand_ssprk33_fourth_order_terms() {
    let o = rkenergy(&["expand", "ssprk33", "4", "--format", "machine"]);
    assert_eq!(code(&o), 0);
    let t = terms(&o);
    assert!(t.contains(&"4 t [[t]] 1 6".to_string()), "{t:?}");
    assert!(t.contains(&"4 t [t,t] -1 12".to_string()), "{t:?}");
    assert!(t.contains(&"4 [t] [t] 1 12".to_string()), "{t:?}");
    let nonzero_fourth: Vec<_> = t.iter().filter(|r| r.starts_with("4 ")).collect();
    assert_eq!(nonzero_fourth.len(), 3);
}

#[test]
fn expand_test_method_includes_eighth_order_term() {
    let o = rkenergy(&["expand", "paper_testmethod", "8", "--format", "machine"]);
    assert_eq!(code(&o), 0);
    assert!(terms(&o).contains(&"8 [t,t,t] [t,t,t] 1019 1622016".to_string()));
    let text = stdout(&rkenergy(&["expand", "paper_testmethod", "8"]));
    assert!(text.contains("1019/1622016"));
}

#[test]
fn expand_euler_has_single_term() {
    let o = rkenergy(&["expand", "euler", "2", "--format", "machine"]);
    assert_eq!(terms(&o), vec!["2 t t 1 1".to_string()]);
}

#[test]
fn expand_rejects_order_above_cap() {
    assert_eq!(code(&rkenergy(&["expand", "ssprk33", "9"])), 1);
}

#[test]
fn expand_csv_quotes_trees() {
    let o = rkenergy(&["expand", "ssprk33", "4", "--format", "csv"]);
    let text = stdout(&o);
    assert!(text.starts_with("order,tree1,tree2,numerator,denominator\n"));
    assert!(text.contains("4,t,\"[t,t]\",-1,12"), "{text}");
}

#[test]
fn simulate_midpoint_extended_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("mid.csv");
    let o = rkenergy(&[
        "simulate",
        "midpoint",
        "invsqrot",
        "1e-1",
        "1000",
        "--extended",
        "--format",
        "machine",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(field(&o, "verdict"), "constant_within");
    assert_eq!(field(&o, "precision"), "extended");
    assert_eq!(field(&o, "steps"), "10000");
    let data = std::fs::read_to_string(&csv).unwrap();
    let mut lines = data.lines();
    assert_eq!(lines.next(), Some("t,energy"));
    assert_eq!(lines.next(), Some("0,1"));
    assert_eq!(data.lines().count(), 10002);
}

#[test]
fn simulate_energy_stable_method_decays() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c5s3.csv");
    let o = rkenergy(&[
        "simulate",
        "paper_c5s3",
        "invsqrot",
        "1e-1",
        "1000",
        "--stride",
        "100",
        "--format",
        "machine",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(field(&o, "verdict"), "nonincreasing");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 102);
}

#[test]
fn simulate_reads_precision_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_rkenergy"))
        .args(["simulate", "ssprk33", "spike:ssprk33:3", "0.01", "1", "--format", "machine", "--out"])
        .arg(&csv)
        .env("RKENERGY_PRECISION", "extended")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(field(&o, "precision"), "extended");
    assert_eq!(field(&o, "verdict"), "increasing_detected");
    assert_eq!(field(&o, "strict_increases"), "100");
}

#[test]
fn simulate_default_csv_name_in_working_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rkenergy"))
        .args(["simulate", "ssprk33", "cubicrot", "0.1", "1"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("ssprk33_cubicrot_1e-1.csv").is_file());
}

#[test]
fn simulate_error_classes() {
    assert_eq!(code(&rkenergy(&["simulate", "implicit_midpoint", "cubicrot", "0.1", "1"])), 2);
    assert_eq!(code(&rkenergy(&["simulate", "ssprk33", "nosuchproblem", "0.1", "1"])), 1);
    assert_eq!(code(&rkenergy(&["simulate", "ssprk33", "cubicrot", "-0.1", "1"])), 1);
    assert_eq!(code(&rkenergy(&["simulate", "ssprk33", "cubicrot", "0.1", "1", "--stride", "0"])), 1);
    assert_eq!(code(&rkenergy(&["simulate", "ssprk33", "spike:paper_c4s2:1", "0.1", "1"])), 2);
}

#[test]
fn counterexample_matches_prediction() {
    let o = rkenergy(&["counterexample", "ssprk33", "3", "0.01", "0.001", "--format", "machine"]);
    assert_eq!(code(&o), 0);
    let predicted: f64 = field(&o, "predicted").parse().unwrap();
    let measured: f64 = field(&o, "measured").parse().unwrap();
    assert!((predicted - 4.444e-11).abs() < 1e-14);
    assert!(((measured - predicted) / predicted).abs() <= 1e-10);
    assert_eq!(field(&o, "agree"), "true");
}

#[test]
fn counterexample_refuses_without_unique_node() {
    let o = rkenergy(&["counterexample", "paper_c4s2", "1", "0.01", "0.001"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no unique quadrature node"), "{}", stderr(&o));
}

#[test]
fn counterexample_midpoint_second_stage() {
    let o = rkenergy(&["counterexample", "midpoint", "2", "0.01", "0.001"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&rkenergy(&["counterexample", "midpoint", "3", "0.01", "0.001"])), 1);
    assert_eq!(code(&rkenergy(&["counterexample", "midpoint", "0", "0.01", "0.001"])), 1);
    assert_eq!(code(&rkenergy(&["counterexample", "implicit_midpoint", "1", "0.01", "0.001"])), 2);
}

#[test]
fn search_writes_a_verifiable_tableau() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("found.txt");
    let args = [
        "search",
        "--nodes",
        "0,1/2,1,0,1",
        "--order",
        "3",
        "--seed",
        "2024",
        "--format",
        "machine",
        "--out",
        out.to_str().unwrap(),
    ];
    let o = rkenergy(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(field(&o, "verified"), "true");
    let again = rkenergy(&args);
    assert_eq!(o.stdout, again.stdout);
    let path = out.to_str().unwrap();
    let a = rkenergy(&["analyze", path, "--format", "machine"]);
    assert_eq!(field(&a, "order"), "3");
    assert_eq!(field(&a, "sign_condition"), "proved_negative_all_k");
    let v = rkenergy(&["search", "--verify", path, "--order", "3", "--format", "machine"]);
    assert_eq!(field(&v, "verified"), "true");
}

#[test]
fn search_refuses_unique_max_node() {
    let o = rkenergy(&["search", "--nodes", "0,1,1/2", "--order", "2"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("only node of maximal magnitude"));
    assert_eq!(code(&rkenergy(&["search", "--nodes", "0,x", "--order", "2"])), 1);
    assert_eq!(code(&rkenergy(&["search", "--nodes", "0,1,0,1", "--order", "5"])), 1);
    assert_eq!(code(&rkenergy(&["search"])), 1);
}

#[test]
fn search_verify_diagnoses_fourth_order_obstruction() {
    let o = rkenergy(&["search", "--verify", "ssprk104", "--format", "machine"]);
    assert_eq!(code(&o), 0);
    assert_eq!(field(&o, "obstruction_leading_coefficient"), "0");
    assert_eq!(field(&o, "obstruction_residuals_vanish"), "false");
}

#[test]
fn suite_filter_runs_subset() {
    let o = rkenergy(&["suite", "--filter", "expansion", "--format", "machine"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let criteria: Vec<_> = stdout(&o).lines().filter(|l| l.starts_with("criterion_")).map(str::to_string).collect();
    assert_eq!(
        criteria,
        vec![
            "criterion_01_expansion-exactness=pass",
            "criterion_02_vanishing-pairs=pass",
            "criterion_04_cross-identity=pass",
            "criterion_10_expansion-oracle=pass",
        ]
    );
    assert_eq!(code(&rkenergy(&["suite", "--filter", "no-such-criterion"])), 1);
}

fn write_corrupted_c4s2(path: &Path) {
    let good = catalog::paper_c4s2();
    let mut a = good.a().to_vec();
    a[3][1] = int(2);
    let bad = ButcherTableau::new("paper_c4s2", a, good.b().to_vec(), good.c().to_vec()).unwrap();
    std::fs::write(path, bad.to_text()).unwrap();
}

#[test]
fn suite_names_the_failure_for_a_corrupted_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.txt");
    write_corrupted_c4s2(&file);
    let o = rkenergy(&["suite", "--filter", "sign-condition", "--tableau", file.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let text = stdout(&o);
    assert!(text.contains("sign-condition") && text.contains("FAIL"), "{text}");
    assert!(text.contains("paper_c4s2"), "{text}");
    let clean = rkenergy(&["suite", "--filter", "sign-condition"]);
    assert_eq!(code(&clean), 0);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&rkenergy(&[])), 1);
    assert_eq!(code(&rkenergy(&["analyze"])), 1);
    assert_eq!(code(&rkenergy(&["analyze", "ssprk33", "--format", "yaml"])), 1);
    assert_eq!(code(&rkenergy(&["--help"])), 0);
    let missing = rkenergy(&["analyze", "ssprk33", "--tableau", "/nonexistent/file"]);
    assert_eq!(code(&missing), 1);
}
