use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mvmr-me"));
    c.env_remove("MVMR_ME_WORKERS");
    c
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn estimate_reports_every_method_and_exposure() {
    let input = data("summary.tsv");
    let corr = data("trait_corr.tsv");
    let o = run(&["estimate", "--input", input.to_str().unwrap(), "--trait-corr", corr.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method\texposure\testimate\tse\tci_lower\tci_upper\tp_value\tconverged\titerations");
    assert_eq!(lines.len(), 7);
    for (line, method) in lines[1..].iter().zip(["IVW", "IVW", "MLE", "MLE", "MLE_COR", "MLE_COR"]) {
        let f: Vec<&str> = line.split('\t').collect();
        assert_eq!(f[0], method);
        let est: f64 = f[2].parse().unwrap();
        let lo: f64 = f[4].parse().unwrap();
        let hi: f64 = f[5].parse().unwrap();
        assert!(lo < est && est < hi);
    }
}

#[test]
fn json_output_is_byte_identical_across_runs() {
    let input = data("summary.tsv");
    let args = ["estimate", "--input", input.to_str().unwrap(), "--format", "json", "--seed", "11"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["results"].as_array().unwrap().len(), 2);
    assert_eq!(v["results"][0]["method"], "IVW");
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("est.tsv");
    let input = data("summary.tsv");
    let a = run(&["estimate", "--input", input.to_str().unwrap(), "--ivw"]);
    let b = run(&["estimate", "--input", input.to_str().unwrap(), "--ivw", "--output", out.to_str().unwrap()]);
    assert!(b.status.success());
    assert!(b.stdout.is_empty());
    assert_eq!(std::fs::read(&out).unwrap(), a.stdout);
}

#[test]
fn missing_column_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.tsv");
    let text = std::fs::read_to_string(data("summary.tsv")).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split('\t').collect();
            f.pop();
            f.join("\t") + "\n"
        })
        .collect();
    std::fs::write(&path, stripped).unwrap();
    let o = run(&["estimate", "--input", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("se_y"), "{}", stderr(&o));
}

#[test]
fn invalid_standard_error_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.tsv");
    let text = std::fs::read_to_string(data("summary.tsv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut f: Vec<String> = lines[3].split('\t').map(String::from).collect();
    *f.last_mut().unwrap() = "0".into();
    lines[3] = f.join("\t");
    std::fs::write(&path, lines.join("\n")).unwrap();
    let o = run(&["estimate", "--input", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rs3"), "{}", stderr(&o));
}

#[test]
fn mle_cor_without_correlation_is_rejected() {
    let input = data("summary.tsv");
    let o = run(&["estimate", "--input", input.to_str().unwrap(), "--mle-cor"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mediation_from_published_effects() {
    let effects = data("education_chd.tsv");
    let o = run(&["mediate", "--effects", effects.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let p = v["proportion_mediated"].as_f64().unwrap();
    assert!((p - (1.0 - 0.218 / 0.481)).abs() < 1e-12);
    let se = v["se_proportion"].as_f64().unwrap();
    assert!((se - 0.1515).abs() < 1e-3);
}

#[test]
fn identical_effects_mediate_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eff.tsv");
    std::fs::write(
        &path,
        "effect\testimate\tci_lower\tci_upper\ntotal\t0.3\t0.2\t0.4\ndirect\t0.3\t0.2\t0.4\n",
    )
    .unwrap();
    let o = run(&["mediate", "--effects", path.to_str().unwrap()]);
    assert!(o.status.success());
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    assert_eq!(row.split('\t').nth(4), Some("0"));
}

#[test]
fn malformed_interval_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eff.tsv");
    std::fs::write(
        &path,
        "effect\testimate\tci_lower\tci_upper\ntotal\t-0.481\t-0.378\t-0.584\ndirect\t-0.218\t-0.353\t-0.083\n",
    )
    .unwrap();
    let o = run(&["mediate", "--effects", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_total_effect_is_an_estimation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eff.tsv");
    std::fs::write(
        &path,
        "effect\testimate\tci_lower\tci_upper\ntotal\t0\t-0.1\t0.1\ndirect\t0.1\t0\t0.2\n",
    )
    .unwrap();
    let o = run(&["mediate", "--effects", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn mediation_from_summary_data() {
    let input = data("summary.tsv");
    let o = run(&["mediate", "--input", input.to_str().unwrap(), "--exposure", "1", "--method", "ivw"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["mediate", "--input", input.to_str().unwrap(), "--exposure", "9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bias_diagnostics_with_prediction() {
    let input = data("summary.tsv");
    let o = run(&["bias-diagnose", "--input", input.to_str().unwrap(), "--theta", "0.2,0", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let lambda = v["lambda"][0].as_f64().unwrap();
    assert!(lambda > 0.0 && lambda < 1.0);
    assert!(v["predicted_bias"][0].as_f64().unwrap() < 0.0);
    // Without an error cross-moment both predictions agree.
    for k in 0..2 {
        let a = v["predicted_bias"][k].as_f64().unwrap();
        let b = v["predicted_bias_correlated"][k].as_f64().unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1e-3), "{a} vs {b}");
    }
}

#[test]
fn simulate_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    let o = run(&[
        "simulate", "--scenario", "S3", "--seed", "5", "--reps", "4", "--rho", "0.2", "--sigma-zeta1-sq", "1",
        "--n", "2000", "--j", "20", "--f-stats", "--emit-raw", raw.to_str().unwrap(), "--workers", "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 3 * 2);
    let raw_text = std::fs::read_to_string(&raw).unwrap();
    assert_eq!(raw_text.lines().count(), 1 + 4 * 3);
}

#[test]
fn simulate_is_independent_of_worker_count() {
    let base = [
        "simulate", "--scenario", "mediation", "--seed", "9", "--reps", "6", "--theta1", "0.1", "--sigma-zeta1-sq", "0",
        "--sigma-zeta2-sq", "1", "--n", "2000", "--format", "json",
    ];
    let one = bin().args(base).args(["--workers", "1"]).output().unwrap();
    let many = bin().args(base).env("MVMR_ME_WORKERS", "8").output().unwrap();
    assert!(one.status.success(), "{}", stderr(&one));
    assert!(many.status.success(), "{}", stderr(&many));
    assert_eq!(one.stdout, many.stdout);
}

#[test]
fn binary_mediation_is_rejected() {
    let o = run(&["simulate", "--scenario", "mediation", "--seed", "1", "--outcome", "binary", "--reps", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
