use std::path::Path;
use std::process::{Command, Output};

use fpt::linalg::MatrixJson;
use fpt::transformer::{ModelJson, TransformerModel};
use fpt::{FpFormat, FpMatrix};
use serde_json::Value;

fn fpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpt")).args(args).output().expect("run fpt")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap() + "\n"
}

#[test]
fn verify_writes_a_report_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let o = fpt(&["verify", "--p", "2", "--q", "4", "--suite", "three-max,lemma-onep2", "--seed", "42", "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let reports: Vec<Value> = serde_json::from_str(&read(&report)).unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["suite"], "three-max");
    assert_eq!(reports[0]["total"], 152);
    assert_eq!(reports[0]["failed"], 0);
    assert_eq!(reports[1]["seed"], 42);
}

#[test]
fn every_suite_passes_with_small_samples() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("all.json");
    let o = fpt(&["verify", "--p", "2", "--q", "4", "--suite", "all", "--seed", "42", "--samples", "10", "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let reports: Vec<Value> = serde_json::from_str(&read(&report)).unwrap();
    assert_eq!(reports.len(), fpt::verify::SUITES.len());
    assert!(reports.iter().all(|r| r["failed"] == 0));
}

#[test]
fn skipped_suites_do_not_fail_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let o = fpt(&["verify", "--p", "2", "--q", "4", "--suite", "lemma-oneppp", "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let reports: Vec<Value> = serde_json::from_str(&read(&report)).unwrap();
    assert!(reports[0]["skipped"].as_u64().unwrap() > 0);
    assert_eq!(reports[0]["failed"], 0);
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["verify", "--p", "2", "--q", "4", "--suite", "nope"][..],
        &["verify", "--p", "2"][..],
        &["verify", "--p", "2", "--q", "4", "--frobnicate"][..],
        &["verify", "--preset", "e4m3", "--p", "3", "--q", "4"][..],
        &["verify", "--p", "0", "--q", "4"][..],
        &["enumerate"][..],
        &[][..],
    ] {
        assert_eq!(fpt(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn theorem_suites_reject_formats_outside_condition_one() {
    let o = fpt(&["verify", "--p", "1", "--q", "3", "--suite", "thm2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn presets_expand_to_their_formats() {
    let e4m3 = stdout(&fpt(&["enumerate", "--preset", "e4m3", "--finite"]));
    assert_eq!(e4m3.lines().count(), fpt::fp::finite_count(FpFormat::new(3, 4).unwrap()));
    let e5m2 = stdout(&fpt(&["enumerate", "--preset", "e5m2"]));
    let by_flags = stdout(&fpt(&["enumerate", "--p", "2", "--q", "5"]));
    assert_eq!(e5m2, by_flags);
    assert!(e5m2.lines().any(|l| l.ends_with("\tinf")));
}

#[test]
fn nonassoc_trace_shows_both_orders() {
    let o = fpt(&["trace", "nonassoc", "--p", "3", "--q", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("a = 1.125"));
    assert!(out.contains("b = 1.25"));
    assert!(out.contains("rounds to 3.5 "));
    assert!(out.contains("rounds to 3.75 "));
    assert!(out.contains("exact sum 29/8"));
}

#[test]
fn built_thm1_model_reproduces_its_target_table() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("m.json");
    let o = fpt(&["build", "thm1", "--p", "2", "--q", "4", "--alphabet", "1,1.25,2,3", "--n", "3", "--seed", "7", "--output", model_path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let manifest: Value = serde_json::from_str(&read(&dir.path().join("m.manifest.json"))).unwrap();
    assert_eq!(manifest["theorem"], "order-detector");
    assert_eq!(manifest["gamma"], 4);
    assert!(manifest["dimensions"]["t_d"].as_u64().unwrap() > 0);
    let table = manifest["target_table"].as_array().unwrap();
    assert_eq!(table.len(), 24);

    // The model file parses and re-serializes to the same bytes.
    let text = read(&model_path);
    let model = TransformerModel::from_json(&serde_json::from_str::<ModelJson>(&text).unwrap()).unwrap();
    assert_eq!(pretty(&model.to_json()), text);

    for (i, entry) in table.iter().enumerate().step_by(5) {
        let input = dir.path().join(format!("x{i}.json"));
        let output = dir.path().join(format!("y{i}.json"));
        std::fs::write(&input, pretty(&entry["input"])).unwrap();
        let o = fpt(&["eval", "--model", model_path.to_str().unwrap(), "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        let got: MatrixJson = serde_json::from_str(&read(&output)).unwrap();
        let want: MatrixJson = serde_json::from_value(entry["output"].clone()).unwrap();
        let fmt = model.format;
        assert_eq!(FpMatrix::from_json(&got, fmt).unwrap(), FpMatrix::from_json(&want, fmt).unwrap());
        assert_eq!(pretty(&FpMatrix::from_json(&got, fmt).unwrap().to_json(fmt)), read(&output));
    }
}

#[test]
fn built_thm3_model_reproduces_its_target_table() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("m3.json");
    let manifest_path = dir.path().join("ledger.json");
    let o = fpt(&[
        "build", "thm3", "--p", "2", "--q", "4", "--alphabet", "0x1c,-2,0.5", "--n", "4", "--samples", "30", "--seed", "3",
        "--output", model_path.to_str().unwrap(), "--manifest", manifest_path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: Value = serde_json::from_str(&read(&manifest_path)).unwrap();
    let table = manifest["target_table"].as_array().unwrap();
    assert!(table.len() >= 3);
    let model = TransformerModel::from_json(&serde_json::from_str::<ModelJson>(&read(&model_path)).unwrap()).unwrap();
    for entry in table {
        let x = FpMatrix::from_json(&serde_json::from_value(entry["input"].clone()).unwrap(), model.format).unwrap();
        let y = FpMatrix::from_json(&serde_json::from_value(entry["output"].clone()).unwrap(), model.format).unwrap();
        assert_eq!(model.forward(&x).unwrap(), y);
    }
}

#[test]
fn build_rejects_inexact_alphabet_literals() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let o = fpt(&["build", "thm1", "--p", "2", "--q", "4", "--alphabet", "1,1.1,2", "--n", "3", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not representable"));
    assert!(!out.exists());
}
