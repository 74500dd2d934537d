use std::path::PathBuf;

use metakit::cli::run_with;
use serde_json::Value;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("metakit").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn run_json(args: &[&str]) -> Value {
    let (code, out, err) = run(args);
    assert_eq!(code, 0, "stderr: {err}");
    serde_json::from_str(&out).expect("valid JSON")
}

#[test]
fn pool_binary_random() {
    let input = data("five_studies.csv");
    let v = run_json(&["pool", "--kind", "binary", "--measure", "or", "--model", "random", "--in", &input]);
    let pooled = &v["pooled"];
    for key in ["estimate", "ci_low", "ci_high", "tau2", "variance", "z", "p"] {
        assert!(pooled[key].is_number(), "missing {key}");
    }
    assert!(v["heterogeneity"]["i2"].is_number());
    assert_eq!(pooled["model"], "random");
    assert_eq!(pooled["measure"], "logOR");
    let est = pooled["estimate"].as_f64().unwrap();
    let shown = pooled["display"]["estimate"].as_f64().unwrap();
    assert!((est.exp() - shown).abs() < 1e-9);
    assert!(v.get("bias").is_none() && v.get("sensitivity").is_none());
}

#[test]
fn pool_on_single_study_is_validation_error() {
    let (code, _, err) = run(&["pool", "--kind", "binary", "--measure", "or", "--in", &data("one_study.csv")]);
    assert_eq!(code, 1);
    assert!(err.contains("insufficient studies"), "{err}");
}

#[test]
fn sensitivity_five_rows() {
    let v = run_json(&["sensitivity", "--in", &data("five_studies.csv"), "--model", "random", "--measure", "or"]);
    let rows = v["sensitivity"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    let ids: Vec<&str> = rows.iter().map(|r| r["omitted_study_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["Study 1", "Study 2", "Study 3", "Study 4", "Study 5"]);
    assert_eq!(v["sensitivity"]["verdict"]["flagged"], serde_json::json!(["Study 1"]));
    assert_eq!(v["sensitivity"]["verdict"]["robust"], false);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["pool", "--bogus"]).0, 2);
    assert_eq!(run(&["frobnicate"]).0, 2);
    assert_eq!(run(&[]).0, 2);
    let (code, _, err) = run(&["pool", "--kind", "binary", "--measure", "smd", "--in", &data("five_studies.csv")]);
    assert_eq!(code, 2, "{err}");
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("sensitivity"));
}

#[test]
fn missing_file_exits_one() {
    let (code, _, err) = run(&["effects", "--measure", "md", "--in", "/nonexistent/file.csv"]);
    assert_eq!(code, 1);
    assert!(err.contains("/nonexistent/file.csv"));
}

#[test]
fn kind_is_sniffed_from_header() {
    let v = run_json(&["effects", "--in", &data("correlations.csv")]);
    let effects = v["effects"].as_array().unwrap();
    assert_eq!(effects.len(), 4);
    assert_eq!(effects[0]["measure"], "FisherZ");
    assert_eq!(v["meta"]["dataset"]["kind"], "correlation");
}

#[test]
fn heterogeneity_by_subgroup() {
    let v = run_json(&["heterogeneity", "--in", &data("anchorage.csv"), "--measure", "md", "--by-subgroup"]);
    let h = &v["heterogeneity"];
    assert_eq!(h["alpha"], 0.1);
    let sg = &h["subgroups"];
    assert_eq!(sg["df_between"], 1);
    let total = sg["q_total"].as_f64().unwrap();
    let within: f64 = sg["q_within"].as_object().unwrap().values().map(|x| x.as_f64().unwrap()).sum();
    assert!((total - within - sg["q_between"].as_f64().unwrap()).abs() < 1e-9);
    assert!((total - h["q"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn bias_writes_funnel_plot() {
    let dir = tempfile::tempdir().unwrap();
    let plot = dir.path().join("funnel.svg");
    let v = run_json(&[
        "bias",
        "--in",
        &data("anchorage.csv"),
        "--measure",
        "smd",
        "--model",
        "fixed",
        "--threshold",
        "0.2",
        "--plot",
        plot.to_str().unwrap(),
    ]);
    let bias = &v["bias"];
    let k0 = bias["k0"].as_u64().unwrap() as usize;
    assert_eq!(bias["imputed"].as_array().unwrap().len(), k0);
    assert_eq!(bias["funnel"].as_array().unwrap().len(), 6 + k0);
    assert!(bias["stability"]["verdict"].is_string());
    let svg = std::fs::read_to_string(&plot).unwrap();
    assert_eq!(svg.matches("funnel-point original").count(), 6);
    assert_eq!(svg.matches("funnel-point imputed").count(), k0);
}

#[test]
fn quality_builtin_rubric() {
    let v = run_json(&["quality", "--rubric", "crowding", "--in", &data("crowding_scores.csv")]);
    let q = &v["quality"];
    assert_eq!(q["scores"].as_array().unwrap().len(), 8);
    assert_eq!(q["distribution"]["Low"], 1);
    assert_eq!(q["distribution"]["Moderate"], 7);
    assert_eq!(q["distribution"]["High"], 0);
    let (code, _, err) = run(&["quality", "--rubric", "unknown-rubric", "--in", &data("crowding_scores.csv")]);
    assert_eq!(code, 1);
    assert!(err.contains("miniscrew"));
}

#[test]
fn prisma_text_and_json() {
    let (code, out, _) = run(&["prisma", "--in", &data("flow.txt")]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 9);
    assert!(out.lines().next().unwrap().contains("6914"));
    let v = run_json(&["prisma", "--json", "--in", &data("flow.txt")]);
    assert_eq!(v["prisma"]["identified"], 6914);
    assert_eq!(v["prisma"]["counts"]["included"], 8);
}

#[test]
fn full_report_with_plots() {
    let dir = tempfile::tempdir().unwrap();
    let forest = dir.path().join("forest.svg");
    let funnel = dir.path().join("funnel.svg");
    let out = dir.path().join("report.json");
    let (code, stdout, err) = run(&[
        "report",
        "--in",
        &data("five_studies.csv"),
        "--measure",
        "or",
        "--model",
        "random",
        "--plot",
        forest.to_str().unwrap(),
        "--funnel-plot",
        funnel.to_str().unwrap(),
        "--quality",
        &data("crowding_scores.csv"),
        "--rubric",
        "crowding",
        "--prisma",
        &data("flow.txt"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for key in ["meta", "effects", "pooled", "heterogeneity", "bias", "sensitivity", "quality", "prisma"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["meta"]["tool"], "metakit");
    assert!(forest.exists() && funnel.exists());
    let svg = std::fs::read_to_string(&forest).unwrap();
    assert_eq!(svg.matches(r#"class="study-square""#).count(), 5);
}

#[test]
fn report_on_two_studies_skips_k3_analyses() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("two.csv");
    std::fs::write(&csv, "study_id,r,n\nA,0.2,30\nB,0.4,50\n").unwrap();
    let v = run_json(&["report", "--in", csv.to_str().unwrap()]);
    assert!(v.get("bias").is_none() && v.get("sensitivity").is_none());
    assert_eq!(v["meta"]["notes"].as_array().unwrap().len(), 1);
}

#[test]
fn invalid_row_exits_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "study_id,events_e,total_e,events_c,total_c\nX,3,10,2,10\nY,12,10,2,10\n").unwrap();
    let (code, _, err) = run(&["pool", "--in", csv.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("`Y`") && err.contains("events_e"), "{err}");
}

#[test]
fn binary_runs_as_a_process() {
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_metakit"))
        .args(["pool", "--in", &data("one_study.csv")])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_metakit"))
        .args(["pool", "--in", &data("five_studies.csv"), "--model", "fixed"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&output.stdout).unwrap();
    assert!((v["pooled"]["display"]["estimate"].as_f64().unwrap() - 1.354_479_422_796_238).abs() < 1e-9);
}
