use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line on stderr");
    serde_json::from_str(line).expect("stderr carries JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn train_synthetic(dir: &Path, name: &str, extra: &[&str]) -> (std::path::PathBuf, Value) {
    let model = dir.join(format!("{name}.json"));
    let report = dir.join(format!("{name}.report.json"));
    let mut args = vec![
        "train",
        "--synthetic",
        "1000",
        "--seed",
        "7",
        "--out",
        model.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let out = lpc(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (model, read_json(&report))
}

#[test]
fn train_report_orders_bounds_and_records_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report) = train_synthetic(dir.path(), "m", &[]);
    let r = report["R"].as_f64().unwrap();
    let l = report["L"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&l) && (0.0..=1.0).contains(&r));
    assert!(l <= r + 1e-9);
    for key in ["n", "m", "r", "lp_rows", "wall_time"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["n"], 1000);
    let meta = &report["metadata"];
    assert_eq!(meta["command"], "train");
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["config"]["resolved"]["delta"], 0.05);
    assert_eq!(meta["config"]["resolved"]["folds"], 10);
    assert_eq!(meta["config"]["resolved"]["classifiers"].as_array().unwrap().len(), 3);
}

#[test]
fn rerun_with_same_seed_writes_identical_model() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = train_synthetic(dir.path(), "a", &[]);
    let (b, _) = train_synthetic(dir.path(), "b", &[]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn point_interval_model_has_no_width() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = train_synthetic(dir.path(), "p", &["--interval", "point"]);
    let m = read_json(&model);
    assert_eq!(m["interval"]["a"], m["interval"]["b"]);
}

#[test]
fn predict_emits_probabilities_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = train_synthetic(dir.path(), "m", &[]);
    let data = dir.path().join("x.csv");
    std::fs::write(&data, "a,b,c,d\n0,0,0,0\n1,-1,0.5,2\n-3,2,1,0\n").unwrap();
    let out = lpc(&["predict", "--model", model.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header.last().unwrap(), "argmax");
    assert_eq!(header[header.len() - 2], "sampled");
    let labels = header.len() - 2;
    assert!(header[..labels].iter().all(|h| h.starts_with("p_")));
    let names: Vec<&str> = header[..labels].iter().map(|h| &h[2..]).collect();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        let probs: Vec<f64> = (0..labels).map(|j| row[j].parse().unwrap()).collect();
        assert!(probs.iter().all(|p| *p >= 0.0));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(names.contains(&&row[labels]));
        assert!(names.contains(&&row[labels + 1]));
    }
}

#[test]
fn predict_rejects_wrong_width() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = train_synthetic(dir.path(), "m", &[]);
    let data = dir.path().join("x.csv");
    std::fs::write(&data, "a,b\n0,0\n").unwrap();
    let out = lpc(&["predict", "--model", model.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "dimension_mismatch");
}

#[test]
fn eval_with_model_reports_all_errors_and_sandwich() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = train_synthetic(dir.path(), "m", &[]);
    let out = lpc(&["eval", "--model", model.to_str().unwrap(), "--synthetic", "500", "--seed", "3"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["exact_error", "randomized_error", "argmax_error", "L", "R", "empirical_in_set"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["metadata"]["command"], "eval");
}

#[test]
fn eval_without_model_cross_validates() {
    let out = lpc(&["eval", "--synthetic", "300", "--folds", "3", "--interval", "point"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let folds = v["folds"].as_array().unwrap();
    assert_eq!(folds.len(), 3);
    let mean: f64 = folds
        .iter()
        .map(|f| f["errors"]["exact"].as_f64().unwrap())
        .sum::<f64>()
        / 3.0;
    assert!((mean - v["mean_exact_error"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn bounds_emits_sandwich_and_optimistic_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let (model, report) = train_synthetic(dir.path(), "m", &[]);
    let out = lpc(&["bounds", "--model", model.to_str().unwrap(), "--m-samples", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["R"], report["R"]);
    let r = v["R"].as_f64().unwrap();
    let kh = v["kappa_h"].as_f64().unwrap();
    let knh = v["kappa_neg_h"].as_f64().unwrap();
    assert!((r - (1.0 - kh)).abs() < 1e-6);
    assert!((v["L"].as_f64().unwrap() - (1.0 + knh)).abs() < 1e-12);
    assert_eq!(v["deviation_term"]["optimistic"], true);
    assert!(v["deviation_term"]["term"].as_f64().unwrap() >= 0.0);
}

#[test]
fn curve_has_header_and_five_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("curve.csv");
    let meta_path = dir.path().join("curve.json");
    let out = lpc(&[
        "curve",
        "--seed",
        "1",
        "--out",
        csv_path.to_str().unwrap(),
        "--report",
        meta_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,R,L,test_error,bayes_risk");
    assert_eq!(lines.len(), 6);
    let ns: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ns, ["50", "100", "500", "1000", "5000"]);
    for line in &lines[1..] {
        let v: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert!(v[2] <= v[1] + 1e-9, "L above R in {line}");
    }
    assert_eq!(read_json(&meta_path)["metadata"]["command"], "curve");
}

#[test]
fn selfcheck_passes_and_lists_suites() {
    let out = lpc(&["selfcheck", "--quick"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);
    let names: Vec<&str> = v["suites"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["duality", "minimax", "sandwich", "coverage"]);
    assert!(v["suites"].as_array().unwrap().iter().all(|s| s["checked"].as_u64().unwrap() > 0));
}

#[test]
fn selfcheck_with_corrupted_tolerance_fails_naming_invariant() {
    let out = lpc(&["selfcheck", "--suite", "duality", "--optimality-tol", "0.5"]);
    assert_eq!(out.status.code(), Some(3));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], false);
    let suite = &v["suites"][0];
    assert!(suite["failures"].as_u64().unwrap() > 0);
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "selfcheck_failed");
    assert!(err["error"]["message"]
        .as_str()
        .unwrap()
        .contains(suite["invariant"].as_str().unwrap()));
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("m.json");
    let out_str = out_path.to_str().unwrap();

    assert_eq!(lpc(&["--help"]).status.code(), Some(0));
    assert_eq!(lpc(&["--version"]).status.code(), Some(0));

    let usage = lpc(&["train", "--bogus"]);
    assert_eq!(usage.status.code(), Some(1));
    assert_eq!(stderr_json(&usage)["error"]["kind"], "usage");

    let bad_interval = lpc(&["train", "--synthetic", "100", "--interval", "wide", "--out", out_str]);
    assert_eq!(bad_interval.status.code(), Some(1));

    let missing = lpc(&["train", "--data", "/definitely/not/here.csv", "--out", out_str]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(stderr_json(&missing)["error"]["kind"], "io");

    let bad_csv = dir.path().join("bad.csv");
    std::fs::write(&bad_csv, "x,y\n1.0,a\nfoo,b\n").unwrap();
    let parse = lpc(&["train", "--data", bad_csv.to_str().unwrap(), "--out", out_str]);
    assert_eq!(parse.status.code(), Some(2));
    assert_eq!(stderr_json(&parse)["error"]["kind"], "parse");

    // Every lower bound at 1 cannot be met by any distribution.
    let (model, _) = train_synthetic(dir.path(), "ok", &[]);
    let mut m = read_json(&model);
    let dim = m["interval"]["a"].as_array().unwrap().len();
    m["interval"]["a"] = serde_json::json!(vec![1.0; dim]);
    m["interval"]["b"] = serde_json::json!(vec![1.0; dim]);
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, serde_json::to_string(&m).unwrap()).unwrap();
    let empty = lpc(&["bounds", "--model", broken.to_str().unwrap(), "--no-deviation"]);
    assert_eq!(empty.status.code(), Some(3), "{}", String::from_utf8_lossy(&empty.stderr));
    assert_eq!(stderr_json(&empty)["error"]["kind"], "empty_uncertainty_set");

    let err = stderr_json(&missing);
    assert_eq!(err["metadata"]["command"], "train");
    assert!(err["metadata"]["config"].is_object());
}

#[test]
fn trains_from_csv_with_named_label_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut text = String::from("label,x,y\n");
    for i in 0..120 {
        let c = i % 2;
        let x = (i as f64 * 0.37).sin() + 2.0 * c as f64;
        let y = (i as f64 * 0.11).cos() - c as f64;
        text.push_str(&format!("{},{x},{y}\n", if c == 0 { "neg" } else { "pos" }));
    }
    std::fs::write(&data, text).unwrap();
    let model = dir.path().join("m.json");
    let out = lpc(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--label-col",
        "label",
        "--classifiers",
        "knn3,tree",
        "--folds",
        "5",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_json(&model);
    assert_eq!(m["label_names"], serde_json::json!(["neg", "pos"]));
    assert_eq!(m["k"], 2);
}
