use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn clad(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clad"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = clad(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    let out = clad(dir, args);
    assert!(!out.stderr.is_empty() || out.status.success());
    out.status.code().unwrap()
}

const SMALL_GRID: &str = r#"
[search]
family = "gbdt"
max_depth = [3]
n_rounds = [15]
min_child_weight = [1.0]

[folds]
k = 3
seed = 4
"#;

#[test]
fn kappa_from_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["kappa", "--matrix", "113,3,7,30"]);
    assert!(out.contains("kappa = 0.81"), "{out}");
    let json: serde_json::Value = serde_json::from_str(&ok(dir.path(), &["kappa", "--matrix", "113,3,7,30", "--json"])).unwrap();
    assert!((json["kappa"].as_f64().unwrap() - 0.8149).abs() < 5e-4);
    assert_eq!(code(dir.path(), &["kappa", "--matrix", "1,2,3"]), 1);
    assert_eq!(code(dir.path(), &["kappa"]), 1);
    // One-sided raters leave kappa undefined: a data problem, not usage.
    assert_eq!(code(dir.path(), &["kappa", "--matrix", "5,0,0,0"]), 2);
}

#[test]
fn gen_then_summarize_matches_portfolio_ratio() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen", "--seed", "42", "--n", "10000", "--out", "cases.csv"]);
    let json: serde_json::Value = serde_json::from_str(&ok(dir.path(), &["summarize", "cases.csv", "--json"])).unwrap();
    assert_eq!(json["count"], 10000);
    let ratio = json["positive_ratio"].as_f64().unwrap();
    assert!((ratio - 0.745).abs() < 0.01, "{ratio}");
}

#[test]
fn gen_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen", "--seed", "3", "--n", "500", "--out", "a.csv"]);
    ok(dir.path(), &["gen", "--seed", "3", "--n", "500", "--out", "b.csv"]);
    let stdout = ok(dir.path(), &["gen", "--seed", "3", "--n", "500"]);
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(a, stdout.into_bytes());
    ok(dir.path(), &["gen", "--seed", "4", "--n", "500", "--out", "c.csv"]);
    assert_ne!(a, fs::read(dir.path().join("c.csv")).unwrap());
}

#[test]
fn grid_on_one_combination_reports_one_trial() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), SMALL_GRID).unwrap();
    ok(d, &["gen", "--seed", "8", "--n", "400", "--out", "train.csv"]);
    let out = ok(
        d,
        &["grid", "--config", "run.toml", "--input", "train.csv", "--out-dir", "sweep", "--model-out", "best.clad", "--threads", "1"],
    );
    assert!(out.contains("trials               1 (0 failed)"), "{out}");
    assert!(out.contains("cv_mean_cost") && out.contains("refit_train_accuracy"));
    let sel: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("sweep/sweep.json")).unwrap()).unwrap();
    assert_eq!(sel["trials"].as_array().unwrap().len(), 1);
    assert_eq!(sel["trials"][0]["fold_costs"].as_array().unwrap().len(), 3);
    let text = fs::read_to_string(d.join("sweep/sweep.txt")).unwrap();
    assert_eq!(text.lines().count(), 3);

    // Same inputs, different thread count: identical outputs.
    ok(d, &["grid", "--config", "run.toml", "--input", "train.csv", "--out-dir", "again", "--threads", "3"]);
    for f in ["sweep.txt", "sweep.json", "best_params.json", "folds.json"] {
        assert_eq!(
            fs::read(d.join("sweep").join(f)).unwrap(),
            fs::read(d.join("again").join(f)).unwrap(),
            "{f}"
        );
    }

    // The chosen parameters feed straight into `train`.
    ok(d, &["train", "--input", "train.csv", "--params", "sweep/best_params.json", "--out", "retrained.clad"]);
    assert_eq!(fs::read(d.join("best.clad")).unwrap(), fs::read(d.join("retrained.clad")).unwrap());
}

#[test]
fn train_score_eval_compare_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--seed", "11", "--n", "600", "--out", "train.csv"]);
    ok(d, &["gen", "--seed", "12", "--n", "300", "--out", "test.csv"]);
    let small = r#"{"family":"gbdt","params":{"max_depth":3,"n_rounds":20,"min_child_weight":1.0}}"#;
    fs::write(d.join("p.json"), small).unwrap();
    let out = ok(d, &["train", "--input", "train.csv", "--params", "p.json", "--out", "w.clad"]);
    assert!(out.contains("weighted     true"), "{out}");
    ok(d, &["train", "--input", "train.csv", "--params", "p.json", "--cost-blind", "--out", "b.clad"]);

    let scored = ok(d, &["score", "--model", "w.clad", "--input", "test.csv"]);
    let mut lines = scored.lines();
    assert_eq!(lines.next(), Some("record_id,probability,threshold,decision,c_fp,c_fn"));
    assert_eq!(lines.count(), 300);
    assert_eq!(scored, ok(d, &["score", "--model", "w.clad", "--input", "test.csv"]));

    let text = ok(d, &["eval", "--model", "w.clad", "--input", "test.csv", "--out", "w.json"]);
    assert!(text.contains("accuracy") && text.contains("total_cost"));
    ok(d, &["eval", "--model", "b.clad", "--input", "test.csv", "--threshold", "0.5", "--out", "b.json"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("w.json")).unwrap()).unwrap();
    assert_eq!(report["label"], "w");
    let m = &report["matrix"];
    let n: u64 = ["tp", "fp", "fn", "tn"].iter().map(|k| m[k].as_u64().unwrap()).sum();
    assert_eq!(n, 300);

    let cmp = ok(d, &["compare", "w.json", "b.json"]);
    assert!(cmp.contains("comparison    w - b"), "{cmp}");

    // Reports over different datasets do not compare.
    ok(d, &["eval", "--model", "b.clad", "--input", "train.csv", "--out", "other.json"]);
    assert_eq!(code(d, &["compare", "w.json", "other.json"]), 2);
}

#[test]
fn kappa_from_decision_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("model.csv"), "record_id,decision\na,1\nb,1\nc,0\nd,0\ne,1\n").unwrap();
    fs::write(d.join("committee.csv"), "record_id,committee_decision\nb,true\na,true\nc,false\nd,true\n").unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&ok(d, &["kappa", "--committee", "committee.csv", "--model", "model.csv", "--json"])).unwrap();
    // Committee gave d, model did not.
    assert_eq!(json["matrix"], serde_json::json!({ "tp": 2, "fp": 1, "fn": 0, "tn": 1 }));
    assert!((json["kappa"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    fs::write(d.join("short.csv"), "record_id,decision\na,1\n").unwrap();
    assert_eq!(code(d, &["kappa", "--committee", "committee.csv", "--model", "short.csv"]), 2);
    fs::write(d.join("bad.csv"), "record_id,decision\na,maybe\n").unwrap();
    assert_eq!(code(d, &["kappa", "--committee", "bad.csv", "--model", "model.csv"]), 2);
}

#[test]
fn config_values_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--seed", "5", "--n", "200", "--out", "t.csv"]);
    fs::write(d.join("p.json"), r#"{"family":"gbdt","params":{"max_depth":2,"n_rounds":5}}"#).unwrap();
    ok(d, &["train", "--input", "t.csv", "--params", "p.json", "--out", "m.clad"]);
    fs::write(d.join("run.toml"), "[cost]\nalpha = 0.0\nadmin_cost = 100.0\n").unwrap();

    let c_fn = |out: &str| out.lines().nth(1).unwrap().rsplit(',').next().unwrap().to_string();
    let from_config = ok(d, &["--config", "run.toml", "score", "--model", "m.clad", "--input", "t.csv"]);
    assert_eq!(c_fn(&from_config), "100.00");
    let overridden = ok(d, &["--config", "run.toml", "score", "--model", "m.clad", "--input", "t.csv", "--admin-cost", "40"]);
    assert_eq!(c_fn(&overridden), "40.00");

    fs::write(d.join("bad.toml"), "[cost]\nalfa = 1\n").unwrap();
    assert_eq!(code(d, &["--config", "bad.toml", "kappa", "--matrix", "1,1,1,1"]), 2);
    assert_eq!(code(d, &["--alpha=-1", "kappa", "--matrix", "1,1,1,1"]), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["--help"]), 0);
    assert_eq!(code(d, &["no-such-command"]), 1);
    assert_eq!(code(d, &["train"]), 1);
    assert_eq!(code(d, &["grid", "--input", "x.csv"]), 2);

    fs::write(
        d.join("bad.csv"),
        "record_id,limit_before,outstanding_balance,rating,account_age_years,avg_monthly_spend,avg_monthly_payment,payment_ratio,late_payments_12m,months_since_last_adjustment,cash_advance_ratio,products_held,avg_utilization_6m,monthly_deposits,label\n\
         r1,1000,100,ZZ,5,1,1,1,0,1,0,1,0.1,1,1\n",
    )
    .unwrap();
    let out = clad(d, &["summarize", "bad.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rating"));
    assert!(out.stdout.is_empty());

    ok(d, &["gen", "--n", "50", "--out", "ok.csv"]);
    assert_eq!(code(d, &["gen", "--n", "50", "--out", "/dev/null/x/y.csv"]), 3);
}

#[test]
fn ingest_canonicalises() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--seed", "2", "--n", "80", "--out", "a.csv"]);
    let out = ok(d, &["ingest", "a.csv", "--out", "b.csv"]);
    assert!(out.contains("records          80"));
    assert_eq!(fs::read(d.join("a.csv")).unwrap(), fs::read(d.join("b.csv")).unwrap());
}
