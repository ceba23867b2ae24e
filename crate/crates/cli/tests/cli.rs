use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn covergllvm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covergllvm"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic dataset in `dir`.
fn simulate(dir: &Path, n: &str, m: &str) {
    ok(&covergllvm(dir, &["simulate", "--n", n, "--m", m, "--p", "0.4", "--calibration-cells", "20000", "--seed", "3"]));
}

fn data_rows(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().skip(1).map(str::to_owned).collect()
}

#[test]
fn fit_writes_a_model_that_predicts() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d, "30", "8");
    let fit_dir = d.join("fit");
    let out = covergllvm(
        &fit_dir,
        &["fit", "--data", path(&d.join("cover.csv")), "--family", "beta-shifted", "--restarts", "1", "--max-iter", "300"],
    );
    ok(&out);
    for f in ["model.json", "scores.csv", "scores.svg", "run_config.json"] {
        assert!(fit_dir.join(f).exists(), "{f} missing");
    }
    let model = covergllvm::io::read_model(&fit_dir.join("model.json")).unwrap();
    assert_eq!(model.species_names.len(), 8);
    assert_eq!(data_rows(&fit_dir.join("scores.csv")).len(), 30);

    let pred_dir = d.join("pred");
    let map: String = (1..=5).map(|i| format!("new{i},site{}\n", 2 * i)).collect();
    fs::write(d.join("map.csv"), format!("site,unit\n{map}")).unwrap();
    ok(&covergllvm(
        &pred_dir,
        &["predict", "--model", path(&fit_dir.join("model.json")), "--site-map", path(&d.join("map.csv"))],
    ));
    let rows = data_rows(&pred_dir.join("predictions_expected.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("new1,"));
    for row in rows {
        for v in row.split(',').skip(1) {
            let v: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn perfect_predictions_score_zero() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d, "20", "6");
    let cover = d.join("cover.csv");
    let ev = d.join("ev");
    ok(&covergllvm(
        &ev,
        &["evaluate", "--predictions", path(&cover), "--observed", path(&cover), "--groups", "3"],
    ));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(ev.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(json["pooled"]["maep"].as_f64(), Some(0.0));
    assert_eq!(json["pooled"]["rmse"].as_f64(), Some(0.0));
    assert_eq!(data_rows(&ev.join("metrics_groups.csv")).len(), 3);
    assert_eq!(data_rows(&ev.join("metrics_species.csv")).len(), 6);
}

#[test]
fn usage_errors_exit_two_with_one_line() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d, "10", "4");
    let cover = d.join("cover.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec!["fit", "--data", path(&cover), "--family", "gamma"],
        vec!["fit", "--data", "/nonexistent/cover.csv", "--family", "hurdle-beta"],
        vec!["sweep", "--methods", "nope"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let out = covergllvm(d, &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        assert!(err.starts_with("error kind=usage: "), "{err}");
    }
}

#[test]
fn runtime_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let bad = d.join("bad.csv");
    fs::write(&bad, "site,a,b\ns1,0.5,0.2\ns2,0.1\n").unwrap();
    let out = covergllvm(d, &["fit", "--data", path(&bad), "--family", "beta-shifted"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error kind=parse: "), "{err}");
}

fn sweep(dir: &Path, threads: &str) -> String {
    ok(&covergllvm(
        dir,
        &[
            "--threads",
            threads,
            "sweep",
            "--generator",
            "ordered-beta",
            "--p",
            "0.3,0.6,0.9",
            "--reps",
            "2",
            "--n",
            "20",
            "--m",
            "10",
            "--restarts",
            "1",
            "--max-iter",
            "200",
            "--nmds-restarts",
            "2",
            "--calibration-cells",
            "20000",
        ],
    ));
    fs::read_to_string(dir.join("sweep_summary.csv")).unwrap()
}

#[test]
fn sweep_covers_every_cell_and_ignores_thread_count() {
    let tmp = TempDir::new().unwrap();
    let one = sweep(&tmp.path().join("t1"), "1");
    let four = sweep(&tmp.path().join("t4"), "4");
    assert_eq!(one, four);
    assert_eq!(one.lines().count(), 1 + 7 * 3);
    let records = data_rows(&tmp.path().join("t1/sweep_records.csv"));
    assert_eq!(records.len(), 7 * 3 * 2);
    assert!(tmp.path().join("t1/run_config.json").exists());
}

#[test]
fn holdout_evaluation_by_year() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d, "30", "6");
    let mut units = String::from("site,unit\n");
    let mut covs = String::from("site,year\n");
    for i in 1..=30 {
        units.push_str(&format!("site{i},plot{}\n", (i - 1) % 10));
        covs.push_str(&format!("site{i},{}\n", 2000 + (i - 1) / 10));
    }
    fs::write(d.join("units.csv"), units).unwrap();
    fs::write(d.join("covs.csv"), covs).unwrap();
    let ev = d.join("ho");
    ok(&covergllvm(
        &ev,
        &[
            "evaluate",
            "--holdout-after",
            "2001",
            "--data",
            path(&d.join("cover.csv")),
            "--family",
            "hurdle-beta",
            "--covariates",
            path(&d.join("covs.csv")),
            "--units",
            path(&d.join("units.csv")),
            "--restarts",
            "1",
            "--max-iter",
            "300",
            "--groups",
            "2",
        ],
    ));
    assert_eq!(data_rows(&ev.join("predictions_expected.csv")).len(), 10);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(ev.join("metrics.json")).unwrap()).unwrap();
    let maep = json["pooled"]["maep"].as_f64().unwrap();
    assert!(maep > 0.0 && maep < 1.0);
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(ev.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(cfg["resolved"]["train_rows"], 20);
    assert_eq!(cfg["resolved"]["test_rows"], 10);
}

#[test]
fn nmds_and_procrustes_round_trip() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d, "20", "8");
    let nm = d.join("nm");
    ok(&covergllvm(&nm, &["nmds", "--data", path(&d.join("cover.csv")), "--restarts", "2"]));
    let scores = nm.join("nmds_scores.csv");
    let pr = d.join("pr");
    let out = covergllvm(&pr, &["procrustes", "--target", path(&scores), "--candidate", path(&scores)]);
    ok(&out);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(pr.join("procrustes.json")).unwrap()).unwrap();
    assert!(json["error"].as_f64().unwrap() < 1e-10);
}
