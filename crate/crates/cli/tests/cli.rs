//! End-to-end behavior of the perften binary on the shipped fixtures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perften"))
        .args(args)
        .current_dir(fixtures_dir())
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .unwrap();
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn evaluate_baseline_matches_protocol_arithmetic() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = out_dir.path().to_str().unwrap();
    run_ok(&["evaluate", "--config", "toy_eval.toml", "--out", out]);

    // recompute every number from the raw fixture and the reported fold
    // assignment, with plain sums
    let toy: Vec<(String, String, f64)> = read_csv(&fixtures_dir().join("toy.csv"))
        .into_iter()
        .skip(1)
        .map(|row| (row[0].clone(), row[1].clone(), row[2].parse().unwrap()))
        .collect();
    let residuals = read_csv(&out_dir.path().join("residuals.csv"));
    assert_eq!(residuals[0], vec!["fold", "model", "dataset", "predicted", "actual", "squared_residual"]);
    let mut fold_of: BTreeMap<(String, String), usize> = BTreeMap::new();
    for row in &residuals[1..] {
        fold_of.insert((row[1].clone(), row[2].clone()), row[0].parse().unwrap());
    }
    assert_eq!(fold_of.len(), toy.len());

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.path().join("eval_report.json")).unwrap())
            .unwrap();
    let k = report["k"].as_u64().unwrap() as usize;
    assert_eq!(k, 3);

    let mut expected_fold_rmse = Vec::new();
    for fold in 0..k {
        let train: Vec<f64> = toy
            .iter()
            .filter(|(m, d, _)| fold_of[&(m.clone(), d.clone())] != fold)
            .map(|(_, _, s)| *s)
            .collect();
        let mean = train.iter().sum::<f64>() / train.len() as f64;
        let test: Vec<f64> = toy
            .iter()
            .filter(|(m, d, _)| fold_of[&(m.clone(), d.clone())] == fold)
            .map(|(_, _, s)| *s)
            .collect();
        let mse = test.iter().map(|s| (mean - s) * (mean - s)).sum::<f64>() / test.len() as f64;
        expected_fold_rmse.push(mse.sqrt());
    }
    let got: Vec<f64> = report["per_fold_rmse"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(got.len(), k);
    for (g, e) in got.iter().zip(&expected_fold_rmse) {
        assert!((g - e).abs() < 1e-12, "fold rmse {g} vs recomputed {e}");
    }
    let mean_rmse = report["mean_rmse"].as_f64().unwrap();
    let expected_mean = expected_fold_rmse.iter().sum::<f64>() / k as f64;
    assert!((mean_rmse - expected_mean).abs() < 1e-12);
}

#[test]
fn unknown_model_exits_2_and_lists_names() {
    let out = run(&["evaluate", "--config", "toy_eval.toml", "--model", "catboost"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    for name in ["baseline", "xgb", "lgbm", "cp", "rpca"] {
        assert!(stderr.contains(name), "stderr misses '{name}': {stderr}");
    }
}

#[test]
fn evaluate_rerun_with_same_seed_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_ok(&["evaluate", "--config", "toy_eval.toml", "--out", a.path().to_str().unwrap()]);
    run_ok(&["evaluate", "--config", "toy_eval.toml", "--out", b.path().to_str().unwrap()]);
    for file in ["eval_report.json", "residuals.csv"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between reruns");
    }
}

#[test]
fn complete_fills_the_hole_with_the_rank_one_product() {
    let out_dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "complete",
        "--config",
        "rank1_complete.toml",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    let rows = read_csv(&out_dir.path().join("completed.csv"));
    assert_eq!(rows[0], vec!["model", "dataset", "score", "imputed"]);
    assert_eq!(rows.len(), 17); // header + full 4x4 grid
    let mut imputed = 0;
    for row in &rows[1..] {
        if row[3] == "true" {
            imputed += 1;
            assert_eq!((row[0].as_str(), row[1].as_str()), ("m2", "d1"));
            let value: f64 = row[2].parse().unwrap();
            assert!((value - 4.5).abs() < 1e-6, "imputed {value}");
        }
    }
    assert_eq!(imputed, 1);

    let labels: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.path().join("labels.json")).unwrap())
            .unwrap();
    assert_eq!(labels["model"].as_array().unwrap().len(), 4);
    assert_eq!(labels["dataset"].as_array().unwrap().len(), 4);
}

#[test]
fn complete_accepts_rpca_via_flag_alone() {
    let out_dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "complete",
        "--config",
        "rank1_complete.toml",
        "--model",
        "rpca",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    let rows = read_csv(&out_dir.path().join("completed.csv"));
    assert_eq!(rows.len(), 17);
    assert_eq!(rows[1..].iter().filter(|r| r[3] == "true").count(), 1);
}

#[test]
fn complete_on_fully_observed_input_passes_scores_through() {
    // full 4x4 grid: the rank1 fixture plus its missing cell
    let dir = tempfile::tempdir().unwrap();
    let mut csv = std::fs::read_to_string(fixtures_dir().join("rank1.csv")).unwrap();
    csv.push_str("m2,d1,4.5\n");
    std::fs::write(dir.path().join("full.csv"), &csv).unwrap();
    let config = "task = \"full\"\ninput = \"full.csv\"\ndim_order = [\"model\", \"dataset\"]\nout_dir = \"out\"\n\n[model]\nname = \"cp\"\n";
    std::fs::write(dir.path().join("full.toml"), config).unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_perften"))
        .args(["complete", "--config", "full.toml", "--out", "done"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("done/completed.csv"));
    assert!(rows[1..].iter().all(|r| r[3] == "false"));
    // scores come back exactly (bit-equal after parsing)
    let mut scores: Vec<f64> = rows[1..].iter().map(|r| r[2].parse().unwrap()).collect();
    scores.sort_by(f64::total_cmp);
    let mut expected: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    expected.sort_by(f64::total_cmp);
    assert_eq!(scores, expected);
}

#[test]
fn reliability_fixture_is_calibrated_and_level_flag_controls_rows() {
    let out_dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "reliability",
        "--config",
        "reliability.toml",
        "--levels",
        "0.05:1.00:0.05",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.path().join("calibration.json")).unwrap())
            .unwrap();
    assert!(report["ce"].as_f64().unwrap() < 1.0, "ce {}", report["ce"]);
    assert_eq!(report["levels"].as_array().unwrap().len(), 20);
    let diagram = read_csv(&out_dir.path().join("diagram.csv"));
    assert_eq!(diagram.len(), 21); // header + 20 levels

    let intervals = read_csv(&out_dir.path().join("intervals.csv"));
    assert_eq!(intervals[0], vec!["unit", "d", "lower_95", "upper_95", "actual", "covered"]);
    assert_eq!(intervals.len(), 201);
}

#[test]
fn reliability_without_actuals_column_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(
        fixtures_dir().join("rel_train.csv"),
        dir.path().join("rel_train.csv"),
    )
    .unwrap();
    // test file lacking the score column
    std::fs::write(dir.path().join("no_actuals.csv"), "unit,d\nt0,d0\n").unwrap();
    let config = "task = \"x\"\ninput = \"rel_train.csv\"\ndim_order = [\"unit\", \"d\"]\nout_dir = \"out\"\n\n[model]\nname = \"baseline\"\n\n[reliability]\nbootstrap_k = 8\nseed = 1\ntest_input = \"no_actuals.csv\"\n";
    std::fs::write(dir.path().join("cfg.toml"), config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_perften"))
        .args(["reliability", "--config", "cfg.toml"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("score"));
}

#[test]
fn missing_seed_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixtures_dir().join("toy.csv"), dir.path().join("toy.csv")).unwrap();
    let config = "task = \"x\"\ninput = \"toy.csv\"\ndim_order = [\"model\", \"dataset\"]\nout_dir = \"out\"\n\n[model]\nname = \"baseline\"\n\n[evaluation]\nk = 3\n";
    std::fs::write(dir.path().join("cfg.toml"), config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_perften"))
        .args(["evaluate", "--config", "cfg.toml"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("evaluation.seed"));
}

#[test]
fn diagram_rerenders_saved_report_byte_identically() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = out_dir.path().to_str().unwrap();
    run_ok(&["reliability", "--config", "reliability.toml", "--out", out]);
    let original = std::fs::read(out_dir.path().join("diagram.csv")).unwrap();

    let rendered = out_dir.path().join("rerendered.csv");
    run_ok(&[
        "diagram",
        out_dir.path().join("calibration.json").to_str().unwrap(),
        "--out",
        rendered.to_str().unwrap(),
    ]);
    let rerendered = std::fs::read(&rendered).unwrap();
    assert_eq!(original, rerendered);
}
