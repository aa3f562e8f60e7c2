//! The four subcommands: evaluate, complete, reliability, diagram.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use perften_core::{
    bootstrap_distributions, build_tensor, calibration_error, complete, cross_validate,
    default_levels, kfold_plan, load_records, percentile_ci, EvalReport, PerformanceRecord,
};

use crate::config::{parse_levels, RunConfig, UsageError};
use crate::output::{fmt_f64, write_csv, write_json};

pub struct CommonOverrides {
    pub model: Option<String>,
    pub k: Option<usize>,
    pub bootstrap_k: Option<usize>,
    pub seed: Option<u64>,
    pub levels: Option<String>,
    pub out: Option<PathBuf>,
}

fn out_dir(config: &RunConfig, overrides: &CommonOverrides) -> PathBuf {
    overrides.out.clone().unwrap_or_else(|| config.out_dir.clone())
}

fn load_input(config: &RunConfig) -> Result<Vec<PerformanceRecord>> {
    let format = config.record_format()?;
    let records = load_records(&config.input, format)
        .with_context(|| format!("loading {}", config.input.display()))?;
    info!("loaded {} records from {}", records.len(), config.input.display());
    Ok(records)
}

/// k-fold cross-validation; writes eval_report.json and residuals.csv.
pub fn cmd_evaluate(config: &RunConfig, overrides: &CommonOverrides) -> Result<()> {
    let spec = config.resolve_model(overrides.model.as_deref())?;
    let records = load_input(config)?;
    let k = overrides.k.or(config.evaluation.k).unwrap_or(5);
    let seed = overrides.seed.or(config.evaluation.seed).ok_or_else(|| {
        UsageError("config: evaluation.seed is required (or pass --seed)".into())
    })?;
    let plan = kfold_plan(records.len(), k, seed)?;
    let report = cross_validate(&records, &spec, &plan, &config.dim_order)?;
    if report.warning {
        for (fold, reason) in &report.skipped_folds {
            warn!("fold {fold} skipped: {reason}");
        }
    }
    let dir = out_dir(config, overrides);
    write_json(&dir.join("eval_report.json"), &report)?;
    write_csv(&dir.join("residuals.csv"), &residual_rows(&report, &config.dim_order)?)?;
    info!(
        "mean RMSE {} over {} folds -> {}",
        report.mean_rmse,
        report.per_fold_rmse.len(),
        dir.display()
    );
    Ok(())
}

fn residual_rows(report: &EvalReport, dim_order: &[String]) -> Result<Vec<Vec<String>>> {
    let mut header = vec!["fold".to_string()];
    header.extend(dim_order.iter().cloned());
    header.extend(["predicted", "actual", "squared_residual"].map(String::from));
    let mut rows = vec![header];
    for entry in &report.residuals {
        let mut row = vec![entry.fold.to_string()];
        for dim in dim_order {
            let label = entry.coords.get(dim).ok_or_else(|| {
                UsageError(format!("config: dim_order names '{dim}' but records lack it"))
            })?;
            row.push(label.clone());
        }
        row.push(fmt_f64(entry.predicted));
        row.push(fmt_f64(entry.actual));
        row.push(fmt_f64(entry.squared_residual()));
        rows.push(row);
    }
    Ok(rows)
}

/// Tensor completion; writes completed.csv (with an `imputed` flag) and the
/// label-map sidecar labels.json.
pub fn cmd_complete(config: &RunConfig, overrides: &CommonOverrides) -> Result<()> {
    let method = config.resolve_completion(overrides.model.as_deref())?;
    let records = load_input(config)?;
    let (tensor, layout) = build_tensor(&records, &config.dim_order)?;

    let completed = if tensor.sparsity() == 0.0 {
        warn!("input tensor is fully observed; nothing to impute");
        tensor.clone()
    } else {
        complete(&tensor, &method)?
    };

    let mut rows = Vec::with_capacity(completed.len() + 1);
    let mut header = config.dim_order.clone();
    header.push("score".to_string());
    header.push("imputed".to_string());
    rows.push(header);
    for flat in 0..completed.len() {
        let index = completed.unravel(flat);
        let coords = layout.coords_of(&index);
        let mut row: Vec<String> = config
            .dim_order
            .iter()
            .map(|d| coords[d].clone())
            .collect();
        row.push(fmt_f64(completed.values()[flat]));
        row.push((!tensor.mask()[flat]).to_string());
        rows.push(row);
    }

    let dir = out_dir(config, overrides);
    write_csv(&dir.join("completed.csv"), &rows)?;
    write_json(&dir.join("labels.json"), &layout.label_maps())?;
    info!(
        "completed tensor of shape {:?} ({} imputed cells) -> {}",
        completed.shape(),
        tensor.mask().iter().filter(|&&m| !m).count(),
        dir.display()
    );
    Ok(())
}

/// The saved calibration report; also the input of `diagram`.
#[derive(Debug, Serialize, Deserialize)]
pub struct CalibrationDocument {
    pub model: String,
    pub bootstrap_k: usize,
    pub seed: u64,
    pub n_test: usize,
    pub levels: Vec<f64>,
    pub acc_per_level: Vec<f64>,
    pub ce: f64,
    pub ce_mean: f64,
    pub average_width: f64,
    pub coverage: f64,
}

/// Bootstrap reliability audit; writes calibration.json, diagram.csv and
/// intervals.csv.
pub fn cmd_reliability(config: &RunConfig, overrides: &CommonOverrides) -> Result<()> {
    let spec = config.resolve_model(overrides.model.as_deref())?;
    let train = load_input(config)?;
    let test_path = config.reliability.test_input.clone().ok_or_else(|| {
        UsageError("config: reliability.test_input is required for this command".into())
    })?;
    let test = load_records(&test_path, config.record_format()?)
        .with_context(|| format!("loading {}", test_path.display()))?;
    if test.is_empty() {
        return Err(UsageError("config: reliability.test_input holds no records".into()).into());
    }
    let k = overrides
        .bootstrap_k
        .or(config.reliability.bootstrap_k)
        .unwrap_or(200);
    let seed = overrides.seed.or(config.reliability.seed).ok_or_else(|| {
        UsageError("config: reliability.seed is required (or pass --seed)".into())
    })?;
    let levels = match overrides.levels.as_deref().or(config.reliability.levels.as_deref()) {
        Some(text) => parse_levels(text)?,
        None => default_levels(),
    };

    let dists = bootstrap_distributions(&train, &spec, &test, k, seed, &config.dim_order)?;
    let actuals: Vec<f64> = test.iter().map(|r| r.score).collect();
    let report = calibration_error(&actuals, &dists, &levels)?;

    let dir = out_dir(config, overrides);
    let document = CalibrationDocument {
        model: spec.name().to_string(),
        bootstrap_k: k,
        seed,
        n_test: test.len(),
        levels: report.levels.clone(),
        acc_per_level: report.acc_per_level.clone(),
        ce: report.ce,
        ce_mean: report.ce_mean,
        average_width: report.average_width,
        coverage: report.coverage,
    };
    write_json(&dir.join("calibration.json"), &document)?;
    write_csv(&dir.join("diagram.csv"), &diagram_rows(&report.levels, &report.acc_per_level))?;

    // per-test-point 95% interval with a covered flag
    let mut rows = Vec::with_capacity(test.len() + 1);
    let mut header = config.dim_order.clone();
    header.extend(["lower_95", "upper_95", "actual", "covered"].map(String::from));
    rows.push(header);
    for (record, dist) in test.iter().zip(&dists) {
        let ci = percentile_ci(dist, 0.95)?;
        let mut row: Vec<String> = Vec::with_capacity(config.dim_order.len() + 4);
        for dim in &config.dim_order {
            let label = record.coords.get(dim).ok_or_else(|| {
                UsageError(format!("config: dim_order names '{dim}' but test records lack it"))
            })?;
            row.push(label.clone());
        }
        let covered = ci.lower < record.score && record.score < ci.upper;
        row.push(fmt_f64(ci.lower));
        row.push(fmt_f64(ci.upper));
        row.push(fmt_f64(record.score));
        row.push(covered.to_string());
        rows.push(row);
    }
    write_csv(&dir.join("intervals.csv"), &rows)?;
    info!(
        "CE {} coverage {} over {} test points -> {}",
        report.ce,
        report.coverage,
        test.len(),
        dir.display()
    );
    Ok(())
}

fn diagram_rows(levels: &[f64], accs: &[f64]) -> Vec<Vec<String>> {
    let mut rows = vec![vec!["gamma".to_string(), "accuracy".to_string()]];
    for (gamma, acc) in levels.iter().zip(accs) {
        rows.push(vec![fmt_f64(*gamma), fmt_f64(*acc)]);
    }
    rows
}

/// Re-render diagram.csv from a saved calibration.json.
pub fn cmd_diagram(report_path: &Path, out: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(report_path)
        .with_context(|| format!("reading {}", report_path.display()))?;
    let document: CalibrationDocument = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("report '{}': {e}", report_path.display())))?;
    let target = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| report_path.with_file_name("diagram.csv"));
    write_csv(&target, &diagram_rows(&document.levels, &document.acc_per_level))?;
    info!("re-rendered {} -> {}", report_path.display(), target.display());
    Ok(())
}
