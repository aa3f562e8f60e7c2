//! k-fold cross-validated RMSE, the mean-value baseline, and residual
//! grouping.
//!
//! The protocol: partition records into k balanced folds at random, train
//! on k-1 folds, score the held-out fold, and report the fold RMSEs and
//! their mean. Tensor models never see test cells during training: the
//! held-out entries are masked, not deleted, so the tensor keeps its shape.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PerformanceRecord;
use crate::error::Error;
use crate::model::{fit_predict, ModelSpec};
use crate::Result;

/// A balanced random fold assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index per record.
    pub assignment: Vec<usize>,
    pub seed: u64,
}

/// Balanced uniformly random partition of `n` records into `k` folds,
/// deterministic given the seed. Fold sizes differ by at most one.
pub fn kfold_plan(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InfeasiblePlan(format!("k must be >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::InfeasiblePlan(format!(
            "cannot split {n} records into {k} folds"
        )));
    }
    let mut assignment = Vec::with_capacity(n);
    let base = n / k;
    let extra = n % k;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        assignment.extend(std::iter::repeat_n(fold, size));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    assignment.shuffle(&mut rng);
    Ok(FoldPlan { k, assignment, seed })
}

/// The constant predictor: the arithmetic mean of the training scores.
pub fn mean_baseline(train_scores: &[f64]) -> Result<f64> {
    if train_scores.is_empty() {
        return Err(Error::EmptyData("mean of zero scores".into()));
    }
    Ok(train_scores.iter().sum::<f64>() / train_scores.len() as f64)
}

/// One held-out prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub fold: usize,
    pub coords: BTreeMap<String, String>,
    pub predicted: f64,
    pub actual: f64,
}

impl ResidualEntry {
    pub fn squared_residual(&self) -> f64 {
        let d = self.predicted - self.actual;
        d * d
    }
}

/// Cross-validation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub k: usize,
    /// RMSE per completed fold, in fold order.
    pub per_fold_rmse: Vec<f64>,
    /// Arithmetic mean of `per_fold_rmse`.
    pub mean_rmse: f64,
    pub residuals: Vec<ResidualEntry>,
    /// Folds that could not be evaluated, with the reason.
    pub skipped_folds: Vec<(usize, String)>,
    /// True when any fold was skipped.
    pub warning: bool,
}

/// Run the k-fold protocol for one model.
pub fn cross_validate(
    records: &[PerformanceRecord],
    spec: &ModelSpec,
    plan: &FoldPlan,
    dim_order: &[String],
) -> Result<EvalReport> {
    if plan.assignment.len() != records.len() {
        return Err(Error::Dimension(format!(
            "fold plan covers {} records, got {}",
            plan.assignment.len(),
            records.len()
        )));
    }
    let mut per_fold_rmse = Vec::new();
    let mut residuals = Vec::new();
    let mut skipped = Vec::new();

    for fold in 0..plan.k {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (r, &f) in records.iter().zip(&plan.assignment) {
            if f == fold {
                test.push(r.clone());
            } else {
                train.push(r.clone());
            }
        }
        if test.is_empty() {
            skipped.push((fold, "fold holds no records".to_string()));
            continue;
        }
        match fit_predict(&train, &test, spec, dim_order, 0) {
            Ok(predicted) => {
                let mut se = 0.0;
                for (r, &p) in test.iter().zip(&predicted) {
                    let d = p - r.score;
                    se += d * d;
                    residuals.push(ResidualEntry {
                        fold,
                        coords: r.coords.clone(),
                        predicted: p,
                        actual: r.score,
                    });
                }
                per_fold_rmse.push((se / test.len() as f64).sqrt());
            }
            Err(Error::Untrainable(msg)) => {
                skipped.push((fold, msg));
            }
            Err(e) => return Err(e),
        }
    }

    if per_fold_rmse.is_empty() {
        return Err(Error::Untrainable(
            "every fold was skipped; no RMSE to report".into(),
        ));
    }
    let mean_rmse = per_fold_rmse.iter().sum::<f64>() / per_fold_rmse.len() as f64;
    let warning = !skipped.is_empty();
    Ok(EvalReport {
        model: spec.name().to_string(),
        k: plan.k,
        per_fold_rmse,
        mean_rmse,
        residuals,
        skipped_folds: skipped,
        warning,
    })
}

/// Mean square residuals grouped by two dimensions, aggregated over the
/// rest. Cells with no residuals are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsrMatrix {
    pub row_dim: String,
    pub col_dim: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// Row-major cell means; missing cells are None.
    pub values: Vec<Option<f64>>,
    /// Residual count per cell.
    pub counts: Vec<usize>,
}

impl MsrMatrix {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.col_labels.len() + col]
    }
}

/// Group square residuals by exactly two dimensions and average each cell.
pub fn msr_analysis(report: &EvalReport, group_dims: &[String; 2]) -> Result<MsrMatrix> {
    let [row_dim, col_dim] = group_dims;
    let mut row_labels = std::collections::BTreeSet::new();
    let mut col_labels = std::collections::BTreeSet::new();
    for entry in &report.residuals {
        let r = entry.coords.get(row_dim).ok_or_else(|| {
            Error::Schema(format!("residuals carry no dimension '{row_dim}'"))
        })?;
        let c = entry.coords.get(col_dim).ok_or_else(|| {
            Error::Schema(format!("residuals carry no dimension '{col_dim}'"))
        })?;
        row_labels.insert(r.clone());
        col_labels.insert(c.clone());
    }
    let row_labels: Vec<String> = row_labels.into_iter().collect();
    let col_labels: Vec<String> = col_labels.into_iter().collect();
    let n_cells = row_labels.len() * col_labels.len();
    let mut sums = vec![0.0; n_cells];
    let mut counts = vec![0usize; n_cells];
    for entry in &report.residuals {
        let r = row_labels
            .binary_search(&entry.coords[row_dim])
            .expect("label collected above");
        let c = col_labels
            .binary_search(&entry.coords[col_dim])
            .expect("label collected above");
        let cell = r * col_labels.len() + c;
        sums[cell] += entry.squared_residual();
        counts[cell] += 1;
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n > 0 { Some(s / n as f64) } else { None })
        .collect();
    Ok(MsrMatrix {
        row_dim: row_dim.clone(),
        col_dim: col_dim.clone(),
        row_labels,
        col_labels,
        values,
        counts,
    })
}
