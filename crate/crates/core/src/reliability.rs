//! Bootstrap prediction distributions, percentile confidence intervals,
//! and calibration of those intervals.
//!
//! A prediction distribution for a test point is built by resampling the
//! training records with replacement K times, training one model per
//! resample, and collecting the K predictions. The percentile interval at
//! confidence gamma covers the middle gamma proportion of that
//! distribution; calibration then asks how often actual values land inside
//! the interval across a grid of confidence levels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PerformanceRecord;
use crate::error::Error;
use crate::model::{fit_predict, ModelSpec};
use crate::Result;

/// K bootstrap predictions for one test point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    /// Index of the test point the samples belong to.
    pub test_point: usize,
    pub samples: Vec<f64>,
}

impl PredictionDistribution {
    pub fn new(test_point: usize, samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyData("prediction distribution with no samples".into()));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("bootstrap prediction is not finite: {bad}")));
        }
        Ok(PredictionDistribution { test_point, samples })
    }

    pub fn k(&self) -> usize {
        self.samples.len()
    }

    /// max - min of the samples.
    pub fn width(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &s in &self.samples {
            lo = lo.min(s);
            hi = hi.max(s);
        }
        hi - lo
    }
}

/// A percentile interval at one confidence level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub gamma: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Calibration summary over a grid of confidence levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub levels: Vec<f64>,
    pub acc_per_level: Vec<f64>,
    /// Sum over levels of |acc(gamma) - gamma|; scales with the number of
    /// levels.
    pub ce: f64,
    /// ce divided by the number of levels, for grid-size-independent
    /// comparison.
    pub ce_mean: f64,
    /// Mean over test points of (max - min) of the prediction distribution.
    pub average_width: f64,
    /// acc evaluated at gamma = 1 (strict interval membership, so constant
    /// distributions cover nothing).
    pub coverage: f64,
}

/// The default confidence grid: 0.05, 0.10, ..., 1.00.
pub fn default_levels() -> Vec<f64> {
    // i / 20 lands on the representable double nearest each grid point,
    // unlike i * 0.05 which accumulates off-grid noise
    (1..=20).map(|i| i as f64 / 20.0).collect()
}

/// Train `k_resamples` models on with-replacement resamples of the training
/// records and collect each model's prediction for every test record.
///
/// Resamples a model cannot train on (a tensor mode slice left with no
/// observations) are redrawn; after `10 * k_resamples` total draws the
/// remaining attempts give up with an error. Replicate RNGs are derived
/// from `(seed, draw index)` so the result does not depend on evaluation
/// order.
pub fn bootstrap_distributions(
    train: &[PerformanceRecord],
    spec: &ModelSpec,
    test: &[PerformanceRecord],
    k_resamples: usize,
    seed: u64,
    dim_order: &[String],
) -> Result<Vec<PredictionDistribution>> {
    if k_resamples < 2 {
        return Err(Error::Domain(format!(
            "bootstrap needs K >= 2 resamples, got {k_resamples}"
        )));
    }
    if train.is_empty() {
        return Err(Error::EmptyData("no training records to resample".into()));
    }
    if test.is_empty() {
        return Err(Error::EmptyData("no test records to predict".into()));
    }
    let n = train.len();
    let max_draws = 10 * k_resamples;
    let mut draw = 0u64;
    let mut per_model: Vec<Vec<f64>> = Vec::with_capacity(k_resamples);

    while per_model.len() < k_resamples {
        if draw as usize >= max_draws {
            return Err(Error::Resample(format!(
                "{} of {k_resamples} resamples trainable after {max_draws} draws",
                per_model.len()
            )));
        }
        let mut rng = replicate_rng(seed, draw);
        draw += 1;
        let resample: Vec<PerformanceRecord> = (0..n)
            .map(|_| train[rng.gen_range(0..n)].clone())
            .collect();
        match fit_predict(&resample, test, spec, dim_order, draw) {
            Ok(predictions) => per_model.push(predictions),
            Err(Error::Untrainable(_)) => continue,
            Err(e) => return Err(e),
        }
    }

    (0..test.len())
        .map(|i| {
            let samples: Vec<f64> = per_model.iter().map(|p| p[i]).collect();
            PredictionDistribution::new(i, samples)
        })
        .collect()
}

fn replicate_rng(seed: u64, draw: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw.wrapping_add(1));
    rng
}

/// Quantile by linear interpolation at position `p * (len - 1)` of the
/// sorted samples (zero-indexed).
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let last = sorted.len() - 1;
    let pos = p * last as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let w = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * w
}

/// The middle-gamma percentile interval of a prediction distribution:
/// quantiles (1-gamma)/2 and (1+gamma)/2; gamma = 1 gives (min, max).
pub fn percentile_ci(d: &PredictionDistribution, gamma: f64) -> Result<ConfidenceInterval> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!(
            "confidence level must be in (0, 1], got {gamma}"
        )));
    }
    let mut sorted = d.samples.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(ConfidenceInterval {
        gamma,
        lower: quantile_sorted(&sorted, (1.0 - gamma) / 2.0),
        upper: quantile_sorted(&sorted, (1.0 + gamma) / 2.0),
    })
}

/// Fraction of actual values strictly inside their prediction interval at
/// level `gamma`. Endpoint hits do not count as covered.
pub fn ci_accuracy(
    actuals: &[f64],
    dists: &[PredictionDistribution],
    gamma: f64,
) -> Result<f64> {
    if actuals.len() != dists.len() {
        return Err(Error::Dimension(format!(
            "{} actuals vs {} distributions",
            actuals.len(),
            dists.len()
        )));
    }
    if actuals.is_empty() {
        return Err(Error::EmptyData("ci_accuracy over zero test points".into()));
    }
    let mut inside = 0usize;
    for (y, d) in actuals.iter().zip(dists) {
        let ci = percentile_ci(d, gamma)?;
        if ci.lower < *y && *y < ci.upper {
            inside += 1;
        }
    }
    Ok(inside as f64 / actuals.len() as f64)
}

/// Calibration over a level grid: per-level interval accuracy, summed
/// absolute deviation (CE), average distribution width, and coverage.
pub fn calibration_error(
    actuals: &[f64],
    dists: &[PredictionDistribution],
    levels: &[f64],
) -> Result<CalibrationReport> {
    if levels.is_empty() {
        return Err(Error::EmptyData("no confidence levels".into()));
    }
    for w in levels.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Domain("levels must be strictly increasing".into()));
        }
    }
    if !(levels[0] > 0.0 && *levels.last().unwrap() <= 1.0) {
        return Err(Error::Domain("levels must lie in (0, 1]".into()));
    }
    let mut acc_per_level = Vec::with_capacity(levels.len());
    let mut ce = 0.0;
    for &gamma in levels {
        let acc = ci_accuracy(actuals, dists, gamma)?;
        ce += (acc - gamma).abs();
        acc_per_level.push(acc);
    }
    let average_width =
        dists.iter().map(PredictionDistribution::width).sum::<f64>() / dists.len() as f64;
    // coverage is acc at gamma = 1 whether or not the grid includes it
    let coverage = ci_accuracy(actuals, dists, 1.0)?;
    Ok(CalibrationReport {
        levels: levels.to_vec(),
        acc_per_level,
        ce,
        ce_mean: ce / levels.len() as f64,
        average_width,
        coverage,
    })
}

/// Classifier-style expected calibration error over `m` equal-width
/// confidence bins.
pub fn ece(confidences: &[f64], correct: &[bool], m: usize) -> Result<f64> {
    if confidences.len() != correct.len() {
        return Err(Error::Dimension(format!(
            "{} confidences vs {} outcomes",
            confidences.len(),
            correct.len()
        )));
    }
    if confidences.is_empty() {
        return Err(Error::EmptyData("ece over zero predictions".into()));
    }
    if m == 0 {
        return Err(Error::Domain("ece needs at least one bucket".into()));
    }
    if let Some(bad) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::Domain(format!(
            "confidence outside [0, 1]: {bad}"
        )));
    }
    let n = confidences.len();
    let mut bin_count = vec![0usize; m];
    let mut bin_conf = vec![0.0; m];
    let mut bin_correct = vec![0usize; m];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = ((c * m as f64) as usize).min(m - 1);
        bin_count[b] += 1;
        bin_conf[b] += c;
        bin_correct[b] += usize::from(ok);
    }
    let mut total = 0.0;
    for b in 0..m {
        if bin_count[b] == 0 {
            continue;
        }
        let acc = bin_correct[b] as f64 / bin_count[b] as f64;
        let conf = bin_conf[b] / bin_count[b] as f64;
        total += bin_count[b] as f64 / n as f64 * (acc - conf).abs();
    }
    Ok(total)
}

/// Plot-ready `(gamma, accuracy)` rows, levels ascending.
pub fn reliability_diagram(report: &CalibrationReport) -> Vec<(f64, f64)> {
    report
        .levels
        .iter()
        .copied()
        .zip(report.acc_per_level.iter().copied())
        .collect()
}
