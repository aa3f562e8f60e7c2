//! Model dispatch shared by the evaluation and reliability pipelines.
//!
//! Everything that trains on one record set and scores another goes through
//! [`fit_predict`], so cross-validation and bootstrap resampling treat the
//! mean baseline, the boosted trees, and the tensor-completion models
//! uniformly. Tensor models receive the train records as a masked tensor
//! whose vocabulary covers the test coordinates too; duplicated records
//! (from resampling) collapse to a weighted mean per cell.

use crate::cp::{cp_fit_weighted, CpConfig};
use crate::data::{assemble_weighted, featurize, FeatureSchema, PerformanceRecord, TensorLayout};
use crate::error::Error;
use crate::evaluation::mean_baseline;
use crate::gbdt::{fit_gbdt, predict_gbdt, BoostConfig};
use crate::rpca::{rpca_fit, RpcaConfig};
use crate::tensor::{MaskedMatrix, PerformanceTensor};
use crate::Result;

/// Which regressor to train.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// Predict the mean of the training scores for every test entry.
    Baseline,
    /// Gradient-boosted trees on one-hot coords plus numeric features.
    Gbdt(BoostConfig),
    /// CP completion of the performance tensor.
    Cp(CpConfig),
    /// Robust-PCA completion of the performance tensor.
    Rpca(RpcaConfig),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Baseline => "baseline",
            ModelSpec::Gbdt(cfg) => match cfg.growth {
                crate::gbdt::GrowthStrategy::LevelWise => "gbdt-level-wise",
                crate::gbdt::GrowthStrategy::LeafWise => "gbdt-leaf-wise",
            },
            ModelSpec::Cp(_) => "cp",
            ModelSpec::Rpca(_) => "rpca",
        }
    }

    pub fn is_tensor_method(&self) -> bool {
        matches!(self, ModelSpec::Cp(_) | ModelSpec::Rpca(_))
    }
}

/// Mode slices of the mask with zero observed entries, as `(mode, index)`.
pub fn empty_mode_slices(t: &PerformanceTensor) -> Vec<(usize, usize)> {
    let mut counts: Vec<Vec<usize>> = t.shape().iter().map(|&len| vec![0; len]).collect();
    for flat in 0..t.len() {
        if t.mask()[flat] {
            for (m, &i) in t.unravel(flat).iter().enumerate() {
                counts[m][i] += 1;
            }
        }
    }
    let mut empty = Vec::new();
    for (m, row) in counts.iter().enumerate() {
        for (i, &c) in row.iter().enumerate() {
            if c == 0 {
                empty.push((m, i));
            }
        }
    }
    empty
}

/// Train `spec` on `train` and predict a score for every record in `test`.
///
/// `seed_offset` folds into the model's own seed so independent fits (e.g.
/// bootstrap replicates) stay deterministic without sharing RNG state.
pub fn fit_predict(
    train: &[PerformanceRecord],
    test: &[PerformanceRecord],
    spec: &ModelSpec,
    dim_order: &[String],
    seed_offset: u64,
) -> Result<Vec<f64>> {
    if train.is_empty() {
        return Err(Error::EmptyData("no training records".into()));
    }
    match spec {
        ModelSpec::Baseline => {
            let scores: Vec<f64> = train.iter().map(|r| r.score).collect();
            let mean = mean_baseline(&scores)?;
            Ok(vec![mean; test.len()])
        }
        ModelSpec::Gbdt(cfg) => {
            // closed vocabulary over train and test coords
            let schema = FeatureSchema::fit_over(train.iter().chain(test), dim_order)?;
            let x: Vec<_> = train
                .iter()
                .map(|r| featurize(r, &schema))
                .collect::<Result<_>>()?;
            let y: Vec<f64> = train.iter().map(|r| r.score).collect();
            let model = fit_gbdt(&x, &y, cfg, seed_offset)?;
            let xt: Vec<_> = test
                .iter()
                .map(|r| featurize(r, &schema))
                .collect::<Result<_>>()?;
            predict_gbdt(&model, &xt)
        }
        ModelSpec::Cp(cfg) => {
            let (tensor, layout, weights) = train_tensor(train, test, dim_order)?;
            let mut fit_cfg = cfg.clone();
            fit_cfg.seed = cfg.seed.wrapping_add(seed_offset);
            let fit = cp_fit_weighted(&tensor, Some(&weights), &fit_cfg)?;
            let completed = fit.reconstruct()?;
            read_test_cells(&completed, &layout, test)
        }
        ModelSpec::Rpca(cfg) => {
            let (tensor, layout, _) = train_tensor(train, test, dim_order)?;
            let fit = rpca_fit(&tensor, cfg)?;
            let l = &fit.decomposition.low_rank;
            let m = MaskedMatrix {
                rows: l.rows,
                cols: l.cols,
                values: l.values.clone(),
                mask: vec![true; l.values.len()],
            };
            let completed =
                PerformanceTensor::fold(&m, fit.decomposition.mode, tensor.shape())?;
            read_test_cells(&completed, &layout, test)
        }
    }
}

fn train_tensor(
    train: &[PerformanceRecord],
    test: &[PerformanceRecord],
    dim_order: &[String],
) -> Result<(PerformanceTensor, TensorLayout, Vec<f64>)> {
    let layout = TensorLayout::fit(train.iter().chain(test), dim_order)?;
    let (tensor, weights) = assemble_weighted(train, &layout)?;
    let empty = empty_mode_slices(&tensor);
    if !empty.is_empty() {
        let described: Vec<String> = empty
            .iter()
            .map(|&(m, i)| format!("{}={}", layout.dim_order[m], layout.labels[m][i]))
            .collect();
        return Err(Error::Untrainable(format!(
            "training tensor has no observations for {}",
            described.join(", ")
        )));
    }
    Ok((tensor, layout, weights))
}

fn read_test_cells(
    completed: &PerformanceTensor,
    layout: &TensorLayout,
    test: &[PerformanceRecord],
) -> Result<Vec<f64>> {
    test.iter()
        .map(|r| {
            let index = layout.index_of(r)?;
            Ok(completed.get(&index)?.0)
        })
        .collect()
}
