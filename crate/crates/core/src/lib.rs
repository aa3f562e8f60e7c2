//! Prediction of held-out experiment scores from structured performance
//! records, with reliability analysis of those predictions.
//!
//! The library is organized around a small set of pieces:
//!
//! - [`tensor`]: a dense multi-way score array with an observation mask,
//!   plus unfolding, standardization, and masked error metrics.
//! - [`data`]: record ingestion (CSV / JSON-lines), attribute bucketing,
//!   one-hot featurization, and tensor assembly.
//! - [`gbdt`]: gradient-boosted regression trees with level-wise and
//!   leaf-wise growth.
//! - [`cp`] and [`rpca`]: tensor-completion regressors (masked CP-ALS and
//!   Robust PCA on a tensor unfolding), tied together by [`completion`].
//! - [`evaluation`]: k-fold cross-validated RMSE, a mean-value baseline,
//!   and residual grouping.
//! - [`reliability`]: bootstrap prediction distributions, percentile
//!   confidence intervals, and calibration metrics.
//!
//! All randomness flows through explicit seeds; identical inputs produce
//! identical outputs.

pub mod completion;
pub mod cp;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gbdt;
pub mod model;
pub mod reliability;
pub mod rpca;
pub mod tensor;

pub use completion::{complete, CompletionMethod};
pub use cp::{cp_fit, cp_reconstruct, CpConfig, CpFit, FactorModel, FactorInit};
pub use data::{
    build_tensor, bucketize, featurize, load_records, BucketPlan, BucketStrategy, FeatureSchema,
    FeatureVector, PerformanceRecord, RecordFormat, TensorLayout,
};
pub use error::Error;
pub use evaluation::{
    cross_validate, kfold_plan, mean_baseline, msr_analysis, EvalReport, FoldPlan, MsrMatrix,
};
pub use gbdt::{fit_gbdt, predict_gbdt, BoostConfig, GrowthStrategy, TreeEnsemble};
pub use model::ModelSpec;
pub use reliability::{
    bootstrap_distributions, calibration_error, ci_accuracy, default_levels, ece, percentile_ci,
    reliability_diagram, CalibrationReport, ConfidenceInterval, PredictionDistribution,
};
pub use rpca::{rpca_fit, LowRankSparse, RpcaConfig, RpcaFit};
pub use tensor::{
    DenseMatrix, MaskedMatrix, PerformanceTensor, StandardizationParams, StandardizePolicy,
};

/// Library result type.
pub type Result<T> = std::result::Result<T, Error>;
