//! Shared error type for the library.

use thiserror::Error;

/// Errors surfaced by tensor, data, model, and reliability operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Mode index, shape, or feature width does not match.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An operation selected zero entries (empty mask or empty group).
    #[error("empty-selection error: {0}")]
    EmptySelection(String),

    /// A training set or input collection was empty.
    #[error("empty-data error: {0}")]
    EmptyData(String),

    /// Non-finite or otherwise unusable values in the input.
    #[error("data error: {0}")]
    Data(String),

    /// Input does not conform to the declared schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A row or line failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A categorical label was not present in the closed vocabulary.
    #[error("unknown-label error: dimension '{dimension}' has no label '{label}'")]
    UnknownLabel { dimension: String, label: String },

    /// Two records map to the same tensor cell.
    #[error("duplicate-entry error: {0}")]
    DuplicateEntry(String),

    /// The requested plan cannot be satisfied by the data.
    #[error("infeasible-plan error: {0}")]
    InfeasiblePlan(String),

    /// A numeric argument was outside its valid domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The model cannot be trained on this data (for tensor models: a mode
    /// slice with no observed entries).
    #[error("untrainable error: {0}")]
    Untrainable(String),

    /// Bootstrap resampling could not produce a trainable sample.
    #[error("resample error: {0}")]
    Resample(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
