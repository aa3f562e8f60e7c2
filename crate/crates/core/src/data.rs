//! Record ingestion and featurization.
//!
//! Records arrive pre-aggregated: one row per experiment outcome, with
//! categorical coordinates (model, dataset, attribute, bucket, ...), optional
//! numeric features, and a score. The CSV interchange format reserves the
//! column `score`; columns prefixed `f_` are numeric features; every other
//! column is a categorical coordinate. JSON-lines is accepted for records
//! with nested feature vectors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::tensor::PerformanceTensor;
use crate::Result;

/// One experiment outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRecord {
    /// Dimension name -> categorical label.
    pub coords: BTreeMap<String, String>,
    /// Dense numeric features, if the setting provides them.
    pub numeric_features: Option<Vec<f64>>,
    /// Observed score (F1 in [0,1], BLEU/accuracy in [0,100], ...).
    pub score: f64,
}

impl PerformanceRecord {
    pub fn new(
        coords: BTreeMap<String, String>,
        numeric_features: Option<Vec<f64>>,
        score: f64,
    ) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Schema("record has no coordinate columns".into()));
        }
        if !score.is_finite() {
            return Err(Error::Data(format!("score is not finite: {score}")));
        }
        if let Some(f) = &numeric_features {
            if let Some(bad) = f.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("numeric feature is not finite: {bad}")));
            }
        }
        Ok(PerformanceRecord {
            coords,
            numeric_features,
            score,
        })
    }

    /// Coordinate tuple in a fixed dimension order, for keying residuals
    /// and detecting duplicates.
    pub fn coord_key(&self, dim_order: &[String]) -> Result<Vec<String>> {
        dim_order
            .iter()
            .map(|d| {
                self.coords
                    .get(d)
                    .cloned()
                    .ok_or_else(|| Error::Schema(format!("record is missing dimension '{d}'")))
            })
            .collect()
    }
}

/// Input format for [`load_records`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    JsonLines,
}

/// Load records from a file. Row order is preserved.
pub fn load_records(path: &Path, format: RecordFormat) -> Result<Vec<PerformanceRecord>> {
    let text = std::fs::read_to_string(path)?;
    match format {
        RecordFormat::Csv => parse_csv(&text),
        RecordFormat::JsonLines => parse_jsonl(&text),
    }
}

fn parse_csv(text: &str) -> Result<Vec<PerformanceRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read CSV header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let score_col = headers
        .iter()
        .position(|h| h == "score")
        .ok_or_else(|| Error::Schema("CSV header has no 'score' column".into()))?;
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| headers[i].starts_with("f_"))
        .collect();
    let coord_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| i != score_col && !headers[i].starts_with("f_"))
        .collect();
    if coord_cols.is_empty() {
        return Err(Error::Schema(
            "CSV header declares no coordinate columns".into(),
        ));
    }

    let mut records = Vec::new();
    for (row_idx, row) in reader.records().enumerate() {
        let line = row_idx + 2; // header is line 1
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if row.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, got {}", headers.len(), row.len()),
            });
        }
        let score: f64 = row[score_col].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("score '{}' is not numeric", &row[score_col]),
        })?;
        let mut coords = BTreeMap::new();
        for &c in &coord_cols {
            coords.insert(headers[c].clone(), row[c].trim().to_string());
        }
        let features = if feature_cols.is_empty() {
            None
        } else {
            let mut f = Vec::with_capacity(feature_cols.len());
            for &c in &feature_cols {
                f.push(row[c].trim().parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("feature '{}' value '{}' is not numeric", headers[c], &row[c]),
                })?);
            }
            Some(f)
        };
        records.push(
            PerformanceRecord::new(coords, features, score).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?,
        );
    }
    Ok(records)
}

fn parse_jsonl(text: &str) -> Result<Vec<PerformanceRecord>> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        let obj = value.as_object().ok_or_else(|| Error::Parse {
            line,
            message: "expected a JSON object".into(),
        })?;
        let mut coords = BTreeMap::new();
        let mut features: Vec<f64> = Vec::new();
        let mut score: Option<f64> = None;
        for (key, v) in obj {
            if key == "score" {
                score = Some(v.as_f64().ok_or_else(|| Error::Parse {
                    line,
                    message: format!("score '{v}' is not numeric"),
                })?);
            } else if key == "features" {
                let arr = v.as_array().ok_or_else(|| Error::Parse {
                    line,
                    message: "'features' must be an array of numbers".into(),
                })?;
                for item in arr {
                    features.push(item.as_f64().ok_or_else(|| Error::Parse {
                        line,
                        message: format!("feature value '{item}' is not numeric"),
                    })?);
                }
            } else if let Some(stripped) = key.strip_prefix("f_") {
                let _ = stripped;
                features.push(v.as_f64().ok_or_else(|| Error::Parse {
                    line,
                    message: format!("feature '{key}' value '{v}' is not numeric"),
                })?);
            } else {
                let label = match v {
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Number(n) => n.to_string(),
                    serde_json::Value::Bool(b) => b.to_string(),
                    other => {
                        return Err(Error::Parse {
                            line,
                            message: format!("coordinate '{key}' has non-scalar value {other}"),
                        })
                    }
                };
                coords.insert(key.clone(), label);
            }
        }
        let score = score.ok_or_else(|| Error::Parse {
            line,
            message: "record has no 'score' field".into(),
        })?;
        let features = if features.is_empty() {
            None
        } else {
            Some(features)
        };
        records.push(
            PerformanceRecord::new(coords, features, score).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?,
        );
    }
    Ok(records)
}

/// How [`bucketize`] places boundaries.
#[derive(Debug, Clone, PartialEq)]
pub enum BucketStrategy {
    /// Bucket sizes as equal as possible; tied values never split across
    /// buckets.
    EqualFrequency,
    /// Caller-supplied strictly increasing boundaries. A value equal to a
    /// boundary belongs to the bucket below it.
    FixedBoundaries(Vec<f64>),
}

/// A bucketing of one attribute's value range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketPlan {
    pub attribute: String,
    /// Strictly increasing cut points; `n_buckets == boundaries.len() + 1`.
    pub boundaries: Vec<f64>,
    pub n_buckets: usize,
}

impl BucketPlan {
    /// Bucket index for a value: the number of boundaries strictly below it.
    pub fn assign(&self, value: f64) -> usize {
        self.boundaries.iter().filter(|&&b| b < value).count()
    }
}

/// Partition attribute values into ordered buckets (bucket 0 holds the
/// smallest values).
pub fn bucketize(
    values: &[f64],
    n_buckets: usize,
    strategy: &BucketStrategy,
    attribute: &str,
) -> Result<(Vec<usize>, BucketPlan)> {
    if values.is_empty() {
        return Err(Error::EmptyData("bucketize on empty values".into()));
    }
    if n_buckets == 0 {
        return Err(Error::InfeasiblePlan("n_buckets must be >= 1".into()));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("attribute value is not finite: {bad}")));
    }
    let boundaries = match strategy {
        BucketStrategy::FixedBoundaries(b) => {
            if b.len() + 1 != n_buckets {
                return Err(Error::InfeasiblePlan(format!(
                    "{} boundaries imply {} buckets, requested {n_buckets}",
                    b.len(),
                    b.len() + 1
                )));
            }
            if b.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InfeasiblePlan(
                    "boundaries must be strictly increasing".into(),
                ));
            }
            b.clone()
        }
        BucketStrategy::EqualFrequency => equal_frequency_boundaries(values, n_buckets)?,
    };
    let plan = BucketPlan {
        attribute: attribute.to_string(),
        boundaries,
        n_buckets,
    };
    let assignment = values.iter().map(|&v| plan.assign(v)).collect();
    Ok((assignment, plan))
}

fn equal_frequency_boundaries(values: &[f64], n_buckets: usize) -> Result<Vec<f64>> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    // positions where the sorted value changes; a cut at position i puts
    // sorted[..i] below the boundary
    let change_points: Vec<usize> = (1..sorted.len())
        .filter(|&i| sorted[i] > sorted[i - 1])
        .collect();
    let n_distinct = change_points.len() + 1;
    if n_buckets > n_distinct {
        return Err(Error::InfeasiblePlan(format!(
            "{n_buckets} buckets requested but only {n_distinct} distinct values"
        )));
    }
    let n = sorted.len() as f64;
    let k = n_buckets;
    let mut boundaries = Vec::with_capacity(k - 1);
    let mut lo = 0usize; // next usable change point
    for j in 0..k.saturating_sub(1) {
        let ideal = (j + 1) as f64 * n / k as f64;
        // leave enough change points for the remaining cuts
        let hi = change_points.len() - (k - 2 - j);
        let mut best = lo;
        let mut best_dist = f64::INFINITY;
        for (c, &pos) in change_points.iter().enumerate().take(hi).skip(lo) {
            let dist = (pos as f64 - ideal).abs();
            if dist < best_dist {
                best_dist = dist;
                best = c;
            }
        }
        let cut = change_points[best];
        boundaries.push((sorted[cut - 1] + sorted[cut]) / 2.0);
        lo = best + 1;
    }
    Ok(boundaries)
}

/// One encoded field of a feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SchemaField {
    /// Categorical coordinate, one-hot over a closed label vocabulary
    /// (labels sorted, so the encoding is independent of record order).
    OneHot {
        dimension: String,
        labels: Vec<String>,
    },
    /// Numeric feature passed through, optionally z-scored with training
    /// statistics.
    Numeric {
        index: usize,
        standardize: Option<(f64, f64)>,
    },
}

/// Ordered list of encoded fields; fixes the feature-vector layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub fields: Vec<SchemaField>,
}

/// A dense encoded feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureSchema {
    /// [`FeatureSchema::fit`] over any record iterator, with the categorical
    /// dimensions fixed to `dim_order`.
    pub fn fit_over<'a, I>(records: I, dim_order: &[String]) -> Result<Self>
    where
        I: IntoIterator<Item = &'a PerformanceRecord>,
    {
        let collected: Vec<PerformanceRecord> = records.into_iter().cloned().collect();
        Self::fit(&collected, Some(dim_order), false)
    }

    /// Derive a schema from training records. Categorical dimensions follow
    /// `dim_order` when given (sorted dimension names otherwise); labels are
    /// sorted. Numeric features keep their position; when `z_score_numeric`
    /// is set their training mean/stddev is recorded.
    pub fn fit(
        records: &[PerformanceRecord],
        dim_order: Option<&[String]>,
        z_score_numeric: bool,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyData("cannot fit schema on zero records".into()));
        }
        let dims: Vec<String> = match dim_order {
            Some(order) => order.to_vec(),
            None => {
                let mut names: BTreeSet<String> = BTreeSet::new();
                for r in records {
                    names.extend(r.coords.keys().cloned());
                }
                names.into_iter().collect()
            }
        };
        let mut fields = Vec::new();
        for d in &dims {
            let mut labels: BTreeSet<String> = BTreeSet::new();
            for r in records {
                let label = r
                    .coords
                    .get(d)
                    .ok_or_else(|| Error::Schema(format!("record is missing dimension '{d}'")))?;
                labels.insert(label.clone());
            }
            fields.push(SchemaField::OneHot {
                dimension: d.clone(),
                labels: labels.into_iter().collect(),
            });
        }
        let n_numeric = records[0].numeric_features.as_ref().map_or(0, Vec::len);
        for r in records {
            let len = r.numeric_features.as_ref().map_or(0, Vec::len);
            if len != n_numeric {
                return Err(Error::Dimension(format!(
                    "records disagree on numeric feature width: {n_numeric} vs {len}"
                )));
            }
        }
        for i in 0..n_numeric {
            let standardize = if z_score_numeric {
                let vals: Vec<f64> = records
                    .iter()
                    .map(|r| r.numeric_features.as_ref().unwrap()[i])
                    .collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var =
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
                let sd = var.sqrt();
                Some((mean, if sd > 0.0 { sd } else { 1.0 }))
            } else {
                None
            };
            fields.push(SchemaField::Numeric { index: i, standardize });
        }
        Ok(FeatureSchema { fields })
    }

    /// Total encoded width.
    pub fn width(&self) -> usize {
        self.fields
            .iter()
            .map(|f| match f {
                SchemaField::OneHot { labels, .. } => labels.len(),
                SchemaField::Numeric { .. } => 1,
            })
            .sum()
    }
}

/// Encode one record against a schema. Unseen categorical labels are an
/// error: the vocabulary is closed.
pub fn featurize(record: &PerformanceRecord, schema: &FeatureSchema) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(schema.width());
    for field in &schema.fields {
        match field {
            SchemaField::OneHot { dimension, labels } => {
                let label = record.coords.get(dimension).ok_or_else(|| {
                    Error::Schema(format!("record is missing dimension '{dimension}'"))
                })?;
                let pos = labels.binary_search(label).map_err(|_| Error::UnknownLabel {
                    dimension: dimension.clone(),
                    label: label.clone(),
                })?;
                for i in 0..labels.len() {
                    values.push(if i == pos { 1.0 } else { 0.0 });
                }
            }
            SchemaField::Numeric { index, standardize } => {
                let feats = record.numeric_features.as_ref().ok_or_else(|| {
                    Error::Schema("record has no numeric features but schema expects them".into())
                })?;
                let raw = *feats.get(*index).ok_or_else(|| {
                    Error::Dimension(format!(
                        "record has {} numeric features, schema expects index {index}",
                        feats.len()
                    ))
                })?;
                values.push(match standardize {
                    Some((mean, sd)) => (raw - mean) / sd,
                    None => raw,
                });
            }
        }
    }
    Ok(FeatureVector { values })
}

/// Dimension order and per-dimension label vocabularies of an assembled
/// tensor. Labels are sorted, so the layout does not depend on record order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorLayout {
    pub dim_order: Vec<String>,
    pub labels: Vec<Vec<String>>,
}

impl TensorLayout {
    pub fn shape(&self) -> Vec<usize> {
        self.labels.iter().map(Vec::len).collect()
    }

    /// Multi-index of a record's coordinates.
    pub fn index_of(&self, record: &PerformanceRecord) -> Result<Vec<usize>> {
        self.dim_order
            .iter()
            .zip(&self.labels)
            .map(|(dim, labels)| {
                let label = record
                    .coords
                    .get(dim)
                    .ok_or_else(|| Error::Schema(format!("record is missing dimension '{dim}'")))?;
                labels.binary_search(label).map_err(|_| Error::UnknownLabel {
                    dimension: dim.clone(),
                    label: label.clone(),
                })
            })
            .collect()
    }

    /// Coordinates of a multi-index.
    pub fn coords_of(&self, index: &[usize]) -> BTreeMap<String, String> {
        self.dim_order
            .iter()
            .zip(&self.labels)
            .zip(index)
            .map(|((dim, labels), &i)| (dim.clone(), labels[i].clone()))
            .collect()
    }

    /// The label-map sidecar: `{dimension: [labels in index order]}`.
    pub fn label_maps(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (dim, labels) in self.dim_order.iter().zip(&self.labels) {
            map.insert(
                dim.clone(),
                serde_json::Value::Array(
                    labels
                        .iter()
                        .map(|l| serde_json::Value::String(l.clone()))
                        .collect(),
                ),
            );
        }
        serde_json::Value::Object(map)
    }
}

impl TensorLayout {
    /// Derive a layout from the coordinates seen in `records`.
    pub fn fit<'a, I>(records: I, dim_order: &[String]) -> Result<TensorLayout>
    where
        I: IntoIterator<Item = &'a PerformanceRecord>,
    {
        if dim_order.len() < 2 {
            return Err(Error::Dimension(format!(
                "tensor needs >= 2 dimensions, dim_order has {}",
                dim_order.len()
            )));
        }
        let mut labels: Vec<BTreeSet<String>> = vec![BTreeSet::new(); dim_order.len()];
        let mut seen_any = false;
        for r in records {
            seen_any = true;
            for (d, set) in dim_order.iter().zip(labels.iter_mut()) {
                let label = r
                    .coords
                    .get(d)
                    .ok_or_else(|| Error::Schema(format!("record is missing dimension '{d}'")))?;
                set.insert(label.clone());
            }
        }
        if !seen_any {
            return Err(Error::EmptyData(
                "cannot build a tensor from zero records".into(),
            ));
        }
        Ok(TensorLayout {
            dim_order: dim_order.to_vec(),
            labels: labels
                .into_iter()
                .map(|s| s.into_iter().collect())
                .collect(),
        })
    }
}

/// Assemble records into a tensor: observed entries hold scores, cells with
/// no record are masked. Two records on the same cell are an error.
pub fn build_tensor(
    records: &[PerformanceRecord],
    dim_order: &[String],
) -> Result<(PerformanceTensor, TensorLayout)> {
    let layout = TensorLayout::fit(records, dim_order)?;
    let shape = layout.shape();
    let n: usize = shape.iter().product();
    let mut tensor = PerformanceTensor::new(shape, vec![0.0; n], vec![false; n])?;
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let index = layout.index_of(r)?;
        let flat = tensor.offset(&index)?;
        if let Some(&prev) = owner.get(&flat) {
            let mut tuple = String::new();
            for (d, l) in dim_order.iter().zip(r.coord_key(dim_order)?) {
                let _ = write!(tuple, "{d}={l} ");
            }
            return Err(Error::DuplicateEntry(format!(
                "records {prev} and {i} share the coordinate tuple {}",
                tuple.trim_end()
            )));
        }
        owner.insert(flat, i);
        tensor.set(&index, r.score)?;
    }
    Ok((tensor, layout))
}

/// Like [`build_tensor`], but duplicate coordinate tuples collapse to their
/// mean score with a multiplicity weight per cell. This is how resampled
/// record sets (which repeat records) become tensors.
pub fn build_weighted_tensor(
    records: &[PerformanceRecord],
    dim_order: &[String],
) -> Result<(PerformanceTensor, TensorLayout, Vec<f64>)> {
    let layout = TensorLayout::fit(records, dim_order)?;
    let (tensor, weights) = assemble_weighted(records, &layout)?;
    Ok((tensor, layout, weights))
}

/// Assemble records against a fixed layout (whose vocabulary may be wider
/// than what `records` cover). Duplicates collapse to their mean with a
/// multiplicity weight.
pub fn assemble_weighted(
    records: &[PerformanceRecord],
    layout: &TensorLayout,
) -> Result<(PerformanceTensor, Vec<f64>)> {
    let shape = layout.shape();
    let n: usize = shape.iter().product();
    let strides = compute_strides(&shape);
    let mut sums = vec![0.0; n];
    let mut counts = vec![0.0f64; n];
    for r in records {
        let index = layout.index_of(r)?;
        let flat = index.iter().zip(&strides).map(|(&i, s)| i * s).sum::<usize>();
        sums[flat] += r.score;
        counts[flat] += 1.0;
    }
    let mut values = vec![0.0; n];
    let mut mask = vec![false; n];
    for i in 0..n {
        if counts[i] > 0.0 {
            values[i] = sums[i] / counts[i];
            mask[i] = true;
        }
    }
    let tensor = PerformanceTensor::new(shape, values, mask)?;
    Ok((tensor, counts))
}

fn compute_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    strides
}
