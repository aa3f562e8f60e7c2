//! CP decomposition of a masked tensor by alternating least squares.
//!
//! The model expresses a tensor as a weighted sum of rank-1 outer products.
//! Fitting solves, one mode at a time, a ridge-regularized least-squares
//! problem restricted to observed entries, so the quantity being optimized
//! is exactly the masked squared error that evaluation reports. Entries can
//! carry multiplicity weights (resampled record sets collapse duplicates to
//! a weighted mean).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::tensor::{DenseMatrix, PerformanceTensor, StandardizationParams, StandardizePolicy};
use crate::Result;

/// Factor initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorInit {
    /// Uniform random entries in [0, 1); positive init suits score data.
    RandomUniform,
    /// Leading left singular vectors of each mean-filled unfolding, padded
    /// with random columns when the rank exceeds what the unfolding offers.
    HosvdLike,
}

/// CP fitting configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpConfig {
    pub rank: usize,
    pub max_sweeps: usize,
    /// Stop when the relative change of the masked fit error falls below
    /// this.
    pub tolerance: f64,
    /// Ridge added to each row's normal equations; guards fibers with very
    /// few observations.
    pub ridge: f64,
    pub init: FactorInit,
    pub seed: u64,
    /// Standardize tensor values globally before fitting.
    pub standardize: bool,
}

impl Default for CpConfig {
    fn default() -> Self {
        CpConfig {
            rank: 5,
            max_sweeps: 500,
            tolerance: 1e-6,
            ridge: 1e-8,
            init: FactorInit::RandomUniform,
            seed: 0,
            standardize: false,
        }
    }
}

/// A rank-R CP model: one factor matrix per mode plus component weights.
///
/// Factor columns are unit-norm for non-degenerate components; component
/// magnitudes live in `weights`. Entry `(i, j, ...)` of the reconstruction
/// is `sum_r weights[r] * factors[0][i, r] * factors[1][j, r] * ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub shape: Vec<usize>,
    pub rank: usize,
    pub weights: Vec<f64>,
    pub factors: Vec<DenseMatrix>,
}

impl FactorModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Per-fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CpDiagnostics {
    pub sweeps: usize,
    pub converged: bool,
    /// Masked mean squared error after each sweep (entry 0 is the error at
    /// initialization), on the fitted scale. Non-increasing up to
    /// ridge-level slack.
    pub objective_history: Vec<f64>,
    /// `(mode, index)` rows with no observed entries; left at their
    /// initialization and skipped by the solver.
    pub unidentifiable: Vec<(usize, usize)>,
}

/// Result of [`cp_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct CpFit {
    pub model: FactorModel,
    /// Present when the tensor was standardized before fitting.
    pub standardization: Option<StandardizationParams>,
    pub diagnostics: CpDiagnostics,
}

impl CpFit {
    /// Dense reconstruction on the original data scale.
    pub fn reconstruct(&self) -> Result<PerformanceTensor> {
        let recon = cp_reconstruct(&self.model)?;
        match &self.standardization {
            Some(params) => recon.unstandardize(params),
            None => Ok(recon),
        }
    }
}

/// Fit a CP model to the observed entries of a tensor.
pub fn cp_fit(t: &PerformanceTensor, cfg: &CpConfig) -> Result<CpFit> {
    cp_fit_weighted(t, None, cfg)
}

/// [`cp_fit`] with per-entry multiplicity weights (aligned with the
/// tensor's flat layout; ignored where the mask is false).
pub fn cp_fit_weighted(
    t: &PerformanceTensor,
    entry_weights: Option<&[f64]>,
    cfg: &CpConfig,
) -> Result<CpFit> {
    if cfg.rank == 0 {
        return Err(Error::Domain("CP rank must be >= 1".into()));
    }
    if t.observed_count() == 0 {
        return Err(Error::EmptyData("tensor has no observed entries".into()));
    }
    if let Some(w) = entry_weights {
        if w.len() != t.len() {
            return Err(Error::Dimension(format!(
                "{} entry weights for a tensor of {} entries",
                w.len(),
                t.len()
            )));
        }
    }

    let (fit_tensor, standardization) = if cfg.standardize {
        let (s, p) = t.standardize(StandardizePolicy::Global)?;
        (s, Some(p))
    } else {
        (t.clone(), None)
    };

    let shape = fit_tensor.shape().to_vec();
    let order = shape.len();
    let rank = cfg.rank;

    // observed entries, their multi-indices, and weights
    let mut entries: Vec<(Vec<usize>, f64, f64)> = Vec::with_capacity(fit_tensor.observed_count());
    for flat in 0..fit_tensor.len() {
        if fit_tensor.mask()[flat] {
            let w = entry_weights.map_or(1.0, |w| w[flat]);
            entries.push((fit_tensor.unravel(flat), fit_tensor.values()[flat], w));
        }
    }
    // entries grouped by index along each mode
    let mut by_mode: Vec<Vec<Vec<usize>>> = shape
        .iter()
        .map(|&len| vec![Vec::new(); len])
        .collect();
    for (e, (idx, _, _)) in entries.iter().enumerate() {
        for m in 0..order {
            by_mode[m][idx[m]].push(e);
        }
    }

    let mut factors = init_factors(&fit_tensor, cfg)?;
    let mut weights = vec![1.0f64; rank];
    let mut unidentifiable = Vec::new();
    for (m, rows) in by_mode.iter().enumerate() {
        for (i, obs) in rows.iter().enumerate() {
            if obs.is_empty() {
                unidentifiable.push((m, i));
            }
        }
    }

    // the fitted objective: weighted mean squared error over observed entries
    let total_weight: f64 = entries.iter().map(|(_, _, w)| w).sum();
    let objective = |factors: &[DMatrix<f64>], weights: &[f64]| -> f64 {
        let mut se = 0.0;
        for (idx, value, w) in &entries {
            let mut pred = 0.0;
            for r in 0..rank {
                let mut term = weights[r];
                for (m, factor) in factors.iter().enumerate() {
                    term *= factor[(idx[m], r)];
                }
                pred += term;
            }
            let d = pred - value;
            se += w * d * d;
        }
        se / total_weight
    };

    let mut history = Vec::new();
    let mut prev_obj = objective(&factors, &weights);
    history.push(prev_obj);
    let mut sweeps = 0;
    let mut converged = false;

    for _ in 0..cfg.max_sweeps {
        sweeps += 1;
        for mode in 0..order {
            // solve for the scaled factor B = A_mode * diag(weights), one
            // row at a time over that row's observed entries
            let mut scaled = DMatrix::<f64>::zeros(shape[mode], rank);
            for i in 0..shape[mode] {
                let obs = &by_mode[mode][i];
                if obs.is_empty() {
                    // unidentifiable row: keep its current contribution
                    for r in 0..rank {
                        scaled[(i, r)] = factors[mode][(i, r)] * weights[r];
                    }
                    continue;
                }
                let mut gram = DMatrix::<f64>::zeros(rank, rank);
                let mut rhs = DVector::<f64>::zeros(rank);
                let mut z = vec![0.0f64; rank];
                for &e in obs {
                    let (idx, value, w) = &entries[e];
                    for (r, zr) in z.iter_mut().enumerate() {
                        let mut prod = 1.0;
                        for m in 0..order {
                            if m != mode {
                                prod *= factors[m][(idx[m], r)];
                            }
                        }
                        *zr = prod;
                    }
                    for a in 0..rank {
                        for b in 0..rank {
                            gram[(a, b)] += w * z[a] * z[b];
                        }
                        rhs[a] += w * value * z[a];
                    }
                }
                let mut ridged = gram.clone();
                for r in 0..rank {
                    ridged[(r, r)] += cfg.ridge;
                }
                let row = solve_spd(&ridged, &rhs)?;
                // accept the solve only if it does not worsen this row's
                // unpenalized error: rows observed solely where the other
                // factors pass near zero get exploding coefficients, and
                // the ridge would otherwise let the plain masked error creep
                // upward on later sweeps
                let old: DVector<f64> =
                    DVector::from_fn(rank, |r, _| factors[mode][(i, r)] * weights[r]);
                let se_less_const =
                    |a: &DVector<f64>| (&gram * a).dot(a) - 2.0 * rhs.dot(a);
                if se_less_const(&row) <= se_less_const(&old) {
                    for r in 0..rank {
                        scaled[(i, r)] = row[r];
                    }
                } else {
                    for r in 0..rank {
                        scaled[(i, r)] = old[r];
                    }
                }
            }
            // pull column norms back into the weights so every factor kept
            // fixed during other mode solves has unit columns
            for r in 0..rank {
                let norm = scaled.column(r).norm();
                if norm > 1e-300 {
                    weights[r] = norm;
                    for i in 0..shape[mode] {
                        factors[mode][(i, r)] = scaled[(i, r)] / norm;
                    }
                } else {
                    weights[r] = 0.0;
                    for i in 0..shape[mode] {
                        factors[mode][(i, r)] = scaled[(i, r)];
                    }
                }
            }
        }
        let obj = objective(&factors, &weights);
        history.push(obj);
        debug_assert!(
            obj <= prev_obj + 1e-9 * prev_obj.max(1.0),
            "masked objective rose: {prev_obj} -> {obj}"
        );
        let rel_change = (prev_obj - obj).abs() / prev_obj.max(1e-15);
        prev_obj = obj;
        // the second clause catches exact recovery, where the error sits at
        // the float floor and its relative change never settles
        if rel_change < cfg.tolerance || obj < 1e-20 {
            converged = true;
            break;
        }
    }

    let model = FactorModel {
        shape: shape.clone(),
        rank,
        weights,
        factors: factors
            .into_iter()
            .map(|f| DenseMatrix {
                rows: f.nrows(),
                cols: f.ncols(),
                values: f.transpose().as_slice().to_vec(), // row-major
            })
            .collect(),
    };
    Ok(CpFit {
        model,
        standardization,
        diagnostics: CpDiagnostics {
            sweeps,
            converged,
            objective_history: history,
            unidentifiable,
        },
    })
}

fn init_factors(t: &PerformanceTensor, cfg: &CpConfig) -> Result<Vec<DMatrix<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shape = t.shape();
    match cfg.init {
        FactorInit::RandomUniform => Ok(shape
            .iter()
            .map(|&len| DMatrix::from_fn(len, cfg.rank, |_, _| rng.gen_range(0.0..1.0)))
            .collect()),
        FactorInit::HosvdLike => {
            let observed: Vec<f64> = t
                .values()
                .iter()
                .zip(t.mask())
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v)
                .collect();
            let mean = observed.iter().sum::<f64>() / observed.len() as f64;
            let mut factors = Vec::with_capacity(shape.len());
            for (mode, &len) in shape.iter().enumerate() {
                let unfolding = t.unfold(mode)?;
                let mut mat = DMatrix::<f64>::zeros(unfolding.rows, unfolding.cols);
                for r in 0..unfolding.rows {
                    for c in 0..unfolding.cols {
                        let i = unfolding.idx(r, c);
                        mat[(r, c)] = if unfolding.mask[i] {
                            unfolding.values[i]
                        } else {
                            mean
                        };
                    }
                }
                let svd = mat.svd(true, false);
                let u = svd.u.expect("left singular vectors requested");
                let available = u.ncols().min(cfg.rank);
                let factor = DMatrix::from_fn(len, cfg.rank, |i, r| {
                    if r < available {
                        u[(i, r)]
                    } else {
                        rng.gen_range(0.0..1.0)
                    }
                });
                factors.push(factor);
            }
            Ok(factors)
        }
    }
}

fn solve_spd(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = gram.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    gram.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::Data("singular normal equations in CP solve".into()))
}

/// Dense reconstruction of a factor model (fully observed tensor).
pub fn cp_reconstruct(model: &FactorModel) -> Result<PerformanceTensor> {
    for (m, f) in model.factors.iter().enumerate() {
        if f.cols != model.rank || f.rows != model.shape[m] {
            return Err(Error::Dimension(format!(
                "factor {m} is {}x{}, expected {}x{}",
                f.rows, f.cols, model.shape[m], model.rank
            )));
        }
    }
    let n: usize = model.shape.iter().product();
    let mut out = PerformanceTensor::new(model.shape.clone(), vec![0.0; n], vec![true; n])?;
    for flat in 0..n {
        let idx = out.unravel(flat);
        let mut value = 0.0;
        for r in 0..model.rank {
            let mut term = model.weights[r];
            for (m, factor) in model.factors.iter().enumerate() {
                term *= factor.get(idx[m], r);
            }
            value += term;
        }
        out.set_flat(flat, value);
    }
    Ok(out)
}
