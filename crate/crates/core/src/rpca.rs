//! Robust PCA on a tensor unfolding via inexact augmented Lagrangians.
//!
//! Separates a matrix into a low-rank part L and an entrywise-sparse part S
//! by alternating singular-value soft-thresholding (for L) and entrywise
//! soft-thresholding (for S), with a dual update and a penalty parameter
//! that grows by `mu_growth` each iteration. Missing entries start at zero
//! and are re-estimated from L every iteration, which is what turns the
//! decomposition into a completion method.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::tensor::{DenseMatrix, PerformanceTensor};
use crate::Result;

/// Robust PCA configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcaConfig {
    /// Relative weight of the nuclear-norm term.
    pub lambda_lowrank: f64,
    /// Relative weight of the l1 term; the effective sparsity level is
    /// `lambda_sparse / lambda_lowrank / sqrt(max unfolding dimension)`.
    pub lambda_sparse: f64,
    /// Penalty growth factor per iteration (> 1).
    pub mu_growth: f64,
    pub max_iters: usize,
    /// Convergence threshold on the relative feasibility gap over observed
    /// entries.
    pub tolerance: f64,
    /// Divide values by their largest magnitude before solving (and scale
    /// the decomposition back afterwards).
    pub scale_input: bool,
    /// Which unfolding to decompose when the input has order > 2.
    pub unfold_mode: usize,
}

impl Default for RpcaConfig {
    fn default() -> Self {
        RpcaConfig {
            lambda_lowrank: 1.0,
            lambda_sparse: 1.0,
            mu_growth: 1.1,
            max_iters: 1000,
            tolerance: 1e-7,
            scale_input: true,
            unfold_mode: 0,
        }
    }
}

/// The recovered decomposition: `low_rank + sparse` matches the input
/// unfolding on observed entries to solver tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankSparse {
    pub low_rank: DenseMatrix,
    pub sparse: DenseMatrix,
    /// Unfolding mode the decomposition was computed on.
    pub mode: usize,
}

/// Result of [`rpca_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct RpcaFit {
    pub decomposition: LowRankSparse,
    pub converged: bool,
    pub iterations: usize,
    /// Relative feasibility gap after each iteration.
    pub feasibility_history: Vec<f64>,
}

/// Decompose the chosen unfolding of a tensor into low-rank plus sparse.
pub fn rpca_fit(t: &PerformanceTensor, cfg: &RpcaConfig) -> Result<RpcaFit> {
    if cfg.mu_growth <= 1.0 {
        return Err(Error::Domain(format!(
            "mu_growth must be > 1, got {}",
            cfg.mu_growth
        )));
    }
    if cfg.lambda_lowrank <= 0.0 || cfg.lambda_sparse <= 0.0 {
        return Err(Error::Domain(
            "regularization parameters must be positive".into(),
        ));
    }
    let unfolding = t.unfold(cfg.unfold_mode)?;
    let rows = unfolding.rows;
    let cols = unfolding.cols;

    let scale = if cfg.scale_input {
        let max_abs = unfolding
            .values
            .iter()
            .zip(&unfolding.mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| v.abs())
            .fold(0.0f64, f64::max);
        if max_abs > 0.0 {
            max_abs
        } else {
            1.0
        }
    } else {
        1.0
    };

    // observed entries scaled into [-1, 1]; missing entries start at zero
    let mut data = DMatrix::<f64>::zeros(rows, cols);
    let mut observed = vec![false; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let i = unfolding.idx(r, c);
            if unfolding.mask[i] {
                data[(r, c)] = unfolding.values[i] / scale;
                observed[i] = true;
            }
        }
    }

    let lambda = (cfg.lambda_sparse / cfg.lambda_lowrank) / (rows.max(cols) as f64).sqrt();
    let observed_norm = {
        let mut s = 0.0;
        for r in 0..rows {
            for c in 0..cols {
                if observed[r * cols + c] {
                    s += data[(r, c)] * data[(r, c)];
                }
            }
        }
        s.sqrt()
    };

    if observed_norm == 0.0 {
        // nothing to decompose
        return Ok(RpcaFit {
            decomposition: LowRankSparse {
                low_rank: DenseMatrix::zeros(rows, cols),
                sparse: DenseMatrix::zeros(rows, cols),
                mode: cfg.unfold_mode,
            },
            converged: true,
            iterations: 0,
            feasibility_history: Vec::new(),
        });
    }

    // dual and penalty initialization in the usual inexact-ALM way
    let spectral = data.clone().svd(false, false).singular_values[0];
    let inf_over_lambda = data.iter().map(|v| v.abs()).fold(0.0f64, f64::max) / lambda;
    let dual_scale = spectral.max(inf_over_lambda);
    let mut dual = data.map(|v| v / dual_scale);
    let mut mu = 1.25 / spectral;
    let mu_cap = mu * 1e7;

    let mut low_rank = DMatrix::<f64>::zeros(rows, cols);
    let mut sparse = DMatrix::<f64>::zeros(rows, cols);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;

        // L-step: singular value soft-thresholding
        let target_l = &data - &sparse + dual.map(|v| v / mu);
        low_rank = svd_soft_threshold(&target_l, 1.0 / mu);

        // re-estimate missing entries from the current L; their sparse and
        // dual components stay pinned at zero
        for r in 0..rows {
            for c in 0..cols {
                if !observed[r * cols + c] {
                    data[(r, c)] = low_rank[(r, c)];
                    sparse[(r, c)] = 0.0;
                    dual[(r, c)] = 0.0;
                }
            }
        }

        // S-step: entrywise soft-thresholding
        let target_s = &data - &low_rank + dual.map(|v| v / mu);
        sparse = target_s.map(|v| soft_threshold(v, lambda / mu));
        for r in 0..rows {
            for c in 0..cols {
                if !observed[r * cols + c] {
                    sparse[(r, c)] = 0.0;
                }
            }
        }

        // dual update and feasibility on observed entries
        let mut gap_sq = 0.0;
        for r in 0..rows {
            for c in 0..cols {
                let z = data[(r, c)] - low_rank[(r, c)] - sparse[(r, c)];
                if observed[r * cols + c] {
                    dual[(r, c)] += mu * z;
                    gap_sq += z * z;
                }
            }
        }
        let gap = gap_sq.sqrt() / observed_norm;
        history.push(gap);
        mu = (mu * cfg.mu_growth).min(mu_cap);
        if gap < cfg.tolerance {
            converged = true;
            break;
        }
    }

    let to_dense = |m: &DMatrix<f64>| {
        let mut out = DenseMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                out.set(r, c, m[(r, c)] * scale);
            }
        }
        out
    };
    Ok(RpcaFit {
        decomposition: LowRankSparse {
            low_rank: to_dense(&low_rank),
            sparse: to_dense(&sparse),
            mode: cfg.unfold_mode,
        },
        converged,
        iterations,
        feasibility_history: history,
    })
}

#[inline]
fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

fn svd_soft_threshold(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let shrunk: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| (s - tau).max(0.0))
        .collect();
    let mut scaled_u = u;
    for (j, &s) in shrunk.iter().enumerate() {
        for i in 0..scaled_u.nrows() {
            scaled_u[(i, j)] *= s;
        }
    }
    scaled_u * v_t
}
