//! Fill masked tensor entries from a fitted model.
//!
//! Observed values are never touched: completion replaces only the masked
//! positions, either from a CP reconstruction or from the low-rank part of
//! a Robust PCA decomposition.

use crate::cp::{cp_fit, CpConfig};
use crate::rpca::{rpca_fit, RpcaConfig};
use crate::tensor::{MaskedMatrix, PerformanceTensor};
use crate::Result;

/// Which completion model to fit.
#[derive(Debug, Clone, PartialEq)]
pub enum CompletionMethod {
    Cp(CpConfig),
    Rpca(RpcaConfig),
}

/// Complete a tensor: observed entries are preserved verbatim, masked
/// entries are filled from the model. The result is fully observed.
pub fn complete(t: &PerformanceTensor, method: &CompletionMethod) -> Result<PerformanceTensor> {
    let filled = match method {
        CompletionMethod::Cp(cfg) => {
            let fit = cp_fit(t, cfg)?;
            fit.reconstruct()?
        }
        CompletionMethod::Rpca(cfg) => {
            let fit = rpca_fit(t, cfg)?;
            let l = &fit.decomposition.low_rank;
            let m = MaskedMatrix {
                rows: l.rows,
                cols: l.cols,
                values: l.values.clone(),
                mask: vec![true; l.values.len()],
            };
            PerformanceTensor::fold(&m, fit.decomposition.mode, t.shape())?
        }
    };
    let mut out = t.clone();
    for flat in 0..out.len() {
        if !out.mask()[flat] {
            out.set_flat(flat, filled.values()[flat]);
            out.set_mask_flat(flat, true);
        }
    }
    Ok(out)
}
