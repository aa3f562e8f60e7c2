//! Dense multi-way score arrays with an observation mask.
//!
//! Values are stored flat in row-major order (last index varies fastest).
//! The mask distinguishes "score 0.0" from "no experiment run"; every
//! algorithm in this crate that consumes a tensor respects it.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// A dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major values, `rows * cols` entries.
    pub values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix of shape {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, values })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }
}

/// A matrix unfolding that carries the observation mask along.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl MaskedMatrix {
    #[inline]
    pub fn idx(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }
}

/// How standardization groups entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StandardizePolicy {
    /// One mean/stddev over all observed entries.
    Global,
    /// One mean/stddev per index along the given mode.
    PerSlice(usize),
}

/// Means and standard deviations recorded by [`PerformanceTensor::standardize`].
///
/// Zero-variance groups are stored with stddev 1 so the transform stays
/// invertible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
    pub policy: StandardizePolicy,
}

/// Multi-way array of scores with a per-entry observation mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl PerformanceTensor {
    /// Build a tensor, validating shape/length consistency and that every
    /// observed value is finite. Order must be at least 2.
    pub fn new(shape: Vec<usize>, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if shape.len() < 2 {
            return Err(Error::Dimension(format!(
                "tensor order must be >= 2, got {}",
                shape.len()
            )));
        }
        if shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "tensor shape must be positive, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if values.len() != n || mask.len() != n {
            return Err(Error::Dimension(format!(
                "shape {shape:?} implies {n} entries, got {} values / {} mask bits",
                values.len(),
                mask.len()
            )));
        }
        for (i, (&v, &m)) in values.iter().zip(&mask).enumerate() {
            if m && !v.is_finite() {
                return Err(Error::Data(format!(
                    "observed entry {i} is not finite: {v}"
                )));
            }
        }
        Ok(PerformanceTensor {
            shape,
            values,
            mask,
        })
    }

    /// Fully observed tensor over the given values.
    pub fn dense(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(shape, values, vec![true; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Row-major strides (last index varies fastest).
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for d in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * self.shape[d + 1];
        }
        strides
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::Dimension(format!(
                "index of length {} into order-{} tensor",
                index.len(),
                self.shape.len()
            )));
        }
        let mut off = 0;
        for ((&i, &s), stride) in index.iter().zip(&self.shape).zip(self.strides()) {
            if i >= s {
                return Err(Error::Dimension(format!(
                    "index {index:?} out of bounds for shape {:?}",
                    self.shape
                )));
            }
            off += i * stride;
        }
        Ok(off)
    }

    /// Multi-index of a flat offset.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let strides = self.strides();
        let mut index = vec![0; self.shape.len()];
        for d in 0..self.shape.len() {
            index[d] = flat / strides[d];
            flat %= strides[d];
        }
        index
    }

    /// Fraction of entries that are missing.
    pub fn sparsity(&self) -> f64 {
        let missing = self.mask.iter().filter(|&&m| !m).count();
        missing as f64 / self.len() as f64
    }

    /// Mode-`mode` unfolding: row i holds every entry whose `mode`-th index
    /// is i. Remaining indices are ordered with the lowest-numbered mode
    /// varying fastest; any fixed convention works, this one is pinned for
    /// cross-implementation compatibility. The mask is unfolded identically.
    pub fn unfold(&self, mode: usize) -> Result<MaskedMatrix> {
        if mode >= self.order() {
            return Err(Error::Dimension(format!(
                "unfold mode {mode} out of range for order-{} tensor",
                self.order()
            )));
        }
        let rows = self.shape[mode];
        let cols = self.len() / rows;
        let mut values = vec![0.0; self.len()];
        let mut mask = vec![false; self.len()];
        for flat in 0..self.len() {
            let index = self.unravel(flat);
            let (r, c) = unfolded_position(&index, &self.shape, mode);
            values[r * cols + c] = self.values[flat];
            mask[r * cols + c] = self.mask[flat];
        }
        Ok(MaskedMatrix {
            rows,
            cols,
            values,
            mask,
        })
    }

    /// Inverse of [`unfold`](Self::unfold).
    pub fn fold(m: &MaskedMatrix, mode: usize, shape: &[usize]) -> Result<Self> {
        if mode >= shape.len() {
            return Err(Error::Dimension(format!(
                "fold mode {mode} out of range for shape {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if m.rows != shape[mode] || m.rows * m.cols != n {
            return Err(Error::Dimension(format!(
                "matrix {}x{} inconsistent with shape {shape:?} along mode {mode}",
                m.rows, m.cols
            )));
        }
        let mut t = PerformanceTensor::new(shape.to_vec(), vec![0.0; n], vec![false; n])?;
        for flat in 0..n {
            let index = t.unravel(flat);
            let (r, c) = unfolded_position(&index, shape, mode);
            t.values[flat] = m.values[r * m.cols + c];
            t.mask[flat] = m.mask[r * m.cols + c];
        }
        Ok(t)
    }

    /// RMSE between two tensors over the entries selected by `eval_mask`.
    pub fn masked_rmse(a: &Self, b: &Self, eval_mask: &[bool]) -> Result<f64> {
        if a.shape != b.shape {
            return Err(Error::Dimension(format!(
                "shape mismatch {:?} vs {:?}",
                a.shape, b.shape
            )));
        }
        if eval_mask.len() != a.len() {
            return Err(Error::Dimension(format!(
                "eval mask of length {} for tensor of {} entries",
                eval_mask.len(),
                a.len()
            )));
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for ((&x, &y), &selected) in a.values.iter().zip(&b.values).zip(eval_mask) {
            if selected {
                let d = x - y;
                sum += d * d;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::EmptySelection(
                "masked_rmse selected no entries".into(),
            ));
        }
        Ok((sum / count as f64).sqrt())
    }

    /// Shift and scale observed entries to mean 0, stddev 1 per group
    /// (population stddev). Masked entries are transformed with their
    /// group's parameters so round-trips are exact everywhere.
    pub fn standardize(&self, policy: StandardizePolicy) -> Result<(Self, StandardizationParams)> {
        let group_of = |index: &[usize]| -> usize {
            match policy {
                StandardizePolicy::Global => 0,
                StandardizePolicy::PerSlice(mode) => index[mode],
            }
        };
        let n_groups = match policy {
            StandardizePolicy::Global => 1,
            StandardizePolicy::PerSlice(mode) => {
                if mode >= self.order() {
                    return Err(Error::Dimension(format!(
                        "standardize mode {mode} out of range for order-{} tensor",
                        self.order()
                    )));
                }
                self.shape[mode]
            }
        };
        let mut sums = vec![0.0; n_groups];
        let mut counts = vec![0usize; n_groups];
        for flat in 0..self.len() {
            if self.mask[flat] {
                let g = group_of(&self.unravel(flat));
                sums[g] += self.values[flat];
                counts[g] += 1;
            }
        }
        if counts.contains(&0) {
            return Err(Error::EmptySelection(
                "standardization group has no observed entries".into(),
            ));
        }
        let means: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| s / c as f64)
            .collect();
        let mut sq = vec![0.0; n_groups];
        for flat in 0..self.len() {
            if self.mask[flat] {
                let g = group_of(&self.unravel(flat));
                let d = self.values[flat] - means[g];
                sq[g] += d * d;
            }
        }
        // Zero-variance groups get stddev 1 so the transform is invertible.
        let stddevs: Vec<f64> = sq
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| {
                let sd = (s / c as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        let mut out = self.clone();
        for flat in 0..out.len() {
            let g = group_of(&out.unravel(flat));
            out.values[flat] = (out.values[flat] - means[g]) / stddevs[g];
        }
        Ok((
            out,
            StandardizationParams {
                means,
                stddevs,
                policy,
            },
        ))
    }

    /// Invert [`standardize`](Self::standardize).
    pub fn unstandardize(&self, params: &StandardizationParams) -> Result<Self> {
        let group_of = |index: &[usize]| -> usize {
            match params.policy {
                StandardizePolicy::Global => 0,
                StandardizePolicy::PerSlice(mode) => index[mode],
            }
        };
        let expected = match params.policy {
            StandardizePolicy::Global => 1,
            StandardizePolicy::PerSlice(mode) => {
                if mode >= self.order() {
                    return Err(Error::Dimension(format!(
                        "unstandardize mode {mode} out of range for order-{} tensor",
                        self.order()
                    )));
                }
                self.shape[mode]
            }
        };
        if params.means.len() != expected || params.stddevs.len() != expected {
            return Err(Error::Dimension(format!(
                "standardization params for {} groups, expected {expected}",
                params.means.len()
            )));
        }
        let mut out = self.clone();
        for flat in 0..out.len() {
            let g = group_of(&out.unravel(flat));
            out.values[flat] = out.values[flat] * params.stddevs[g] + params.means[g];
        }
        Ok(out)
    }

    /// Set one entry and mark it observed.
    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        let off = self.offset(index)?;
        self.values[off] = value;
        self.mask[off] = true;
        Ok(())
    }

    pub fn get(&self, index: &[usize]) -> Result<(f64, bool)> {
        let off = self.offset(index)?;
        Ok((self.values[off], self.mask[off]))
    }

    /// Replace the value at a flat offset without touching the mask.
    pub(crate) fn set_flat(&mut self, flat: usize, value: f64) {
        self.values[flat] = value;
    }

    pub(crate) fn set_mask_flat(&mut self, flat: usize, observed: bool) {
        self.mask[flat] = observed;
    }
}

/// (row, column) of a multi-index in the mode-`mode` unfolding. Remaining
/// modes contribute in ascending order with the lowest-numbered varying
/// fastest.
fn unfolded_position(index: &[usize], shape: &[usize], mode: usize) -> (usize, usize) {
    let row = index[mode];
    let mut col = 0;
    let mut stride = 1;
    for d in 0..shape.len() {
        if d == mode {
            continue;
        }
        col += index[d] * stride;
        stride *= shape[d];
    }
    (row, col)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: &[usize], mask_prob: f64, seed: u64) -> PerformanceTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(1.0 - mask_prob)).collect();
        PerformanceTensor::new(shape.to_vec(), values, mask).unwrap()
    }

    #[test]
    fn order_two_mode_zero_unfold_is_identity() {
        let t = PerformanceTensor::dense(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = t.unfold(0).unwrap();
        assert_eq!(m.rows, 2);
        assert_eq!(m.cols, 2);
        assert_eq!(m.values, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn mode_one_unfold_matches_brute_force_enumeration() {
        // 2x2x2 tensor with values 1..=8; check every index tuple lands
        // where the convention says it should.
        let t =
            PerformanceTensor::dense(vec![2, 2, 2], (1..=8).map(|v| v as f64).collect()).unwrap();
        let m = t.unfold(1).unwrap();
        assert_eq!((m.rows, m.cols), (2, 4));
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let v = t.get(&[i, j, k]).unwrap().0;
                    // remaining modes (0, 2): mode 0 varies fastest
                    let col = i + 2 * k;
                    assert_eq!(m.values[m.idx(j, col)], v, "entry ({i},{j},{k})");
                }
            }
        }
    }

    #[test]
    fn fold_inverts_unfold_every_mode() {
        let t = random_tensor(&[3, 4, 5], 0.3, 7);
        for mode in 0..3 {
            let m = t.unfold(mode).unwrap();
            let back = PerformanceTensor::fold(&m, mode, t.shape()).unwrap();
            assert_eq!(back, t, "mode {mode}");
        }
    }

    #[test]
    fn fold_of_row_matrix_along_mode_zero() {
        let m = MaskedMatrix {
            rows: 1,
            cols: 3,
            values: vec![1.0, 2.0, 3.0],
            mask: vec![true; 3],
        };
        let t = PerformanceTensor::fold(&m, 0, &[1, 3]).unwrap();
        assert_eq!(t.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn single_element_tensor_round_trips_every_mode() {
        let t = PerformanceTensor::dense(vec![1, 1], vec![4.25]).unwrap();
        for mode in 0..2 {
            let m = t.unfold(mode).unwrap();
            assert_eq!(PerformanceTensor::fold(&m, mode, &[1, 1]).unwrap(), t);
        }
    }

    #[test]
    fn unfold_rejects_mode_out_of_range() {
        let t = PerformanceTensor::dense(vec![2, 2], vec![0.0; 4]).unwrap();
        assert!(matches!(t.unfold(2), Err(Error::Dimension(_))));
    }

    #[test]
    fn sparsity_counts_missing_fraction() {
        let full = PerformanceTensor::dense(vec![2, 3], vec![1.0; 6]).unwrap();
        assert_eq!(full.sparsity(), 0.0);

        let none =
            PerformanceTensor::new(vec![2, 3], vec![0.0; 6], vec![false; 6]).unwrap();
        assert_eq!(none.sparsity(), 1.0);

        // 39x39x22 with 11578 missing entries, the scale reported for a
        // machine-translation score tensor.
        let n = 39 * 39 * 22;
        let mut mask = vec![true; n];
        for m in mask.iter_mut().take(11578) {
            *m = false;
        }
        let t = PerformanceTensor::new(vec![39, 39, 22], vec![0.0; n], mask).unwrap();
        assert!((t.sparsity() - 0.346).abs() < 5e-4);
    }

    #[test]
    fn masked_rmse_hand_values() {
        let a = PerformanceTensor::dense(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let b = PerformanceTensor::dense(vec![1, 2], vec![1.0, 4.0]).unwrap();
        assert_eq!(PerformanceTensor::masked_rmse(&a, &a, &[true, true]).unwrap(), 0.0);
        let r = PerformanceTensor::masked_rmse(&a, &b, &[true, true]).unwrap();
        assert!((r - (4.0f64 / 2.0).sqrt()).abs() < 1e-12);

        let a = PerformanceTensor::dense(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = PerformanceTensor::dense(vec![1, 3], vec![0.0, 2.0, 3.0]).unwrap();
        let r = PerformanceTensor::masked_rmse(&a, &b, &[true, false, false]).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn masked_rmse_empty_selection_errors() {
        let a = PerformanceTensor::dense(vec![1, 2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            PerformanceTensor::masked_rmse(&a, &a, &[false, false]),
            Err(Error::EmptySelection(_))
        ));
    }

    #[test]
    fn standardize_constant_tensor_uses_unit_stddev() {
        let t = PerformanceTensor::dense(vec![2, 2], vec![3.0; 4]).unwrap();
        let (s, p) = t.standardize(StandardizePolicy::Global).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
        assert_eq!(p.stddevs, vec![1.0]);
    }

    #[test]
    fn standardize_two_values_population_stddev() {
        let t = PerformanceTensor::dense(vec![1, 2], vec![1.0, 3.0]).unwrap();
        let (s, p) = t.standardize(StandardizePolicy::Global).unwrap();
        assert!((s.values()[0] - -1.0).abs() < 1e-12);
        assert!((s.values()[1] - 1.0).abs() < 1e-12);
        assert_eq!(p.means, vec![2.0]);
        assert_eq!(p.stddevs, vec![1.0]);
    }

    #[test]
    fn standardize_empty_slice_errors() {
        // slice 1 of mode 0 has no observed entries
        let t = PerformanceTensor::new(
            vec![2, 2],
            vec![1.0, 2.0, 0.0, 0.0],
            vec![true, true, false, false],
        )
        .unwrap();
        assert!(matches!(
            t.standardize(StandardizePolicy::PerSlice(0)),
            Err(Error::EmptySelection(_))
        ));
    }

    #[test]
    fn per_slice_standardization_normalizes_each_slice() {
        let t = PerformanceTensor::dense(vec![2, 2], vec![1.0, 3.0, 10.0, 30.0]).unwrap();
        let (s, _) = t.standardize(StandardizePolicy::PerSlice(0)).unwrap();
        assert!((s.values()[0] + 1.0).abs() < 1e-12);
        assert!((s.values()[1] - 1.0).abs() < 1e-12);
        assert!((s.values()[2] + 1.0).abs() < 1e-12);
        assert!((s.values()[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tensor_rejects_order_one_and_nonfinite_observed() {
        assert!(PerformanceTensor::dense(vec![4], vec![0.0; 4]).is_err());
        assert!(PerformanceTensor::new(
            vec![1, 2],
            vec![f64::NAN, 0.0],
            vec![true, true]
        )
        .is_err());
        // non-finite is fine where masked
        assert!(PerformanceTensor::new(
            vec![1, 2],
            vec![f64::NAN, 0.0],
            vec![false, true]
        )
        .is_ok());
    }

    proptest! {
        #[test]
        fn prop_fold_unfold_round_trip(seed in 0u64..200, mode in 0usize..3) {
            let t = random_tensor(&[3, 2, 4], 0.4, seed);
            let m = t.unfold(mode).unwrap();
            let back = PerformanceTensor::fold(&m, mode, t.shape()).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn prop_sparsity_complements_observed(seed in 0u64..200) {
            let t = random_tensor(&[4, 5], 0.5, seed);
            let observed = t.observed_count() as f64 / t.len() as f64;
            prop_assert_eq!(t.sparsity() + observed, 1.0);
        }

        #[test]
        fn prop_standardize_round_trip(seed in 0u64..200) {
            let t = random_tensor(&[3, 4, 2], 0.2, seed);
            let (s, p) = t.standardize(StandardizePolicy::Global).unwrap();
            let back = s.unstandardize(&p).unwrap();
            for (a, b) in back.values().iter().zip(t.values()) {
                let scale = b.abs().max(1.0);
                prop_assert!((a - b).abs() / scale < 1e-12);
            }
        }

        #[test]
        fn prop_masked_rmse_symmetric(seed in 0u64..100) {
            let a = random_tensor(&[3, 3], 0.0, seed);
            let b = random_tensor(&[3, 3], 0.0, seed + 1000);
            let mask = vec![true; 9];
            let ab = PerformanceTensor::masked_rmse(&a, &b, &mask).unwrap();
            let ba = PerformanceTensor::masked_rmse(&b, &a, &mask).unwrap();
            prop_assert_eq!(ab, ba);
        }
    }
}
