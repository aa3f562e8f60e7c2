//! Acceptance suite: planted-truth recovery, metric hand checks, and the
//! statistical calibration oracles, each printing one pass line.
//!
//! Expected values come from oracles local to this file (explicit index
//! loops, independent mean computation, closed-form decay bounds), never
//! from the code paths under test.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use perften_core::{
    bootstrap_distributions, calibration_error, ci_accuracy, cp_fit, default_levels, ece,
    fit_gbdt, kfold_plan, mean_baseline, percentile_ci, predict_gbdt, rpca_fit, BoostConfig,
    CpConfig, FeatureVector, GrowthStrategy, ModelSpec, PerformanceRecord, PerformanceTensor,
    PredictionDistribution, RpcaConfig,
};

/// Oracle: assemble a tensor entry by entry from explicit rank-1 components.
fn planted_from_factors(shape: &[usize], components: &[Vec<Vec<f64>>]) -> PerformanceTensor {
    let n: usize = shape.iter().product();
    let mut values = vec![0.0; n];
    let strides = {
        let mut s = vec![1usize; shape.len()];
        for d in (0..shape.len() - 1).rev() {
            s[d] = s[d + 1] * shape[d + 1];
        }
        s
    };
    for (flat, value) in values.iter_mut().enumerate() {
        let mut idx = vec![0usize; shape.len()];
        let mut rem = flat;
        for d in 0..shape.len() {
            idx[d] = rem / strides[d];
            rem %= strides[d];
        }
        let mut v = 0.0;
        for vectors in components {
            let mut term = 1.0;
            for (m, vec_m) in vectors.iter().enumerate() {
                term *= vec_m[idx[m]];
            }
            v += term;
        }
        *value = v;
    }
    PerformanceTensor::dense(shape.to_vec(), values).unwrap()
}

fn random_factors(shape: &[usize], rank: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rank)
        .map(|_| {
            shape
                .iter()
                .map(|&len| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect()
}

fn coords(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

#[test]
fn c1_cp_exact_recovery_on_masked_planted_tensor() {
    let start = Instant::now();
    let shape = [5usize, 8, 8, 4];
    let truth = planted_from_factors(&shape, &random_factors(&shape, 3, 21));

    // hide 20% of entries
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mask: Vec<bool> = (0..truth.len()).map(|_| rng.gen_range(0.0..1.0) >= 0.2).collect();
    let masked =
        PerformanceTensor::new(shape.to_vec(), truth.values().to_vec(), mask.clone()).unwrap();
    let hidden: Vec<bool> = mask.iter().map(|&m| !m).collect();
    assert!(hidden.iter().any(|&h| h), "mask hid nothing");

    let cfg = CpConfig { rank: 5, seed: 1, ..CpConfig::default() };
    let fit = cp_fit(&masked, &cfg).unwrap();
    let recon = fit.reconstruct().unwrap();
    let rmse = PerformanceTensor::masked_rmse(&recon, &truth, &hidden).unwrap();
    assert!(rmse < 1e-3, "hidden-entry RMSE {rmse}");

    // bit-identical across two runs
    let again = cp_fit(&masked, &cfg).unwrap();
    assert_eq!(fit.model, again.model, "CP fit not deterministic");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("PASS criterion 1: CP exact recovery (hidden RMSE {rmse:.2e}, {elapsed:?})");
}

#[test]
fn c2_cp_objective_monotone_on_random_masked_tensors() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shapes: [&[usize]; 4] = [&[4, 5, 3], &[6, 4], &[3, 3, 3, 3], &[5, 7]];
    let mut checked = 0usize;
    for case in 0..50 {
        let shape = shapes[case % shapes.len()].to_vec();
        let n: usize = shape.iter().product();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mask_fraction = rng.gen_range(0.0..0.5);
        let mut mask: Vec<bool> =
            (0..n).map(|_| rng.gen_range(0.0..1.0) >= mask_fraction).collect();
        if mask.iter().all(|&m| !m) {
            mask[0] = true;
        }
        let t = PerformanceTensor::new(shape, values, mask).unwrap();
        let cfg = CpConfig {
            rank: 3,
            max_sweeps: 60,
            seed: case as u64,
            ..CpConfig::default()
        };
        let fit = cp_fit(&t, &cfg).unwrap();
        let h = &fit.diagnostics.objective_history;
        for w in h.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9,
                "case {case}: masked objective rose {} -> {}",
                w[0],
                w[1]
            );
        }
        checked += h.len() - 1;
    }
    println!("PASS criterion 2: CP masked objective non-increasing ({checked} sweeps over 50 tensors)");
}

#[test]
fn c3_rpca_recovers_planted_low_rank_under_sparse_spikes() {
    let start = Instant::now();
    let rows = 50;
    let cols = 50;

    // rank-2 ground truth as an explicit product of factors
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a: Vec<f64> = (0..rows * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..2 * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut low = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            low[r * cols + c] = a[r * 2] * b[c] + a[r * 2 + 1] * b[cols + c];
        }
    }
    let mean = low.iter().sum::<f64>() / low.len() as f64;
    let sd =
        (low.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / low.len() as f64).sqrt();

    // 5% of entries corrupted by +-10 standard deviations
    let mut corrupted = low.clone();
    let mut spikes = 0;
    for v in corrupted.iter_mut() {
        if rng.gen_range(0.0..1.0) < 0.05 {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            *v += sign * 10.0 * sd;
            spikes += 1;
        }
    }
    assert!(spikes > 0);

    let t = PerformanceTensor::dense(vec![rows, cols], corrupted).unwrap();
    let cfg = RpcaConfig { mu_growth: 1.1, max_iters: 1000, ..RpcaConfig::default() };
    let fit = rpca_fit(&t, &cfg).unwrap();
    assert!(fit.iterations <= 1000);

    let mut diff_sq = 0.0;
    let mut low_sq = 0.0;
    for (l, v) in fit.decomposition.low_rank.values.iter().zip(&low) {
        diff_sq += (l - v) * (l - v);
        low_sq += v * v;
    }
    let rel = (diff_sq / low_sq).sqrt();
    assert!(rel < 1e-2, "relative Frobenius error {rel}");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "PASS criterion 3: RPCA planted decomposition (rel error {rel:.2e}, {} iters, {elapsed:?})",
        fit.iterations
    );
}

#[test]
fn c4_gbdt_converges_on_separable_categories_within_limits() {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (k, target) in [10.0f64, 20.0, 30.0, 40.0].iter().enumerate() {
        let mut values = vec![0.0; 4];
        values[k] = 1.0;
        x.push(FeatureVector { values });
        y.push(*target);
    }
    // oracle: with isolatable categories and no leaf penalty the residual
    // shrinks by (1 - lr) per round, so 100 rounds leave 15 * 0.9^100
    let decay_bound = 15.0 * 0.9f64.powi(100);
    assert!(decay_bound < 0.05);

    for growth in [GrowthStrategy::LevelWise, GrowthStrategy::LeafWise] {
        let cfg = BoostConfig {
            growth,
            learning_rate: 0.1,
            n_trees: 100,
            l2_leaf_penalty: 0.0,
            ..BoostConfig::level_wise()
        };
        let model = fit_gbdt(&x, &y, &cfg, 0).unwrap();
        let pred = predict_gbdt(&model, &x).unwrap();
        let rmse = (pred
            .iter()
            .zip(&y)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / 4.0)
            .sqrt();
        assert!(rmse < 0.05, "{growth:?} RMSE {rmse}");
        assert!(rmse <= decay_bound * 1.01 + 1e-12, "{growth:?} beat by oracle: {rmse}");
        for tree in &model.trees {
            match growth {
                GrowthStrategy::LevelWise => {
                    assert!(tree.depth() <= 10, "depth {}", tree.depth())
                }
                GrowthStrategy::LeafWise => {
                    assert!(tree.n_leaves() <= 100, "leaves {}", tree.n_leaves())
                }
            }
        }
    }
    println!(
        "PASS criterion 4: GBDT convergence < 0.05 for both growth strategies (bound {decay_bound:.2e})"
    );
}

#[test]
fn c5_baseline_mean_oracle_and_balanced_folds() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..1000 {
        let len = rng.gen_range(1..=50);
        let scores: Vec<f64> = (0..len).map(|_| rng.gen_range(-100.0..100.0)).collect();
        // independent oracle: plain running sum over a reversed pass
        let mut sum = 0.0;
        for &s in scores.iter().rev() {
            sum += s;
        }
        let oracle = sum / len as f64;
        let got = mean_baseline(&scores).unwrap();
        assert!(
            (got - oracle).abs() <= 1e-12,
            "case {case}: {got} vs oracle {oracle}"
        );
    }

    for n in 5..=200usize {
        let plan = kfold_plan(n, 5, n as u64).unwrap();
        assert_eq!(plan.assignment.len(), n);
        let mut sizes = vec![0usize; 5];
        for &f in &plan.assignment {
            assert!(f < 5, "fold index out of range");
            sizes[f] += 1;
        }
        assert_eq!(sizes.iter().sum::<usize>(), n, "not a disjoint cover");
        let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
        assert!(spread <= 1, "n={n}: unbalanced {sizes:?}");
    }
    println!("PASS criterion 5: baseline mean oracle (1000 inputs) and balanced 5-fold covers (n=5..200)");
}

#[test]
fn c6_bootstrap_interval_covers_true_mean() {
    let start = Instant::now();
    let mu = 70.0;
    let sigma = 5.0;
    let n_train = 40;
    let trials = 200;
    let k = 200;

    let dim_order = vec!["unit".to_string(), "d".to_string()];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let normal = Normal::new(mu, sigma).unwrap();
    let mut covered = 0usize;
    for trial in 0..trials {
        let train: Vec<PerformanceRecord> = (0..n_train)
            .map(|i| {
                PerformanceRecord::new(
                    coords(&[("unit", format!("u{i}")), ("d", "d0".to_string())]),
                    None,
                    normal.sample(&mut rng),
                )
                .unwrap()
            })
            .collect();
        let test = vec![PerformanceRecord::new(
            coords(&[("unit", "query".to_string()), ("d", "d0".to_string())]),
            None,
            mu,
        )
        .unwrap()];
        let dists = bootstrap_distributions(
            &train,
            &ModelSpec::Baseline,
            &test,
            k,
            1000 + trial as u64,
            &dim_order,
        )
        .unwrap();
        let ci = percentile_ci(&dists[0], 0.95).unwrap();
        if ci.lower < mu && mu < ci.upper {
            covered += 1;
        }
    }
    let coverage = covered as f64 / trials as f64;
    assert!(
        (0.85..=0.99).contains(&coverage),
        "coverage {coverage} outside [0.85, 0.99]"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("PASS criterion 6: bootstrap 95% interval coverage {coverage:.3} over {trials} trials ({elapsed:?})");
}

#[test]
fn c7_calibration_oracle_diagonal_and_overconfidence_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(702);
    let noise = Normal::new(0.0, 0.35).unwrap();
    let n = 500;
    let k = 2000;
    let mut dists = Vec::with_capacity(n);
    let mut actuals = Vec::with_capacity(n);
    for i in 0..n {
        let mu = rng.gen_range(-3.0..3.0);
        actuals.push(mu + noise.sample(&mut rng));
        let samples: Vec<f64> = (0..k).map(|_| mu + noise.sample(&mut rng)).collect();
        dists.push(PredictionDistribution::new(i, samples).unwrap());
    }
    let levels = default_levels();
    assert_eq!(levels.len(), 20);
    let report = calibration_error(&actuals, &dists, &levels).unwrap();
    let mut worst: f64 = 0.0;
    for (gamma, acc) in levels.iter().zip(&report.acc_per_level) {
        let gap = (acc - gamma).abs();
        worst = worst.max(gap);
        assert!(gap < 0.05, "acc({gamma}) = {acc}: gap {gap}");
    }
    assert!(report.ce < 1.0, "CE {}", report.ce);

    // tenfold-shrunk distributions must sit below the diagonal
    let shrunk: Vec<PredictionDistribution> = dists
        .iter()
        .map(|d| {
            let mean = d.samples.iter().sum::<f64>() / d.samples.len() as f64;
            let samples = d.samples.iter().map(|s| mean + (s - mean) / 10.0).collect();
            PredictionDistribution::new(d.test_point, samples).unwrap()
        })
        .collect();
    let shrunk_report = calibration_error(&actuals, &shrunk, &levels).unwrap();
    for (gamma, acc) in levels.iter().zip(&shrunk_report.acc_per_level) {
        if *gamma <= 0.95 {
            assert!(acc < gamma, "shrunk acc({gamma}) = {acc} not below diagonal");
        }
    }
    println!(
        "PASS criterion 7: calibration oracle on-diagonal (worst gap {worst:.3}, CE {:.3}); shrunk intervals over-confident",
        report.ce
    );
}

#[test]
fn c8_metric_hand_checks_exact() {
    // ci_accuracy = 2/3 on a three-point construction
    let dists = vec![
        PredictionDistribution::new(0, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
        PredictionDistribution::new(1, vec![10.0, 11.0, 12.0, 13.0, 14.0]).unwrap(),
        PredictionDistribution::new(2, vec![0.0, 0.1, 0.2, 0.3, 0.4]).unwrap(),
    ];
    let actuals = [3.0, 12.0, 9.0];
    let acc = ci_accuracy(&actuals, &dists, 0.8).unwrap();
    assert!((acc - 2.0 / 3.0).abs() <= 1e-12, "acc {acc}");

    // ECE = 0.4 on two samples with confidence 0.9, one correct
    let e = ece(&[0.9, 0.9], &[true, false], 10).unwrap();
    assert!((e - 0.4).abs() <= 1e-12, "ece {e}");

    // CE = 0.5 on levels {0.5, 1.0} with accuracies {0.25, 0.75}
    let four = vec![
        PredictionDistribution::new(0, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap(),
        PredictionDistribution::new(1, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap(),
        PredictionDistribution::new(2, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap(),
        PredictionDistribution::new(3, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap(),
    ];
    // middle-0.5 interval is (1, 3); full range is (0, 4)
    let ys = [2.0, 3.5, 3.9, 7.0];
    let report = calibration_error(&ys, &four, &[0.5, 1.0]).unwrap();
    assert_eq!(report.acc_per_level, vec![0.25, 0.75]);
    assert!((report.ce - 0.5).abs() <= 1e-12, "CE {}", report.ce);

    // average width and coverage on a three-distribution fixture:
    // widths 4, 4, 0.4 -> mean 2.8; coverage: 3 in (1,5), 12 in (10,14),
    // 9 outside (0, 0.4) -> 2/3
    let fixture_report = calibration_error(&actuals, &dists, &default_levels()).unwrap();
    assert!((fixture_report.average_width - 2.8).abs() <= 1e-12);
    assert!((fixture_report.coverage - 2.0 / 3.0).abs() <= 1e-12);

    println!("PASS criterion 8: metric hand checks exact (acc 2/3, ECE 0.4, CE 0.5, width 2.8, coverage 2/3)");
}
