use std::f64::consts::PI;

use ecapprox::covariance::{CovarianceModel, CovarianceSpec};
use ecapprox::ec_heuristic::Shape;
use ecapprox::experiment::{
    level_sums, paired_diff, validate_theorem, ConfiguredSampler, ExperimentConfig,
    ExperimentError, PairedDiffEstimate,
};
use ecapprox::field_sim::{sample, GridSampler1D};

fn se_config(levels: Vec<f64>, n_paths: usize) -> ExperimentConfig {
    let spec = CovarianceSpec {
        family: "squared_exponential".into(),
        params: vec![1.0],
        normalize: false,
    };
    ExperimentConfig::new(spec, Shape::Interval { length: 5.0 }, levels, n_paths)
}

#[test]
fn pairing_identity_and_monotone_coupling() {
    let config = se_config(vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0], 20_000);
    let run = paired_diff(&config).unwrap();
    for e in &run.estimates {
        assert!(
            (e.ec_mean - e.tail_est - e.diff_mean).abs() <= 1e-15,
            "{e:?}"
        );
        assert!(e.diff_mean >= 0.0);
        assert_eq!(e.n, 20_000);
    }
    for w in run.estimates.windows(2) {
        assert!(w[1].tail_est <= w[0].tail_est);
    }
    assert_eq!(run.sign_violations(), 0);
}

#[test]
fn levels_far_above_every_path_are_exactly_zero() {
    let config = se_config(vec![2.0, 50.0], 10_000);
    let run = paired_diff(&config).unwrap();
    let top = run.estimates[1];
    assert_eq!(
        (top.diff_mean, top.diff_se, top.ec_mean, top.tail_est),
        (0.0, 0.0, 0.0, 0.0)
    );
}

#[test]
fn whole_interval_below_level_has_ec_one() {
    let sampler = GridSampler1D::build(
        &CovarianceModel::squared_exponential(1.0).unwrap(),
        5.0,
        1024,
        4,
    )
    .unwrap();
    let sums = level_sums(&sampler, &[-10.0], 10_000, 1);
    assert_eq!(sums[0].ec_mean_se(), (1.0, 0.0));
    let config = se_config(vec![1.0], 10_000);
    let formula = ecapprox::experiment::formula_value(&config, -10.0).unwrap();
    assert!((formula - 1.0).abs() < 1e-15, "{formula}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let sampler = GridSampler1D::build(
        &CovarianceModel::squared_exponential(1.0).unwrap(),
        5.0,
        1024,
        4,
    )
    .unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| level_sums(&sampler, &[1.0, 2.0], 3000, 17))
    };
    assert_eq!(run(1), run(3));
}

/// Empirical `Cov(f(0), f(t))` against `R(t)` at 8 lags, within 4 standard errors.
#[test]
fn simulated_covariance_matches_model() {
    let model = CovarianceModel::squared_exponential(1.0).unwrap();
    let sampler = GridSampler1D::build(&model, 5.0, 1024, 4).unwrap();
    let lags = [0usize, 20, 60, 100, 205, 300, 500, 1023];
    let n = 100_000;
    let mut sum = vec![0.0; lags.len()];
    let mut sum_sq = vec![0.0; lags.len()];
    for r in sample(&sampler, n, 99) {
        for (k, lag) in lags.iter().enumerate() {
            let p = r.values[0] * r.values[*lag];
            sum[k] += p;
            sum_sq[k] += p * p;
        }
    }
    for (k, lag) in lags.iter().enumerate() {
        let mean = sum[k] / n as f64;
        let se = ((sum_sq[k] / n as f64 - mean * mean) / n as f64).sqrt();
        let target = model.evaluate(*lag as f64 * sampler.spacing());
        assert!(
            (mean - target).abs() <= 4.0 * se,
            "lag {lag}: {mean} vs {target} (se {se})"
        );
    }
}

#[test]
fn rescaling_leaves_paired_estimates_unchanged_up_to_rounding() {
    let base = se_config(vec![1.0, 1.5, 2.0], 10_000);
    let mut scaled = base.clone();
    scaled.covariance.params = vec![3.0];
    scaled.space = Shape::Interval { length: 15.0 };
    let a = paired_diff(&base).unwrap().estimates;
    let b = paired_diff(&scaled).unwrap().estimates;
    for (x, y) in a.iter().zip(&b) {
        let se = x.diff_se.max(y.diff_se).max(1e-12);
        assert!((x.diff_mean - y.diff_mean).abs() <= 3.0 * se, "{x:?} {y:?}");
    }
    let (ra, rb) = (validate_sigma(&base), validate_sigma(&scaled));
    assert!((ra - rb).abs() < 1e-12);
}

fn validate_sigma(config: &ExperimentConfig) -> f64 {
    ecapprox::experiment::sigma_for_config(config)
        .unwrap()
        .sigma_c_sq
}

/// At `u = 2` on `[0, 5]` the paired difference is resolved well above noise with 10^6 paths.
#[test]
fn squared_exponential_difference_is_resolved() {
    let mut config = se_config(vec![2.0], 1_000_000);
    config.master_seed = 4;
    let e: PairedDiffEstimate = paired_diff(&config).unwrap().estimates[0];
    assert!(e.diff_mean > 3.0 * e.diff_se, "{e:?}");
    // a second upcrossing before T = 5 at level 2 is rare: well below the tail itself
    assert!(e.diff_mean < 0.1 * e.tail_est, "{e:?}");
}

#[test]
fn insufficient_signal_reports_largest_usable_level() {
    let config = se_config(vec![1.0, 3.5, 4.0, 4.5], 10_000);
    match validate_theorem(&config) {
        Err(ExperimentError::InsufficientSignal {
            qualifying,
            largest_usable_u,
            ..
        }) => {
            assert!(qualifying < 3);
            assert_eq!(largest_usable_u, Some(1.0));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn cosine_process_has_no_discrepancy() {
    let spec = CovarianceSpec {
        family: "cosine".into(),
        params: vec![1.0, 1.0],
        normalize: false,
    };
    let mut config = ExperimentConfig::new(
        spec,
        Shape::Interval { length: PI },
        vec![0.5, 1.0, 2.0],
        20_000,
    );
    config.pad_factor = 2;
    let report = validate_theorem(&config).unwrap();
    assert!(report.verdict);
    assert!(report.fit.is_none());
    assert!(report
        .estimates
        .iter()
        .all(|e| e.diff_mean == 0.0 && e.diff_se == 0.0));
    assert!(report.bound.is_infinite());
}

#[test]
fn two_dimensional_differences_are_signed() {
    let spec = CovarianceSpec {
        family: "se".into(),
        params: vec![0.2],
        normalize: false,
    };
    let mut config = ExperimentConfig::new(
        spec,
        Shape::Box {
            sides: vec![1.0, 1.0],
        },
        vec![1.0],
        10_000,
    );
    config.n_grid = 64;
    config.n_grid_y = 64;
    let sampler = ConfiguredSampler::build(&config).unwrap();
    assert_eq!(sampler.dimension(), 2);
    // below the mean the excursion set has holes on most paths, so chi - 1{sup >= u} < 0 often
    let sums = sampler.level_sums(&[-1.5], 2000, 3);
    let (mean, se) = sums[0].diff_mean_se();
    assert!(mean + 3.0 * se < 0.0, "{mean} +/- {se}");
    assert!(sums[0].negative_diff > 0);
}
