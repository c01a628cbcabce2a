use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use qisac::estimate::{
    estimate_expectation, likelihood_peaks, log_likelihood, mle_combined, mle_fast, sample_counts, theta_from_expectations,
    wrap_pi, CountTable, Method, SamplingModel,
};
use qisac::rng::path_rng;
use qisac::states::ObservableKind;

fn circular_mean(a: f64, b: f64) -> f64 {
    (a.sin() + b.sin()).atan2(a.cos() + b.cos()).rem_euclid(TAU)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_counts_sum_to_pairs(theta in 0.0..TAU, n in 1u32..8, pairs in 1u64..2000, seed in any::<u64>()) {
        let model = SamplingModel::split(theta, n, pairs, 0.25);
        let counts = sample_counts(&model, &mut path_rng(seed, &[0])).unwrap();
        prop_assert_eq!(counts.total(), pairs);
        prop_assert_eq!(model.groups.iter().map(|g| g.1).sum::<u64>(), pairs);
    }

    #[test]
    fn expectation_estimate_is_circular_mean(e1 in -1.0..1.0f64, e2 in -1.0..1.0f64) {
        let r = theta_from_expectations(e1, e2, 1);
        prop_assert!((0.0..TAU).contains(&r.theta));
        let (t1, t2) = (r.theta1.unwrap(), r.theta2.unwrap());
        prop_assert!(wrap_pi(r.theta - circular_mean(t1, t2)).abs() < 1e-9);
    }

    #[test]
    fn noiseless_expectations_invert_exactly(theta in 0.0..TAU) {
        prop_assume!(wrap_pi(theta * 2.0).abs() > 1e-6 && (wrap_pi(theta * 2.0) - PI).abs() > 1e-6);
        let r = theta_from_expectations(-theta.cos(), -theta.sin(), 1);
        prop_assert!(wrap_pi(r.theta - theta).abs() < 1e-9);
    }

    #[test]
    fn mle_lies_in_range_and_beats_truth(theta in 0.0..TAU, seed in any::<u64>()) {
        let counts = sample_counts(&SamplingModel::split(theta, 3, 200, 0.5), &mut path_rng(seed, &[1])).unwrap();
        let est = mle_combined(&counts).unwrap();
        prop_assert!((0.0..TAU).contains(&est.theta));
        prop_assert!(log_likelihood(&counts, est.theta) >= log_likelihood(&counts, theta) - 1e-9);
    }
}

#[test]
fn single_observable_counts_are_mirror_ambiguous() {
    let mut counts = CountTable::new();
    counts.add(1, ObservableKind::O1, [0, 0, 120, 380]);
    let peaks = likelihood_peaks(&counts).unwrap();
    assert!(peaks.len() >= 2);
    let est = mle_combined(&counts).unwrap();
    assert!(est.ambiguous);
    assert!(est.theta < PI);
    assert!((peaks[0].theta + peaks[1].theta - TAU).abs() < 1e-6);
}

#[test]
fn five_hundred_pairs_recover_the_figure_phase() {
    let theta = 0.8 * PI;
    let run = |s: u64| {
        let counts = sample_counts(&SamplingModel::single_group(theta, 1, 500), &mut path_rng(s, &[2])).unwrap();
        wrap_pi(mle_combined(&counts).unwrap().theta - theta)
    };
    assert!(run(0).abs() < 3.0 / 500f64.sqrt());
    let rms = ((0..200).map(|s| run(s).powi(2)).sum::<f64>() / 200.0).sqrt();
    assert!(rms < 1.2 / 500f64.sqrt(), "rms {rms}");
}

#[test]
fn fast_search_matches_grid_search() {
    for (s, n) in [(1u64, 2u32), (2, 7), (3, 25), (4, 90)] {
        let theta = 0.3 + s as f64;
        let counts = sample_counts(&SamplingModel::split(theta, n, 800, 0.1), &mut path_rng(s, &[3])).unwrap();
        let a = mle_combined(&counts).unwrap();
        let b = mle_fast(&counts).unwrap();
        assert!(wrap_pi(a.theta - b.theta).abs() < 1e-6, "N={n}: {} vs {}", a.theta, b.theta);
    }
}

#[test]
fn multi_pass_expectation_returns_principal_window() {
    let counts = sample_counts(&SamplingModel::single_group(5.0, 4, 4000), &mut path_rng(5, &[4])).unwrap();
    let est = estimate_expectation(&counts).unwrap();
    assert_eq!(est.method, Method::Expectation);
    assert!(est.theta < TAU / 4.0);
    assert!(wrap_pi(4.0 * (est.theta - 5.0)).abs() < 0.1);
}
