//! Acceptance run: one check per headline property, one PASS/FAIL line each.
//! Exits nonzero if any check fails.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use qisac::channel::{sample_check_pair, Adversary, Basis, Link, NoiseModel};
use qisac::commands::{scan_theta_grid, BiasTask, PrecisionTask};
use qisac::estimate::{
    likelihood_peaks, mle_combined, optimal_n_scan, sample_counts, wrap_pi, Estimator, SamplingModel, ScanConfig,
};
use qisac::metrics::{
    detection_probability, fisher_crossing, fisher_eve_numeric, h, holevo_eve, qfi, qisac_threshold,
    twostep_threshold, DetectionKind,
};
use qisac::qlin::CMat;
use qisac::rng::{path_rng, stream_rng};
use qisac::states::mixed_probe;
use rand::Rng;

struct Check {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> (bool, String),
}

fn qfi_identity() -> (bool, String) {
    let mut worst = 0.0f64;
    for n in [1u32, 2, 4] {
        for k in 0..16 {
            let theta = TAU * k as f64 / 16.0 + 0.05;
            let f = qfi(|t| Ok(mixed_probe(n, t)), theta).expect("qfi");
            let expect = (n * n) as f64;
            worst = worst.max((f - expect).abs() / expect);
        }
    }
    (worst < 1e-6, format!("max relative error {worst:.2e}"))
}

fn capacity_thresholds() -> (bool, String) {
    let a = qisac_threshold().expect("root");
    let b = twostep_threshold().expect("root");
    let ok = (0.0775..=0.0805).contains(&a) && (0.084..=0.088).contains(&b);
    (ok, format!("integrated {a:.6}, two-step {b:.6}"))
}

fn fisher_crossings() -> (bool, String) {
    let roots: Vec<f64> = [1u32, 3].iter().map(|&n| fisher_crossing(n).expect("root")).collect();
    let ok = roots.iter().all(|r| (0.082..=0.084).contains(r));
    (ok, format!("N=1 {:.6}, N=3 {:.6}", roots[0], roots[1]))
}

fn theta_grid8() -> Vec<f64> {
    (0..8).map(|k| TAU * k as f64 / 8.0 + 0.1).collect()
}

fn holevo_tightness() -> (bool, String) {
    let mut worst = 0.0f64;
    for e in [0.02, 0.05, 0.10, 0.15] {
        for n in [1u32, 4] {
            for &t in &theta_grid8() {
                let chi = holevo_eve(e, n, t).expect("holevo");
                worst = worst.max((chi - h(e).unwrap()).abs());
            }
        }
    }
    (worst < 1e-6, format!("max |chi - h(e)| {worst:.2e}"))
}

fn eve_qfi_closed_form() -> (bool, String) {
    let mut worst = 0.0f64;
    for e in [0.02f64, 0.05, 0.10, 0.15] {
        for n in [1u32, 4] {
            let closed = (n * n) as f64 * (3.0 * e - 4.0 * e * e) / (1.0 - e);
            for &t in &theta_grid8() {
                let f = fisher_eve_numeric(e, n, t).expect("qfi");
                worst = worst.max((f - closed).abs() / closed);
            }
        }
    }
    (worst < 1e-5, format!("max relative error {worst:.2e}"))
}

fn variance_saturation() -> (bool, String) {
    let task = PrecisionTask {
        p_e: 0.8,
        m: 5000,
        n: 1,
        theta_true: 1.0,
        repeats: 1000,
        estimator: Estimator::Expectation,
        ..PrecisionTask::default()
    };
    let (_, s) = task.study().expect("study");
    let target = 1.0 / (0.8 * 5000.0);
    let rel = (s.variance - target) / target;
    (rel.abs() <= 0.15, format!("variance {:.4e} vs {target:.4e} ({:+.1}%)", s.variance, 100.0 * rel))
}

fn headline_precision() -> (bool, String) {
    let (_, s) = PrecisionTask::default().study().expect("study");
    (
        s.std <= 0.0012,
        format!(
            "std {:.6} rad over {} runs (split bound {:.6}, all-N bound {:.6})",
            s.std, s.repeats, s.split_bound, s.heisenberg_bound
        ),
    )
}

fn near_axis(theta: f64) -> bool {
    let q = PI / 2.0;
    let d = theta - q * (theta / q).round();
    d.abs() < 0.1
}

fn bias_property() -> (bool, String) {
    let task = BiasTask {
        pairs: vec![100, 500, 1000, 2000],
        repeats: 1000,
        n: 1,
        points: 64,
        estimator: Estimator::Expectation,
        ..BiasTask::default()
    };
    let rows = task.rows().expect("bias");
    let mut ok = true;
    let mut parts = Vec::new();
    for nu in &task.pairs {
        let kept: Vec<_> = rows.iter().filter(|r| r.pairs == *nu && !near_axis(r.theta)).collect();
        let below = kept.iter().filter(|r| r.bias.abs() < 1.0 / (*nu as f64).sqrt()).count();
        let frac = below as f64 / kept.len() as f64;
        ok &= frac >= 0.9;
        parts.push(format!("{nu}: {below}/{}", kept.len()));
    }
    (ok, parts.join(", "))
}

fn ambiguity_resolution() -> (bool, String) {
    let trials = 200;
    let tol = 3.0 / (140.0f64 * 16.0).sqrt();
    let mut hits = 0;
    let mut ambiguous_multi = 0;
    for t in 0..trials {
        let mut rng = path_rng(42, &[9, t]);
        let theta = rng.random::<f64>() * TAU;
        let counts = sample_counts(&SamplingModel::split(theta, 4, 140, 0.5), &mut rng).expect("counts");
        let est = mle_combined(&counts).expect("mle");
        if wrap_pi(est.theta - theta).abs() <= tol {
            hits += 1;
        }
        if likelihood_peaks(&counts.only(4)).expect("peaks").len() >= 2 {
            ambiguous_multi += 1;
        }
    }
    let rate = hits as f64 / trials as f64;
    (
        rate >= 0.95 && ambiguous_multi == trials,
        format!("within {tol:.4} rad in {hits}/{trials}; multi-pass alone ambiguous in {ambiguous_multi}/{trials}"),
    )
}

fn double_cnot_signature() -> (bool, String) {
    let link = Link::new(NoiseModel::noiseless(), Adversary::DoubleCnot);
    let rho = link.first_pass_ab(true).expect("state");
    let mut expect = CMat::zeros(4, 4);
    expect[(1, 1)] = 0.5.into();
    expect[(2, 2)] = 0.5.into();
    let exact = rho.max_abs_diff(&expect);

    let samples = 100_000;
    let mut rng = stream_rng(42, 10);
    let mut hist = [0usize; 4];
    for _ in 0..samples {
        let (a, b) = sample_check_pair(Adversary::DoubleCnot, Basis::X, &mut rng).expect("sample");
        hist[2 * usize::from(a < 0) + usize::from(b < 0)] += 1;
    }
    let se = (0.25f64 * 0.75 / samples as f64).sqrt();
    let worst_dev = hist
        .iter()
        .map(|&c| (c as f64 / samples as f64 - 0.25).abs() / se)
        .fold(0.0, f64::max);
    let mut z_errors = 0;
    for _ in 0..samples {
        let (a, b) = sample_check_pair(Adversary::DoubleCnot, Basis::Z, &mut rng).expect("sample");
        if a == b {
            z_errors += 1;
        }
    }
    (
        exact < 1e-12 && worst_dev < 3.0 && z_errors == 0,
        format!("state error {exact:.1e}; x-basis max deviation {worst_dev:.2} SE; z-basis errors {z_errors}"),
    )
}

fn detection_closed_forms() -> (bool, String) {
    let (m, k) = (320usize, 32usize);
    let mut worst = 0.0f64;
    let mut min_low = 1.0f64;
    for i in 0..=100 {
        let p_e = i as f64 / 100.0;
        let base = (5.0 + p_e) / 6.0;
        let d1 = detection_probability(DetectionKind::DoubleCnot { m }, p_e).unwrap();
        let d2 = detection_probability(DetectionKind::Mitm { k }, p_e).unwrap();
        worst = worst
            .max((d1 - (1.0 - base.powf((1.0 - p_e) * m as f64 / 2.0))).abs())
            .max((d2 - (1.0 - base.powi(k as i32))).abs());
        if p_e <= 0.6 + 1e-12 {
            min_low = min_low.min(d1);
        }
    }
    let spot1 = detection_probability(DetectionKind::DoubleCnot { m }, 0.6).unwrap();
    let spot2 = detection_probability(DetectionKind::Mitm { k }, 0.5).unwrap();
    let spots = (spot1 - 0.987912).abs() < 5e-7 && (spot2 - 0.938232).abs() < 5e-7;
    (
        worst < 1e-14 && min_low >= 0.98 && spots,
        format!("closed-form deviation {worst:.1e}; min P_det1 on p_e <= 0.6 is {min_low:.6}"),
    )
}

fn optimal_n_shape() -> (bool, String) {
    let small: Vec<u32> = (1..=30).collect();
    let large: Vec<u32> = (200..=400).step_by(10).collect();
    let cfg = ScanConfig::new(
        800,
        small.iter().chain(&large).copied().collect(),
        scan_theta_grid(16),
        64,
    );
    let r = optimal_n_scan(&cfg).expect("scan");
    let mean = |sel: &[u32]| {
        let v: Vec<f64> = r.per_n.iter().filter(|(n, _)| sel.contains(n)).map(|&(_, b)| b).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let low = mean(&small);
    let plateau = mean(&large);
    let rel = (plateau - r.single_pass_level).abs() / r.single_pass_level;
    (
        low < plateau && rel <= 0.2,
        format!(
            "N<=30 {low:.5}, plateau {plateau:.5}, single-pass {:.5} ({:.1}% apart), best N {}",
            r.single_pass_level,
            100.0 * rel,
            r.best_n
        ),
    )
}

fn main() -> ExitCode {
    let checks = [
        Check { id: 1, name: "QFI of the mixed probe equals N^2", limit: Duration::from_secs(5), run: qfi_identity },
        Check { id: 2, name: "secrecy-capacity thresholds", limit: Duration::from_secs(1), run: capacity_thresholds },
        Check { id: 3, name: "Fisher crossing independent of N", limit: Duration::from_secs(1), run: fisher_crossings },
        Check { id: 4, name: "Holevo bound equals h(e)", limit: Duration::from_secs(10), run: holevo_tightness },
        Check { id: 5, name: "Eve QFI closed form", limit: Duration::from_secs(10), run: eve_qfi_closed_form },
        Check { id: 6, name: "expectation-estimator variance saturation", limit: Duration::from_secs(30), run: variance_saturation },
        Check { id: 7, name: "headline precision at N = 4", limit: Duration::from_secs(180), run: headline_precision },
        Check { id: 8, name: "bias below 1/sqrt(nu)", limit: Duration::from_secs(300), run: bias_property },
        Check { id: 9, name: "single/multi-pass ambiguity resolution", limit: Duration::from_secs(120), run: ambiguity_resolution },
        Check { id: 10, name: "double-CNOT signature", limit: Duration::from_secs(10), run: double_cnot_signature },
        Check { id: 11, name: "detection closed forms", limit: Duration::from_secs(1), run: detection_closed_forms },
        Check { id: 12, name: "optimal-N scan shape", limit: Duration::from_secs(600), run: optimal_n_shape },
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut out = std::io::stdout().lock();
    let mut failed = 0;
    for c in checks.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let (ok, detail) = (c.run)();
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.limit;
        let pass = ok && in_time;
        if !pass {
            failed += 1;
        }
        writeln!(
            out,
            "[{:>2}] {} {} | {} | {:.2}s of {}s{}",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.name,
            detail,
            elapsed.as_secs_f64(),
            c.limit.as_secs(),
            if in_time { "" } else { " (over time)" }
        )
        .unwrap();
    }
    writeln!(out, "acceptance: {failed} failing").unwrap();
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
