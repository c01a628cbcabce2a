//! Phase estimation from detector counts: the two-observable expectation
//! estimator, likelihood maximization over combined pass groups, and the
//! Monte-Carlo drivers behind the bias and optimal-N studies.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{Link, NoiseModel};
use crate::error::{Error, Result};
use crate::rng::path_rng;
use crate::states::{detector_distribution, encode_and_sense, ObservableKind};

/// Grid size of the exhaustive likelihood search over `[0, 2π)`.
pub const GRID_POINTS: usize = 100_000;
/// Floor applied inside logarithms.
pub const EPS_FLOOR: f64 = 1e-12;
/// Golden-section tolerance on θ.
pub const REFINE_TOL: f64 = 1e-9;
/// Peaks within this many log-likelihood units of the best are near-degenerate.
pub const AMBIGUITY_LOGLIK: f64 = 0.5;
/// Most peaks refined individually.
const MAX_REFINED: usize = 16;
/// φ-grid of the fast search.
const FAST_GRID: usize = 4096;

/// Floor that forgives binary round-off, so `0.2 · 5000 / 2` gives 500.
pub fn floor_count(x: f64) -> usize {
    (x + 1e-9).floor() as usize
}

/// Wraps an angle difference to `(−π, π]`.
pub fn wrap_pi(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Reduces an angle to `[0, 2π)`.
pub fn wrap_2pi(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Detector counts of one pass group, per observable, detectors 1..4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupCounts {
    pub n_passes: u32,
    pub o1: [u64; 4],
    pub o2: [u64; 4],
}

impl GroupCounts {
    pub fn new(n_passes: u32) -> Self {
        Self {
            n_passes,
            ..Self::default()
        }
    }

    pub fn get(&self, which: ObservableKind) -> &[u64; 4] {
        match which {
            ObservableKind::O1 => &self.o1,
            ObservableKind::O2 => &self.o2,
        }
    }

    pub fn get_mut(&mut self, which: ObservableKind) -> &mut [u64; 4] {
        match which {
            ObservableKind::O1 => &mut self.o1,
            ObservableKind::O2 => &mut self.o2,
        }
    }

    pub fn total(&self) -> u64 {
        self.o1.iter().chain(&self.o2).sum()
    }

    /// Outcome classes `(1 + cos, 1 − cos, 1 + sin, 1 − sin)`.
    pub fn classes(&self) -> [u64; 4] {
        [
            self.o1[0] + self.o1[3],
            self.o1[1] + self.o1[2],
            self.o2[0] + self.o2[2],
            self.o2[1] + self.o2[3],
        ]
    }
}

/// Counts for every pass group, kept sorted by pass count.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountTable {
    groups: Vec<GroupCounts>,
}

impl CountTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn groups(&self) -> &[GroupCounts] {
        &self.groups
    }

    pub fn group(&self, n_passes: u32) -> Option<&GroupCounts> {
        self.groups.iter().find(|g| g.n_passes == n_passes)
    }

    fn group_mut(&mut self, n_passes: u32) -> &mut GroupCounts {
        let pos = match self.groups.binary_search_by_key(&n_passes, |g| g.n_passes) {
            Ok(i) => i,
            Err(i) => {
                self.groups.insert(i, GroupCounts::new(n_passes));
                i
            }
        };
        &mut self.groups[pos]
    }

    /// Records one click of `detector` (1..4).
    pub fn record(&mut self, n_passes: u32, which: ObservableKind, detector: u8) {
        assert!((1..=4).contains(&detector), "detector index out of range");
        self.group_mut(n_passes).get_mut(which)[detector as usize - 1] += 1;
    }

    pub fn add(&mut self, n_passes: u32, which: ObservableKind, counts: [u64; 4]) {
        let g = self.group_mut(n_passes).get_mut(which);
        for (a, b) in g.iter_mut().zip(counts) {
            *a += b;
        }
    }

    pub fn merge(&mut self, other: &CountTable) {
        for g in &other.groups {
            self.add(g.n_passes, ObservableKind::O1, g.o1);
            self.add(g.n_passes, ObservableKind::O2, g.o2);
        }
    }

    pub fn total(&self) -> u64 {
        self.groups.iter().map(GroupCounts::total).sum()
    }

    /// Table restricted to one pass group.
    pub fn only(&self, n_passes: u32) -> CountTable {
        CountTable {
            groups: self.group(n_passes).into_iter().copied().collect(),
        }
    }

    /// Table with one observable's counts zeroed.
    pub fn only_observable(&self, which: ObservableKind) -> CountTable {
        let mut out = self.clone();
        for g in &mut out.groups {
            let other = match which {
                ObservableKind::O1 => ObservableKind::O2,
                ObservableKind::O2 => ObservableKind::O1,
            };
            *g.get_mut(other) = [0; 4];
        }
        out
    }

    pub fn max_passes(&self) -> Option<u32> {
        self.groups.iter().filter(|g| g.total() > 0).map(|g| g.n_passes).max()
    }
}

/// Empirical `(⟨O1⟩, ⟨O2⟩)` for one pass group, clamped to `[−1, 1]`.
pub fn expectations_from_counts(counts: &CountTable, n_passes: u32) -> Result<(f64, f64)> {
    let g = counts
        .group(n_passes)
        .ok_or(Error::InsufficientData("no counts for this pass group"))?;
    let c = g.classes();
    let t1 = c[0] + c[1];
    let t2 = c[2] + c[3];
    if t1 == 0 || t2 == 0 {
        return Err(Error::InsufficientData("an observable has no counts"));
    }
    let e1 = (c[1] as f64 - c[0] as f64) / t1 as f64;
    let e2 = (c[3] as f64 - c[2] as f64) / t2 as f64;
    Ok((e1.clamp(-1.0, 1.0), e2.clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Expectation,
    Mle,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    /// In `[0, 2π)`; for the expectation estimator with `N > 1`, in `[0, 2π/N)`.
    pub theta: f64,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub method: Method,
    pub grid_resolution: Option<f64>,
    pub loglik_at_max: Option<f64>,
    /// Several near-degenerate likelihood maxima were found.
    pub ambiguous: bool,
    pub peaks: usize,
}

/// Inverts `⟨O1⟩ = −cos Nθ`, `⟨O2⟩ = −sin Nθ`, placing both single-observable
/// solutions on the quadrant of `(−E1, −E2)` and taking their circular mean.
pub fn theta_from_expectations(e1: f64, e2: f64, n_passes: u32) -> EstimationResult {
    let c = (-e1).clamp(-1.0, 1.0);
    let s = (-e2).clamp(-1.0, 1.0);
    let phi1 = if s >= 0.0 { c.acos() } else { TAU - c.acos() };
    let phi2 = if c >= 0.0 {
        wrap_2pi(s.asin())
    } else {
        PI - s.asin()
    };
    let mean = wrap_2pi((phi1.sin() + phi2.sin()).atan2(phi1.cos() + phi2.cos()));
    let n = n_passes.max(1) as f64;
    EstimationResult {
        theta: mean / n,
        theta1: Some(wrap_2pi(phi1) / n),
        theta2: Some(phi2 / n),
        method: Method::Expectation,
        grid_resolution: None,
        loglik_at_max: None,
        ambiguous: false,
        peaks: 1,
    }
}

/// Expectation estimator on the largest pass group with data.
pub fn estimate_expectation(counts: &CountTable) -> Result<EstimationResult> {
    let n = counts
        .max_passes()
        .ok_or(Error::InsufficientData("empty count table"))?;
    let (e1, e2) = expectations_from_counts(counts, n)?;
    Ok(theta_from_expectations(e1, e2, n))
}

fn floored_ln(x: f64) -> f64 {
    x.max(EPS_FLOOR).ln()
}

#[derive(Debug, Clone, Copy)]
struct Group {
    n: f64,
    k: [f64; 4],
}

/// Pre-digested count table with a contrast factor.
#[derive(Debug, Clone)]
struct Likelihood {
    groups: Vec<Group>,
    v: f64,
}

impl Likelihood {
    fn new(counts: &CountTable, v: f64) -> Self {
        Self {
            groups: counts
                .groups()
                .iter()
                .filter(|g| g.total() > 0)
                .map(|g| Group {
                    n: g.n_passes as f64,
                    k: g.classes().map(|x| x as f64),
                })
                .collect(),
            v,
        }
    }

    fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    fn group_term(&self, g: &Group, c: f64, s: f64) -> f64 {
        let v = self.v;
        let mut acc = 0.0;
        if g.k[0] > 0.0 {
            acc += g.k[0] * floored_ln(1.0 + v * c);
        }
        if g.k[1] > 0.0 {
            acc += g.k[1] * floored_ln(1.0 - v * c);
        }
        if g.k[2] > 0.0 {
            acc += g.k[2] * floored_ln(1.0 + v * s);
        }
        if g.k[3] > 0.0 {
            acc += g.k[3] * floored_ln(1.0 - v * s);
        }
        acc
    }

    fn eval(&self, theta: f64) -> f64 {
        self.groups
            .iter()
            .map(|g| {
                let (s, c) = (g.n * theta).sin_cos();
                self.group_term(g, c, s)
            })
            .sum()
    }

    fn score(&self, theta: f64) -> f64 {
        let v = self.v;
        let ratio = |k: f64, num: f64, den: f64| {
            if k == 0.0 || den <= EPS_FLOOR {
                0.0
            } else {
                k * num / den
            }
        };
        self.groups
            .iter()
            .map(|g| {
                let (s, c) = (g.n * theta).sin_cos();
                let d_cos = -g.n * v * s;
                let d_sin = g.n * v * c;
                ratio(g.k[0], d_cos, 1.0 + v * c) - ratio(g.k[1], d_cos, 1.0 - v * c)
                    + ratio(g.k[2], d_sin, 1.0 + v * s)
                    - ratio(g.k[3], d_sin, 1.0 - v * s)
            })
            .sum()
    }

    /// Values on the uniform grid `θₖ = 2πk/points`, using a rotation
    /// recurrence for the trigonometric factors.
    fn grid(&self, points: usize) -> Vec<f64> {
        let mut out = vec![0.0; points];
        let step = TAU / points as f64;
        for g in &self.groups {
            let (ws, wc) = (g.n * step).sin_cos();
            let (mut c, mut s) = (1.0f64, 0.0f64);
            for (k, slot) in out.iter_mut().enumerate() {
                if k % 1024 == 0 {
                    (s, c) = (g.n * step * k as f64).sin_cos();
                }
                *slot += self.group_term(g, c, s);
                (c, s) = (c * wc - s * ws, s * wc + c * ws);
            }
        }
        out
    }

    fn golden_max(&self, lo: f64, hi: f64) -> (f64, f64) {
        golden_section(|t| self.eval(t), lo, hi, REFINE_TOL)
    }
}

/// Maximizes a function on `[lo, hi]` by golden-section search.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    let candidates = [(a, f(a)), (x1, f1), (x2, f2), (b, f(b))];
    candidates
        .into_iter()
        .fold((lo, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
}

/// `Σ n log(1 ± cos Nθ) + n log(1 ± sin Nθ)` over all pass groups, with the
/// argument of each logarithm floored at `EPS_FLOOR`.
pub fn log_likelihood(counts: &CountTable, theta: f64) -> f64 {
    Likelihood::new(counts, 1.0).eval(theta)
}

/// Likelihood with outcome contrast `v` (`1 ± v cos Nθ`, `1 ± v sin Nθ`).
pub fn log_likelihood_with_visibility(counts: &CountTable, theta: f64, v: f64) -> f64 {
    Likelihood::new(counts, v).eval(theta)
}

/// Analytic `∂θ log_likelihood`.
pub fn score(counts: &CountTable, theta: f64) -> f64 {
    Likelihood::new(counts, 1.0).score(theta)
}

/// A refined local maximum of the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub theta: f64,
    pub loglik: f64,
}

fn grid_local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    (0..n)
        .filter(|&k| {
            let prev = values[(k + n - 1) % n];
            let next = values[(k + 1) % n];
            values[k] > prev && values[k] >= next
        })
        .collect()
}

fn refined_peaks(lik: &Likelihood) -> Result<(Vec<Peak>, usize)> {
    if lik.is_empty() {
        return Err(Error::InsufficientData("no counts"));
    }
    let values = lik.grid(GRID_POINTS);
    let step = TAU / GRID_POINTS as f64;
    let mut maxima = grid_local_maxima(&values);
    if maxima.is_empty() {
        return Err(Error::InsufficientData("likelihood is flat"));
    }
    let best = maxima.iter().map(|&k| values[k]).fold(f64::NEG_INFINITY, f64::max);
    maxima.retain(|&k| best - values[k] <= AMBIGUITY_LOGLIK + 1.0);
    maxima.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let found = maxima.len();
    maxima.truncate(MAX_REFINED);
    let mut peaks: Vec<Peak> = maxima
        .iter()
        .map(|&k| {
            let centre = k as f64 * step;
            let (t, l) = lik.golden_max(centre - step, centre + step);
            Peak {
                theta: wrap_2pi(t),
                loglik: l,
            }
        })
        .collect();
    peaks.sort_by(|a, b| b.loglik.total_cmp(&a.loglik));
    Ok((peaks, found))
}

fn tie_tolerance(loglik: f64) -> f64 {
    1e-8 + 1e-12 * loglik.abs()
}

/// Picks the best peak, preferring the smallest θ among exact ties.
fn select(peaks: &[Peak]) -> Peak {
    let best = peaks[0].loglik;
    peaks
        .iter()
        .filter(|p| best - p.loglik <= tie_tolerance(best))
        .copied()
        .min_by(|a, b| a.theta.total_cmp(&b.theta))
        .expect("at least one peak")
}

fn near_degenerate(peaks: &[Peak]) -> usize {
    let best = peaks[0].loglik;
    peaks
        .iter()
        .filter(|p| best - p.loglik <= AMBIGUITY_LOGLIK)
        .count()
}

/// Near-degenerate likelihood maxima (within `AMBIGUITY_LOGLIK` of the best),
/// best first.
pub fn likelihood_peaks(counts: &CountTable) -> Result<Vec<Peak>> {
    let (peaks, _) = refined_peaks(&Likelihood::new(counts, 1.0))?;
    let best = peaks[0].loglik;
    Ok(peaks
        .into_iter()
        .filter(|p| best - p.loglik <= AMBIGUITY_LOGLIK)
        .collect())
}

fn method_for(counts: &CountTable) -> Method {
    if counts.groups().iter().filter(|g| g.total() > 0).count() > 1 {
        Method::Combined
    } else {
        Method::Mle
    }
}

/// Maximum-likelihood estimate over `[0, 2π)` of the product likelihood of all
/// pass groups: grid search at resolution `2π/GRID_POINTS`, then golden-section
/// refinement inside the winning cell.
pub fn mle_combined(counts: &CountTable) -> Result<EstimationResult> {
    mle_with_visibility(counts, 1.0)
}

/// As [`mle_combined`] with outcome contrast `v`.
pub fn mle_with_visibility(counts: &CountTable, v: f64) -> Result<EstimationResult> {
    let lik = Likelihood::new(counts, v);
    let (peaks, _) = refined_peaks(&lik)?;
    let chosen = select(&peaks);
    let degenerate = near_degenerate(&peaks);
    Ok(EstimationResult {
        theta: chosen.theta,
        theta1: None,
        theta2: None,
        method: method_for(counts),
        grid_resolution: Some(TAU / GRID_POINTS as f64),
        loglik_at_max: Some(chosen.loglik),
        ambiguous: degenerate >= 2,
        peaks: degenerate,
    })
}

/// Maximum likelihood by a candidate search: the peaks of the largest-N group
/// are located in `φ = Nθ`, all `N` copies are scored under the full
/// likelihood, and the best few are refined. Much cheaper than the full grid
/// for large N; agrees with [`mle_combined`] when the likelihood is not
/// near-degenerate.
pub fn mle_fast(counts: &CountTable) -> Result<EstimationResult> {
    let lik = Likelihood::new(counts, 1.0);
    let top = lik
        .groups
        .iter()
        .max_by(|a, b| a.n.total_cmp(&b.n))
        .copied()
        .ok_or(Error::InsufficientData("no counts"))?;
    let n = top.n;

    let step = TAU / FAST_GRID as f64;
    let phi_values: Vec<f64> = (0..FAST_GRID)
        .map(|k| {
            let (s, c) = (k as f64 * step).sin_cos();
            lik.group_term(&top, c, s)
        })
        .collect();
    let mut phis = grid_local_maxima(&phi_values);
    if phis.is_empty() {
        return Err(Error::InsufficientData("likelihood is flat"));
    }
    let best_phi = phis.iter().map(|&k| phi_values[k]).fold(f64::NEG_INFINITY, f64::max);
    phis.retain(|&k| best_phi - phi_values[k] <= 20.0);
    phis.sort_by(|&a, &b| phi_values[b].total_cmp(&phi_values[a]));
    phis.truncate(8);

    let copies = n.round() as usize;
    let mut candidates: Vec<(f64, f64)> = Vec::with_capacity(phis.len() * copies);
    for &k in &phis {
        let centre = k as f64 * step;
        let (phi, _) = golden_section(
            |p| {
                let (s, c) = p.sin_cos();
                lik.group_term(&top, c, s)
            },
            centre - step,
            centre + step,
            1e-7,
        );
        for j in 0..copies {
            let t = wrap_2pi((phi + TAU * j as f64) / n);
            candidates.push((t, lik.eval(t)));
        }
    }
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
    candidates.truncate(4);

    let half_period = PI / n;
    let mut peaks: Vec<Peak> = candidates
        .iter()
        .map(|&(t, _)| {
            let mut w = 2.0 * step / n;
            loop {
                let (x, l) = lik.golden_max(t - w, t + w);
                let at_edge = (x - (t - w)).abs() < 1e-6 * w || ((t + w) - x).abs() < 1e-6 * w;
                if !at_edge || w >= half_period {
                    break Peak {
                        theta: wrap_2pi(x),
                        loglik: l,
                    };
                }
                w = (2.0 * w).min(half_period);
            }
        })
        .collect();
    peaks.sort_by(|a, b| b.loglik.total_cmp(&a.loglik));
    peaks.dedup_by(|a, b| wrap_pi(a.theta - b.theta).abs() < 1e-6);
    let chosen = select(&peaks);
    let degenerate = near_degenerate(&peaks);
    Ok(EstimationResult {
        theta: chosen.theta,
        theta1: None,
        theta2: None,
        method: method_for(counts),
        grid_resolution: None,
        loglik_at_max: Some(chosen.loglik),
        ambiguous: degenerate >= 2,
        peaks: degenerate,
    })
}

/// Likelihood normalized to its maximum on the given θ values.
pub fn likelihood_curve(counts: &CountTable, thetas: &[f64]) -> Vec<f64> {
    let lik = Likelihood::new(counts, 1.0);
    let ll: Vec<f64> = thetas.iter().map(|&t| lik.eval(t)).collect();
    let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ll.iter().map(|&l| (l - max).exp()).collect()
}

/// Uniform grid of `points` values on `[0, 2π)`.
pub fn theta_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| TAU * k as f64 / points as f64).collect()
}

/// Parameters for synthetic count generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingModel {
    pub theta: f64,
    /// Single-pass QBER of the depolarizing channel.
    pub e: f64,
    /// Probability of measuring O1.
    pub p_o: f64,
    /// `(pass count, pairs)` per group.
    pub groups: Vec<(u32, u64)>,
}

impl SamplingModel {
    pub fn single_group(theta: f64, n_passes: u32, pairs: u64) -> Self {
        Self {
            theta,
            e: 0.0,
            p_o: 0.5,
            groups: vec![(n_passes, pairs)],
        }
    }

    /// `pairs` message pairs split into `⌊p·pairs⌋` single-pass pairs and the
    /// rest at `n_passes`.
    pub fn split(theta: f64, n_passes: u32, pairs: u64, single_pass_fraction: f64) -> Self {
        let single = floor_count(single_pass_fraction * pairs as f64) as u64;
        let mut groups = vec![(1, single)];
        if n_passes == 1 {
            groups[0].1 = pairs;
        } else {
            groups.push((n_passes, pairs - single));
        }
        Self {
            theta,
            e: 0.0,
            p_o: 0.5,
            groups,
        }
    }

    /// Detector distributions (O1, O2) for a uniformly random message bit.
    pub fn detector_probabilities(&self, n_passes: u32) -> Result<[[f64; 4]; 2]> {
        let link = Link::new(NoiseModel::from_qber(self.e)?, crate::channel::Adversary::None);
        let mut out = [[0.0; 4]; 2];
        for bit in 0..=1u8 {
            let rho = link.round_trip(&encode_and_sense(bit, n_passes, self.theta), false)?;
            for which in ObservableKind::ALL {
                let p = detector_distribution(&rho, which);
                for k in 0..4 {
                    out[which.index()][k] += 0.5 * p[k];
                }
            }
        }
        Ok(out)
    }
}

/// Multinomial draw by sequential binomials.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64; 4]) -> [u64; 4] {
    let mut out = [0u64; 4];
    let mut left = n;
    let mut rest = 1.0;
    for i in 0..3 {
        if left == 0 {
            break;
        }
        let q = if rest > 0.0 { (probs[i] / rest).clamp(0.0, 1.0) } else { 1.0 };
        let k = if q <= 0.0 {
            0
        } else if q >= 1.0 {
            left
        } else {
            Binomial::new(left, q).expect("valid binomial").sample(rng)
        };
        out[i] = k;
        left -= k;
        rest -= probs[i];
    }
    out[3] += left;
    out
}

/// Draws one count table: observable choice per pair, then Born-rule clicks.
pub fn sample_counts<R: Rng + ?Sized>(model: &SamplingModel, rng: &mut R) -> Result<CountTable> {
    let mut table = CountTable::new();
    for &(n, pairs) in &model.groups {
        let probs = model.detector_probabilities(n)?;
        sample_group_into(&mut table, n, pairs, model.p_o, &probs, rng);
    }
    Ok(table)
}

fn sample_group_into<R: Rng + ?Sized>(
    table: &mut CountTable,
    n: u32,
    pairs: u64,
    p_o: f64,
    probs: &[[f64; 4]; 2],
    rng: &mut R,
) {
    let n_o1 = if pairs == 0 {
        0
    } else {
        Binomial::new(pairs, p_o).expect("valid binomial").sample(rng)
    };
    table.add(n, ObservableKind::O1, multinomial(rng, n_o1, &probs[0]));
    table.add(n, ObservableKind::O2, multinomial(rng, pairs - n_o1, &probs[1]));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Expectation,
    Mle,
    MleFast,
}

impl Estimator {
    pub fn apply(self, counts: &CountTable) -> Result<EstimationResult> {
        match self {
            Estimator::Expectation => estimate_expectation(counts),
            Estimator::Mle => mle_combined(counts),
            Estimator::MleFast => mle_fast(counts),
        }
    }
}

/// Monte-Carlo study configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasConfig {
    pub pairs: u64,
    pub n_passes: u32,
    pub single_pass_fraction: f64,
    pub e: f64,
    pub p_o: f64,
    pub estimator: Estimator,
    pub seed: u64,
}

impl BiasConfig {
    pub fn new(pairs: u64, n_passes: u32) -> Self {
        Self {
            pairs,
            n_passes,
            single_pass_fraction: 0.1,
            e: 0.0,
            p_o: 0.5,
            estimator: Estimator::Expectation,
            seed: 42,
        }
    }

    fn model(&self, theta: f64) -> SamplingModel {
        let mut m = SamplingModel::split(theta, self.n_passes, self.pairs, self.single_pass_fraction);
        m.e = self.e;
        m.p_o = self.p_o;
        m
    }
}

/// Per-θ Monte-Carlo summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub theta: f64,
    /// Mean of `estimate − θ` wrapped to `(−π, π]`.
    pub bias: f64,
    /// Standard deviation of the wrapped errors.
    pub std: f64,
    /// Standard error of `bias`.
    pub stderr: f64,
    pub repeats: usize,
    pub failures: usize,
}

fn summarize(theta: f64, errors: &[f64], failures: usize) -> BiasRow {
    let n = errors.len();
    let mean = errors.iter().sum::<f64>() / n.max(1) as f64;
    let var = if n > 1 {
        errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    BiasRow {
        theta,
        bias: mean,
        std: var.sqrt(),
        stderr: (var / n.max(1) as f64).sqrt(),
        repeats: n,
        failures,
    }
}

/// Wrapped estimation errors for `repeats` independent count tables at `theta`.
/// Repeat `r` at grid index `i` draws from stream `[i, r]` under `cfg.seed`.
pub fn monte_carlo_errors(cfg: &BiasConfig, index: usize, theta: f64, repeats: usize) -> Result<(Vec<f64>, usize)> {
    let model = cfg.model(theta);
    let probs: Vec<(u32, u64, [[f64; 4]; 2])> = model
        .groups
        .iter()
        .map(|&(n, pairs)| Ok((n, pairs, model.detector_probabilities(n)?)))
        .collect::<Result<_>>()?;
    let results: Vec<Option<f64>> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = path_rng(cfg.seed, &[index as u64, r as u64]);
            let mut table = CountTable::new();
            for (n, pairs, p) in &probs {
                sample_group_into(&mut table, *n, *pairs, model.p_o, p, &mut rng);
            }
            cfg.estimator.apply(&table).ok().map(|est| wrap_pi(est.theta - theta))
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    Ok((results.into_iter().flatten().collect(), failures))
}

/// Mean wrapped bias and spread of the configured estimator on a θ grid.
pub fn monte_carlo_bias(cfg: &BiasConfig, thetas: &[f64], repeats: usize) -> Result<Vec<BiasRow>> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }
    thetas
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (errors, failures) = monte_carlo_errors(cfg, i, t, repeats)?;
            Ok(summarize(t, &errors, failures))
        })
        .collect()
}

/// Optimal-N scan configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub pairs: u64,
    pub n_values: Vec<u32>,
    pub thetas: Vec<f64>,
    pub repeats: usize,
    pub single_pass_fraction: f64,
    pub e: f64,
    pub p_o: f64,
    pub seed: u64,
}

impl ScanConfig {
    pub fn new(pairs: u64, n_values: Vec<u32>, thetas: Vec<f64>, repeats: usize) -> Self {
        Self {
            pairs,
            n_values,
            thetas,
            repeats,
            single_pass_fraction: 0.1,
            e: 0.0,
            p_o: 0.5,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub n: u32,
    pub theta: f64,
    /// `|mean wrapped bias|` over repeats.
    pub abs_bias: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub pairs: u64,
    pub cells: Vec<ScanCell>,
    /// `(N, mean over θ of |bias|)`.
    pub per_n: Vec<(u32, f64)>,
    /// Same statistic for the single-pass pairs alone (shared draws).
    pub single_pass_level: f64,
    pub best_n: u32,
    pub runner_up: Option<u32>,
}

const SINGLE_GROUP_STREAM: u64 = 0;
const MULTI_GROUP_STREAM: u64 = 1;

/// Bias heatmap over (N, θ) for the combined estimator with the single-pass
/// fraction held fixed. The single-pass counts of a given (θ, repeat) are the
/// same draw for every N, and the same draw feeds the single-pass-only level.
pub fn optimal_n_scan(cfg: &ScanConfig) -> Result<ScanResult> {
    if cfg.repeats == 0 || cfg.n_values.is_empty() || cfg.thetas.is_empty() {
        return Err(Error::InvalidConfig("scan needs N values, θ values and repeats".into()));
    }
    let single = floor_count(cfg.single_pass_fraction * cfg.pairs as f64) as u64;
    let multi = cfg.pairs - single;
    let base = SamplingModel {
        theta: 0.0,
        e: cfg.e,
        p_o: cfg.p_o,
        groups: vec![],
    };

    // Single-pass tables and their stand-alone estimates, per (θ, repeat).
    let singles: Vec<Vec<(CountTable, Option<f64>)>> = cfg
        .thetas
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let model = SamplingModel { theta: t, ..base.clone() };
            let p1 = model.detector_probabilities(1)?;
            Ok((0..cfg.repeats)
                .into_par_iter()
                .map(|r| {
                    let mut rng = path_rng(cfg.seed, &[i as u64, r as u64, SINGLE_GROUP_STREAM]);
                    let mut table = CountTable::new();
                    sample_group_into(&mut table, 1, single, cfg.p_o, &p1, &mut rng);
                    let est = mle_fast(&table).ok().map(|e| wrap_pi(e.theta - t));
                    (table, est)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let single_pass_level = cfg
        .thetas
        .iter()
        .zip(&singles)
        .map(|(&t, reps)| {
            let errs: Vec<f64> = reps.iter().filter_map(|(_, e)| *e).collect();
            summarize(t, &errs, 0).bias.abs()
        })
        .sum::<f64>()
        / cfg.thetas.len() as f64;

    let mut cells = Vec::with_capacity(cfg.n_values.len() * cfg.thetas.len());
    let mut per_n = Vec::with_capacity(cfg.n_values.len());
    for &n in &cfg.n_values {
        let mut acc = 0.0;
        for (i, &t) in cfg.thetas.iter().enumerate() {
            let model = SamplingModel { theta: t, ..base.clone() };
            let pn = model.detector_probabilities(n)?;
            let errs: Vec<f64> = (0..cfg.repeats)
                .into_par_iter()
                .filter_map(|r| {
                    let mut table = singles[i][r].0.clone();
                    let mut rng = path_rng(cfg.seed, &[i as u64, r as u64, MULTI_GROUP_STREAM, n as u64]);
                    sample_group_into(&mut table, n, multi, cfg.p_o, &pn, &mut rng);
                    mle_fast(&table).ok().map(|e| wrap_pi(e.theta - t))
                })
                .collect();
            let row = summarize(t, &errs, 0);
            acc += row.bias.abs();
            cells.push(ScanCell {
                n,
                theta: t,
                abs_bias: row.bias.abs(),
                std: row.std,
            });
        }
        per_n.push((n, acc / cfg.thetas.len() as f64));
    }

    let mut ranked = per_n.clone();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(ScanResult {
        pairs: cfg.pairs,
        cells,
        best_n: ranked[0].0,
        runner_up: ranked.get(1).map(|r| r.0),
        per_n,
        single_pass_level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    fn table(groups: &[(u32, [u64; 4], [u64; 4])]) -> CountTable {
        let mut t = CountTable::new();
        for &(n, o1, o2) in groups {
            t.add(n, ObservableKind::O1, o1);
            t.add(n, ObservableKind::O2, o2);
        }
        t
    }

    #[test]
    fn expectation_examples() {
        let t = table(&[(1, [0, 0, 0, 7], [0, 0, 3, 3])]);
        let (e1, e2) = expectations_from_counts(&t, 1).unwrap();
        assert_eq!(e1, -1.0);
        assert_eq!(e2, 0.0);
        let t = table(&[(1, [0, 0, 5, 5], [1, 0, 0, 0])]);
        assert_eq!(expectations_from_counts(&t, 1).unwrap().0, 0.0);
        let empty = table(&[(1, [0; 4], [1, 0, 0, 0])]);
        assert!(matches!(
            expectations_from_counts(&empty, 1),
            Err(Error::InsufficientData(_))
        ));
        assert!(expectations_from_counts(&t, 4).is_err());
    }

    #[test]
    fn sampled_expectation_converges() {
        let theta = 0.8 * PI;
        let model = SamplingModel::single_group(theta, 1, 1_000_000);
        let t = sample_counts(&model, &mut stream_rng(5, 0)).unwrap();
        let (e1, e2) = expectations_from_counts(&t, 1).unwrap();
        assert!((e1 - 0.809017).abs() < 4.0 / (500_000f64).sqrt());
        assert!((e2 + 0.587785).abs() < 4.0 / (500_000f64).sqrt());
    }

    #[test]
    fn inversion_examples() {
        assert!(theta_from_expectations(-1.0, 0.0, 1).theta.abs() < 1e-15);
        assert!((theta_from_expectations(0.0, -1.0, 1).theta - PI / 2.0).abs() < 1e-15);
        let r = theta_from_expectations(0.809017, -0.587785, 1);
        assert!((r.theta - 0.8 * PI).abs() < 1e-5);
        assert_eq!(r.method, Method::Expectation);
    }

    #[test]
    fn inversion_covers_full_circle() {
        for k in 0..64 {
            let t = TAU * k as f64 / 64.0;
            let r = theta_from_expectations(-t.cos(), -t.sin(), 1);
            assert!(wrap_pi(r.theta - t).abs() < 1e-12, "{t}");
            assert!((0.0..TAU).contains(&r.theta));
        }
        for n in [2u32, 4, 7] {
            let t = 0.2;
            let r = theta_from_expectations(-(n as f64 * t).cos(), -(n as f64 * t).sin(), n);
            assert!((r.theta - t).abs() < 1e-12);
            let t = 5.9;
            let r = theta_from_expectations(-(n as f64 * t).cos(), -(n as f64 * t).sin(), n);
            assert!(r.theta < TAU / n as f64);
            assert!(wrap_pi(n as f64 * (r.theta - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn circular_mean_across_cut() {
        // θ₁ just below 2π, θ₂ just above 0: the mean must stay near 0.
        let eta: f64 = 0.01;
        let e1 = -(eta.cos());
        let e2 = (2.0 * eta).sin();
        let r = theta_from_expectations(e1, e2, 1);
        let d = wrap_pi(r.theta);
        assert!(d.abs() < 0.05, "{}", r.theta);
        assert!(r.theta > PI, "{}", r.theta);
    }

    #[test]
    fn zero_counts_give_flat_likelihood() {
        let t = CountTable::new();
        for k in 0..10 {
            assert_eq!(log_likelihood(&t, k as f64), 0.0);
        }
        assert!(matches!(mle_combined(&t), Err(Error::InsufficientData(_))));
        assert!(matches!(
            mle_combined(&table(&[(1, [0; 4], [0; 4])])),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn mle_recovers_truth() {
        let theta = 0.8 * PI;
        let model = SamplingModel::single_group(theta, 1, 500);
        let t = sample_counts(&model, &mut stream_rng(3, 1)).unwrap();
        let est = mle_combined(&t).unwrap();
        assert!(wrap_pi(est.theta - theta).abs() < 3.0 / 500f64.sqrt());
        assert!(!est.ambiguous);
        assert_eq!(est.method, Method::Mle);
        assert_eq!(est.grid_resolution, Some(TAU / GRID_POINTS as f64));
    }

    #[test]
    fn single_observable_is_mirror_symmetric() {
        let theta = 1.0;
        let model = SamplingModel::single_group(theta, 1, 400);
        let t = sample_counts(&model, &mut stream_rng(3, 2)).unwrap();
        let o1 = t.only_observable(ObservableKind::O1);
        let est = mle_combined(&o1).unwrap();
        assert!(est.ambiguous);
        assert!(est.theta < PI);
        let peaks = likelihood_peaks(&o1).unwrap();
        assert!(peaks.len() >= 2);
        assert!((peaks[0].theta + peaks[1].theta - TAU).abs() < 1e-6);
    }

    #[test]
    fn multi_pass_only_is_periodic() {
        let theta = 1.0;
        let model = SamplingModel::single_group(theta, 4, 70);
        let t = sample_counts(&model, &mut stream_rng(3, 3)).unwrap();
        let peaks = likelihood_peaks(&t).unwrap();
        assert_eq!(peaks.len(), 4);
        assert!(mle_combined(&t).unwrap().ambiguous);
    }

    #[test]
    fn combined_groups_resolve_ambiguity() {
        let theta = 2.2;
        let model = SamplingModel::split(theta, 4, 140, 0.5);
        let t = sample_counts(&model, &mut stream_rng(3, 4)).unwrap();
        let est = mle_combined(&t).unwrap();
        assert_eq!(est.method, Method::Combined);
        assert!(!est.ambiguous);
        assert!(wrap_pi(est.theta - theta).abs() < 0.1);
    }

    #[test]
    fn fast_mle_agrees_with_grid() {
        for (k, (theta, n, pairs)) in [(0.4, 1u32, 300u64), (2.2, 4, 140), (5.1, 12, 800), (3.3, 40, 800)]
            .into_iter()
            .enumerate()
        {
            let model = SamplingModel::split(theta, n, pairs, 0.1);
            let t = sample_counts(&model, &mut stream_rng(8, k as u64)).unwrap();
            let a = mle_combined(&t).unwrap();
            let b = mle_fast(&t).unwrap();
            assert!(wrap_pi(a.theta - b.theta).abs() < 1e-6, "{theta} {n}: {} vs {}", a.theta, b.theta);
            assert!((a.loglik_at_max.unwrap() - b.loglik_at_max.unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn curve_is_normalized() {
        let model = SamplingModel::single_group(1.3, 1, 200);
        let t = sample_counts(&model, &mut stream_rng(2, 2)).unwrap();
        let c = likelihood_curve(&t, &theta_grid(512));
        let max = c.iter().copied().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
        assert!(c.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let flat = likelihood_curve(&CountTable::new(), &theta_grid(8));
        assert!(flat.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn noisy_sampling_uses_contrast() {
        let e = 0.05;
        let model = SamplingModel {
            theta: 0.6,
            e,
            p_o: 0.5,
            groups: vec![(2, 100)],
        };
        let p = model.detector_probabilities(2).unwrap();
        let v = (1.0 - 2.0 * e).powi(2);
        assert!((p[0][0] + p[0][3] - 0.5 * (1.0 + v * 1.2f64.cos())).abs() < 1e-12);
        assert!((p[1][0] + p[1][2] - 0.5 * (1.0 + v * 1.2f64.sin())).abs() < 1e-12);
        let est = mle_with_visibility(&sample_counts(&SamplingModel { groups: vec![(1, 20_000)], ..model }, &mut stream_rng(1, 9)).unwrap(), v).unwrap();
        assert!(wrap_pi(est.theta - 0.6).abs() < 0.05);
    }

    #[test]
    fn multinomial_conserves_total() {
        let mut rng = stream_rng(4, 4);
        for n in [0u64, 1, 17, 1000] {
            let c = multinomial(&mut rng, n, &[0.1, 0.2, 0.0, 0.7]);
            assert_eq!(c.iter().sum::<u64>(), n);
            assert_eq!(c[2], 0);
        }
        assert_eq!(multinomial(&mut rng, 9, &[0.0, 0.0, 0.0, 1.0]), [0, 0, 0, 9]);
    }

    #[test]
    fn bias_driver_is_deterministic() {
        let mut cfg = BiasConfig::new(200, 1);
        cfg.seed = 77;
        let thetas = theta_grid(4);
        let a = monte_carlo_bias(&cfg, &thetas, 30).unwrap();
        let b = monte_carlo_bias(&cfg, &thetas, 30).unwrap();
        assert_eq!(a, b);
        assert!(monte_carlo_bias(&cfg, &thetas, 0).is_err());
        for row in &a {
            assert_eq!(row.repeats + row.failures, 30);
        }
    }

    #[test]
    fn scan_shares_single_pass_draws() {
        let cfg = ScanConfig::new(200, vec![1, 2, 50], theta_grid(4).into_iter().map(|t| t + 0.3).collect(), 6);
        let r = optimal_n_scan(&cfg).unwrap();
        assert_eq!(r.cells.len(), 12);
        assert_eq!(r.per_n.len(), 3);
        assert!(r.single_pass_level > 0.0);
        assert_eq!(optimal_n_scan(&cfg).unwrap(), r);
    }

    fn arb_table() -> impl Strategy<Value = CountTable> {
        (
            prop::array::uniform4(0u64..60),
            prop::array::uniform4(0u64..60),
            prop::array::uniform4(0u64..60),
            prop::array::uniform4(0u64..60),
            2u32..9,
        )
            .prop_map(|(a, b, c, d, n)| table(&[(1, a, b), (n, c, d)]))
    }

    proptest! {
        #[test]
        fn score_matches_finite_difference(t in arb_table(), theta in 0.0f64..std::f64::consts::TAU) {
            let lik = Likelihood::new(&t, 0.9);
            let h = 1e-6;
            let fd = (lik.eval(theta + h) - lik.eval(theta - h)) / (2.0 * h);
            let an = lik.score(theta);
            prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "{} vs {}", fd, an);
        }

        #[test]
        fn grid_recurrence_matches_direct(t in arb_table()) {
            let lik = Likelihood::new(&t, 0.95);
            let g = lik.grid(5000);
            for k in (0..5000).step_by(97) {
                let direct = lik.eval(TAU * k as f64 / 5000.0);
                prop_assert!((g[k] - direct).abs() < 1e-9 * direct.abs().max(1.0));
            }
        }

        #[test]
        fn argmax_ignores_constant_offsets(t in arb_table(), c in -50.0f64..50.0) {
            let lik = Likelihood::new(&t, 1.0);
            let grid = theta_grid(720);
            let best = |f: &dyn Fn(f64) -> f64| {
                grid.iter().copied().max_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap()
            };
            prop_assert_eq!(best(&|x| lik.eval(x)), best(&|x| lik.eval(x) + c));
        }

        #[test]
        fn wrap_ranges(x in -100.0f64..100.0) {
            let w = wrap_pi(x);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!(((x - w) / TAU - ((x - w) / TAU).round()).abs() < 1e-9);
            let z = wrap_2pi(x);
            prop_assert!((0.0..TAU).contains(&z));
        }
    }
}
