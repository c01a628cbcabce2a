//! Information measures: entropies, Fisher informations, Holevo bound,
//! secrecy capacities, detection probabilities and threshold roots.

use serde::{Deserialize, Serialize};

use crate::channel::bell_error_after_two_passes;
use crate::error::{Error, Result};
use crate::qlin::{eig_hermitian, von_neumann_entropy, CMat, CVec, Eigen, C64};
use crate::states::{rho_ae, rho_ae_mixture, LambdaVec, ObservableKind};

/// Step of every central difference in this module.
pub const DIFF_STEP: f64 = 1e-6;
/// Probabilities at or below this are dropped from classical Fisher sums.
pub const CFI_CUTOFF: f64 = 1e-12;
/// Eigenvalues at or below this are outside the support in QFI sums.
pub const SUPPORT_CUTOFF: f64 = 1e-10;
/// Eigenvalues closer than this are treated as one degenerate block.
const DEGENERACY_TOL: f64 = 1e-7;
/// Block gaps below this (but above `DEGENERACY_TOL`) are too small to
/// difference across reliably.
const MIN_GAP: f64 = 1e-4;

fn check_prob(name: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value: x })
    }
}

fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// Binary Shannon entropy in bits.
pub fn h(x: f64) -> Result<f64> {
    check_prob("x", x)?;
    // `+ 0.0` turns the −0 at the endpoints into 0.
    Ok(-(xlog2x(x) + xlog2x(1.0 - x)) + 0.0)
}

/// Shannon entropy of a four-outcome distribution in bits.
pub fn h4(dist: [f64; 4]) -> Result<f64> {
    if dist.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidDistribution(format!("{dist:?}")));
    }
    let s: f64 = dist.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution(format!("sums to {s}")));
    }
    Ok(-dist.iter().map(|&p| xlog2x(p)).sum::<f64>() + 0.0)
}

/// `Σ (∂θ pᵢ)² / pᵢ` with central differences.
pub fn cfi_from_probs<F>(prob_fn: F, theta: f64) -> f64
where
    F: Fn(f64) -> Vec<f64>,
{
    let p = prob_fn(theta);
    let hi = prob_fn(theta + DIFF_STEP);
    let lo = prob_fn(theta - DIFF_STEP);
    p.iter()
        .zip(hi.iter().zip(&lo))
        .filter(|(&pi, _)| pi > CFI_CUTOFF)
        .map(|(&pi, (&a, &b))| {
            let d = (a - b) / (2.0 * DIFF_STEP);
            d * d / pi
        })
        .sum()
}

/// Two-pass contrast `(1 − 2e)²`.
pub fn visibility(e: f64) -> f64 {
    (1.0 - 2.0 * e).powi(2)
}

fn noisy_cfi_form(num_trig: f64, den_trig: f64, e: f64, n: u32) -> f64 {
    let v2 = visibility(e).powi(2);
    let num = (n as f64).powi(2) * v2 * num_trig * num_trig;
    if num == 0.0 {
        return 0.0;
    }
    num / (2.0 * (1.0 - v2 * den_trig * den_trig))
}

/// Per-pair CFI of one observable under two-pass depolarizing noise, with
/// each observable chosen half of the time.
pub fn cfi_noisy(which: ObservableKind, e: f64, theta: f64, n: u32) -> f64 {
    let nt = n as f64 * theta;
    match which {
        ObservableKind::O1 => noisy_cfi_form(nt.sin(), nt.cos(), e, n),
        ObservableKind::O2 => noisy_cfi_form(nt.cos(), nt.sin(), e, n),
    }
}

/// Variant with `θ` rather than `Nθ` in the denominator.
pub fn cfi_noisy_printed(which: ObservableKind, e: f64, theta: f64, n: u32) -> f64 {
    let nt = n as f64 * theta;
    match which {
        ObservableKind::O1 => noisy_cfi_form(nt.sin(), theta.cos(), e, n),
        ObservableKind::O2 => noisy_cfi_form(nt.cos(), theta.sin(), e, n),
    }
}

/// Groups descending eigenvalues into near-degenerate blocks.
fn blocks(values: &[f64]) -> Result<Vec<std::ops::Range<usize>>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i - 1] - values[i] > DEGENERACY_TOL {
            if i < values.len() && values[i - 1] - values[i] < MIN_GAP {
                return Err(Error::IllConditioned(format!(
                    "eigenvalues {:.3e} and {:.3e} nearly cross",
                    values[i - 1],
                    values[i]
                )));
            }
            out.push(start..i);
            start = i;
        }
    }
    Ok(out)
}

/// Unitary polar factor of `m` (`m (m†m)^{-1/2}`).
fn polar_unitary(m: &CMat) -> Result<CMat> {
    let gram = m.dagger().matmul(m);
    let eig = eig_hermitian(&gram)?;
    if eig.values.iter().any(|&l| l < 1e-6) {
        return Err(Error::IllConditioned("eigenbasis jumps across the stencil".into()));
    }
    let k = gram.rows();
    let mut inv_sqrt = CMat::zeros(k, k);
    for (l, v) in eig.values.iter().zip(&eig.vectors) {
        inv_sqrt = &inv_sqrt + &v.projector().scale_real(1.0 / l.sqrt());
    }
    Ok(m.matmul(&inv_sqrt))
}

fn columns(vectors: &[CVec], range: std::ops::Range<usize>) -> CMat {
    let n = vectors[0].dim();
    let k = range.len();
    CMat::from_fn(n, k, |i, j| vectors[range.start + j][i])
}

/// Rotates the stencil eigenvectors within each block onto the centre basis.
fn align(center: &Eigen, stencil: &Eigen, blocks: &[std::ops::Range<usize>]) -> Result<Vec<CVec>> {
    let n = center.vectors[0].dim();
    let mut out = vec![CVec::zeros(n); n];
    for b in blocks {
        let vc = columns(&center.vectors, b.clone());
        let vs = columns(&stencil.vectors, b.clone());
        let m = vs.dagger().matmul(&vc);
        let w = polar_unitary(&m)?;
        let aligned = vs.matmul(&w);
        for (j, idx) in b.clone().enumerate() {
            out[idx] = CVec::new((0..n).map(|i| aligned[(i, j)]).collect());
        }
    }
    Ok(out)
}

/// Mixed-state QFI from the spectral decomposition:
/// `Σ (∂pᵢ)²/pᵢ + 4Σ pᵢ⟨∂ψᵢ|∂ψᵢ⟩ − 8Σ pᵢpⱼ/(pᵢ+pⱼ) |⟨ψᵢ|∂ψⱼ⟩|²` over the support.
pub fn qfi<F>(rho_fn: F, theta: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<CMat>,
{
    let rho = rho_fn(theta)?;
    rho.validate_density()?;
    let center = eig_hermitian(&rho)?;
    let plus = eig_hermitian(&rho_fn(theta + DIFF_STEP)?)?;
    let minus = eig_hermitian(&rho_fn(theta - DIFF_STEP)?)?;
    let blocks = blocks(&center.values)?;
    let vp = align(&center, &plus, &blocks)?;
    let vm = align(&center, &minus, &blocks)?;

    let two_h = 2.0 * DIFF_STEP;
    let support: Vec<usize> = (0..center.values.len())
        .filter(|&i| center.values[i] > SUPPORT_CUTOFF)
        .collect();
    let dvec: Vec<CVec> = support
        .iter()
        .map(|&i| {
            CVec::new(
                vp[i]
                    .as_slice()
                    .iter()
                    .zip(vm[i].as_slice())
                    .map(|(a, b)| (a - b) / C64::new(two_h, 0.0))
                    .collect(),
            )
        })
        .collect();

    let mut f = 0.0;
    for (a, &i) in support.iter().enumerate() {
        let p = center.values[i];
        let dp = (plus.values[i] - minus.values[i]) / two_h;
        f += dp * dp / p;
        f += 4.0 * p * dvec[a].inner(&dvec[a]).re;
        for (b, &j) in support.iter().enumerate() {
            let q = center.values[j];
            let overlap = center.vectors[i].inner(&dvec[b]).norm_sqr();
            f -= 8.0 * p * q / (p + q) * overlap;
        }
    }
    Ok(f.max(0.0))
}

/// QFI from the symmetric logarithmic derivative in the eigenbasis:
/// `Σ 2|⟨ψᵢ|∂ρ|ψⱼ⟩|²/(pᵢ+pⱼ)`.
pub fn qfi_sld<F>(rho_fn: F, theta: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<CMat>,
{
    let rho = rho_fn(theta)?;
    rho.validate_density()?;
    let eig = eig_hermitian(&rho)?;
    let drho = (&rho_fn(theta + DIFF_STEP)? - &rho_fn(theta - DIFF_STEP)?).scale_real(0.5 / DIFF_STEP);
    let n = eig.values.len();
    let mut f = 0.0;
    for i in 0..n {
        let di = drho.dagger().apply(&eig.vectors[i]);
        for j in 0..n {
            let s = eig.values[i].max(0.0) + eig.values[j].max(0.0);
            if s <= SUPPORT_CUTOFF {
                continue;
            }
            let m = di.inner(&eig.vectors[j]);
            f += 2.0 * m.norm_sqr() / s;
        }
    }
    Ok(f)
}

fn check_e(e: f64, max: f64) -> Result<()> {
    if (0.0..=max).contains(&e) {
        Ok(())
    } else {
        Err(Error::OutOfRange { name: "e", value: e })
    }
}

/// Holevo quantity of Eve's ensemble `{½, ρ_AE,0; ½, ρ_AE,1}` under
/// depolarizing noise with single-pass QBER `e`.
pub fn holevo_eve(e: f64, n_passes: u32, theta: f64) -> Result<f64> {
    check_e(e, 1.0 / 3.0)?;
    let l = LambdaVec::depolarizing(e)?;
    let r0 = rho_ae(&l, 0, n_passes, theta)?;
    let r1 = rho_ae(&l, 1, n_passes, theta)?;
    let mix = (&r0 + &r1).scale_real(0.5);
    let chi = von_neumann_entropy(&mix)?
        - 0.5 * (von_neumann_entropy(&r0)? + von_neumann_entropy(&r1)?);
    Ok(chi.max(0.0))
}

/// `1 − h(2e(1 − e))`.
pub fn mutual_info_ab(e: f64) -> Result<f64> {
    check_e(e, 0.5)?;
    Ok(1.0 - h(2.0 * e * (1.0 - e))?)
}

/// `1 − h(2e(1 − e)) − h(e)`.
pub fn secrecy_capacity_qisac(e: f64) -> Result<f64> {
    check_e(e, 0.5)?;
    Ok(mutual_info_ab(e)? - h(e)?)
}

/// `2 − h₄(q(e)) − 2h(e)` with the two-pass Bell-error distribution `q`.
pub fn secrecy_capacity_twostep(e: f64) -> Result<f64> {
    check_e(e, 1.0 / 3.0)?;
    Ok(2.0 - h4(bell_error_after_two_passes(e)?)? - 2.0 * h(e)?)
}

pub fn fisher_bob(e: f64, theta: f64, n: u32) -> f64 {
    cfi_noisy(ObservableKind::O1, e, theta, n) + cfi_noisy(ObservableKind::O2, e, theta, n)
}

/// `N²(1 − 2e)⁴/2`, a θ-independent lower bound on `fisher_bob`.
pub fn fisher_bob_bound(e: f64, n: u32) -> f64 {
    0.5 * (n as f64).powi(2) * visibility(e).powi(2)
}

/// `N²(3e − 4e²)/(1 − e)`.
pub fn fisher_eve(e: f64, n: u32) -> f64 {
    (n as f64).powi(2) * (3.0 * e - 4.0 * e * e) / (1.0 - e)
}

/// Numerical QFI of Eve's bit-averaged state.
pub fn fisher_eve_numeric(e: f64, n: u32, theta: f64) -> Result<f64> {
    check_e(e, 1.0 / 3.0)?;
    let l = LambdaVec::depolarizing(e)?;
    qfi(|t| rho_ae_mixture(&l, n, t), theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "attack", rename_all = "snake_case")]
pub enum DetectionKind {
    /// `m` total pairs; exponent `(1 − p_e)m/2`.
    DoubleCnot { m: usize },
    /// `k` intercepted qubits.
    Mitm { k: usize },
}

/// `1 − ((5 + p_e)/6)^x` with `x = (1 − p_e)m/2` or `x = k`.
pub fn detection_probability(kind: DetectionKind, p_e: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_e) {
        return Err(Error::OutOfRange { name: "p_e", value: p_e });
    }
    let base = (5.0 + p_e) / 6.0;
    let exponent = match kind {
        DetectionKind::DoubleCnot { m } => (1.0 - p_e) * m as f64 / 2.0,
        DetectionKind::Mitm { k } => k as f64,
    };
    Ok(1.0 - base.powf(exponent))
}

/// Bisection for a sign change of `f` on `[lo, hi]`, to `1e-8`.
pub fn threshold_root<F>(f: F, lo: f64, hi: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a)?;
    let fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    while b - a > 1e-8 {
        let mid = 0.5 * (a + b);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

pub fn qisac_threshold() -> Result<f64> {
    threshold_root(secrecy_capacity_qisac, 0.0, 0.2)
}

pub fn twostep_threshold() -> Result<f64> {
    threshold_root(secrecy_capacity_twostep, 0.0, 0.2)
}

pub fn fisher_crossing(n: u32) -> Result<f64> {
    threshold_root(|e| Ok(fisher_bob_bound(e, n) - fisher_eve(e, n)), 0.0, 0.3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityPoint {
    pub e: f64,
    pub cs_qisac: f64,
    pub cs_twostep: f64,
}

impl CapacityPoint {
    pub fn at(e: f64) -> Result<Self> {
        Ok(Self {
            e,
            cs_qisac: secrecy_capacity_qisac(e)?,
            cs_twostep: secrecy_capacity_twostep(e)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub e: f64,
    pub theta: f64,
    pub n: u32,
    pub f_o1: f64,
    pub f_o2: f64,
    pub f_bob: f64,
    pub f_bob_bound: f64,
    pub f_eve: f64,
    pub secure: bool,
}

impl FisherReport {
    pub fn at(e: f64, theta: f64, n: u32) -> Self {
        let f_o1 = cfi_noisy(ObservableKind::O1, e, theta, n);
        let f_o2 = cfi_noisy(ObservableKind::O2, e, theta, n);
        let f_bob_bound = fisher_bob_bound(e, n);
        let f_eve = fisher_eve(e, n);
        Self {
            e,
            theta,
            n,
            f_o1,
            f_o2,
            f_bob: f_o1 + f_o2,
            f_bob_bound,
            f_eve,
            secure: f_bob_bound > f_eve,
        }
    }
}

/// Security figures of merit at one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub e: f64,
    pub n_passes: u32,
    pub theta: f64,
    pub mutual_info_ab: f64,
    pub holevo_eve: f64,
    pub h_e: f64,
    pub cs_qisac: f64,
    pub cs_twostep: f64,
    pub f_bob: f64,
    pub f_bob_bound: f64,
    pub f_eve: f64,
    pub f_eve_numeric: f64,
    pub fisher_secure: bool,
    pub capacity_secure: bool,
    pub threshold_qisac: f64,
    pub threshold_twostep: f64,
    pub fisher_crossing: f64,
    pub p_e: f64,
    pub m: usize,
    pub k: usize,
    pub p_det_double_cnot: f64,
    pub p_det_mitm: f64,
}

impl SecurityReport {
    pub fn compute(e: f64, n_passes: u32, theta: f64, p_e: f64, m: usize, k: usize) -> Result<Self> {
        check_e(e, 1.0 / 3.0)?;
        let cs_qisac = secrecy_capacity_qisac(e)?;
        let f_bob_bound = fisher_bob_bound(e, n_passes);
        let f_eve = fisher_eve(e, n_passes);
        Ok(Self {
            e,
            n_passes,
            theta,
            mutual_info_ab: mutual_info_ab(e)?,
            holevo_eve: holevo_eve(e, n_passes, theta)?,
            h_e: h(e)?,
            cs_qisac,
            cs_twostep: secrecy_capacity_twostep(e)?,
            f_bob: fisher_bob(e, theta, n_passes),
            f_bob_bound,
            f_eve,
            f_eve_numeric: fisher_eve_numeric(e, n_passes, theta)?,
            fisher_secure: f_bob_bound > f_eve,
            capacity_secure: cs_qisac > 0.0,
            threshold_qisac: qisac_threshold()?,
            threshold_twostep: twostep_threshold()?,
            fisher_crossing: fisher_crossing(n_passes)?,
            p_e,
            m,
            k,
            p_det_double_cnot: detection_probability(DetectionKind::DoubleCnot { m }, p_e)?,
            p_det_mitm: detection_probability(DetectionKind::Mitm { k }, p_e)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{detector_distribution, mixed_probe, probe_state};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(h(0.0).unwrap(), 0.0);
        assert_eq!(h(1.0).unwrap(), 0.0);
        assert!(close(h(0.5).unwrap(), 1.0, 1e-15));
        assert!(close(h(0.079).unwrap(), 0.398646, 1e-6));
        assert!(close(h(0.095).unwrap(), 0.452943, 1e-6));
        assert!(close(h(0.1).unwrap(), 0.468996, 1e-6));
        assert!(h(-0.1).is_err());
        assert!(h(1.1).is_err());
    }

    #[test]
    fn four_way_entropy_values() {
        assert_eq!(h4([1.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(close(h4([0.25; 4]).unwrap(), 2.0, 1e-15));
        assert!(close(h4([0.85, 0.05, 0.05, 0.05]).unwrap(), 0.847585, 1e-6));
        let q = bell_error_after_two_passes(0.086).unwrap();
        assert!(close(h4(q).unwrap(), 1.161759, 1e-6));
        assert!(h4([0.5, 0.5, 0.5, -0.5]).is_err());
        assert!(h4([0.5, 0.4, 0.0, 0.0]).is_err());
    }

    #[test]
    fn ideal_cfi_per_branch_is_n_squared() {
        for n in [1u32, 2, 4] {
            for &t in &[0.3, 1.0, 2.2, 4.1] {
                let f = cfi_from_probs(
                    |th| detector_distribution(&probe_state(0, n, th), ObservableKind::O1).to_vec(),
                    t,
                );
                assert!(close(f, (n * n) as f64, 1e-5 * (n * n) as f64), "{n} {t} {f}");
            }
        }
        assert_eq!(cfi_from_probs(|_| vec![0.3, 0.7], 1.0), 0.0);
    }

    #[test]
    fn noisy_cfi_matches_contrast_model() {
        for &e in &[0.0, 0.03, 0.05, 0.1] {
            let v = visibility(e);
            for n in [1u32, 3] {
                for &t in &[0.2, 0.9, 2.5, 3.9] {
                    // Classes: observable choice (½ each) times ± outcome.
                    let f = cfi_from_probs(
                        |th| {
                            let nt = n as f64 * th;
                            vec![
                                0.25 * (1.0 + v * nt.cos()),
                                0.25 * (1.0 - v * nt.cos()),
                                0.25 * (1.0 + v * nt.sin()),
                                0.25 * (1.0 - v * nt.sin()),
                            ]
                        },
                        t,
                    );
                    let closed = fisher_bob(e, t, n);
                    assert!(close(f, closed, 1e-6 * closed.max(1.0)), "{e} {n} {t}");
                }
            }
        }
    }

    #[test]
    fn noisy_cfi_limits() {
        for n in [1u32, 2, 5] {
            for &t in &[0.1, 0.7, 1.4, 2.9] {
                let s = cfi_noisy(ObservableKind::O1, 0.0, t, n) + cfi_noisy(ObservableKind::O2, 0.0, t, n);
                assert!(close(s, (n * n) as f64, 1e-9 * (n * n) as f64));
            }
        }
        assert!(cfi_noisy(ObservableKind::O1, 0.05, PI, 1) < 1e-25);
        assert_eq!(cfi_noisy(ObservableKind::O1, 0.05, 0.0, 1), 0.0);
        assert!(cfi_noisy(ObservableKind::O2, 0.05, PI, 1) > 0.0);
        assert!(close(
            cfi_noisy_printed(ObservableKind::O1, 0.05, 0.7, 1),
            cfi_noisy(ObservableKind::O1, 0.05, 0.7, 1),
            1e-15
        ));
        assert!(!close(
            cfi_noisy_printed(ObservableKind::O1, 0.05, 0.7, 3),
            cfi_noisy(ObservableKind::O1, 0.05, 0.7, 3),
            1e-6
        ));
    }

    #[test]
    fn qfi_of_mixed_probe() {
        for n in [1u32, 2, 4] {
            for &t in &[0.0, 0.4, 1.7, 3.3] {
                let f = qfi(|th| Ok(mixed_probe(n, th)), t).unwrap();
                let nn = (n * n) as f64;
                assert!(close(f, nn, 1e-6 * nn), "{n} {t} {f}");
                let g = qfi_sld(|th| Ok(mixed_probe(n, th)), t).unwrap();
                assert!(close(g, nn, 1e-6 * nn));
            }
        }
    }

    #[test]
    fn qfi_of_pure_probe_matches_generator_variance() {
        for n in [1u32, 3] {
            let t = 0.8;
            let psi = probe_state(0, n, t);
            let h_step = 1e-6;
            let d: Vec<C64> = probe_state(0, n, t + h_step)
                .as_slice()
                .iter()
                .zip(probe_state(0, n, t - h_step).as_slice())
                .map(|(a, b)| (a - b) / C64::new(2.0 * h_step, 0.0))
                .collect();
            let d = CVec::new(d);
            let oracle = 4.0 * (d.inner(&d).re - psi.inner(&d).norm_sqr());
            let f = qfi(|th| Ok(probe_state(0, n, th).projector()), t).unwrap();
            assert!(close(f, oracle, 1e-6 * oracle));
            assert!(close(f, (n * n) as f64, 1e-6));
        }
    }

    #[test]
    fn qfi_flags_near_crossings() {
        let rho = |th: f64| {
            let a = 0.5 + 1e-6 * th;
            Ok(CMat::diagonal(&[C64::new(a, 0.0), C64::new(1.0 - a, 0.0)]))
        };
        assert!(matches!(qfi(rho, 0.5), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn cfi_bounded_by_qfi() {
        for n in [1u32, 2] {
            for &t in &[0.3, 1.2] {
                let q = qfi(|th| Ok(mixed_probe(n, th)), t).unwrap();
                for which in ObservableKind::ALL {
                    let c = cfi_from_probs(|th| detector_distribution(&mixed_probe(n, th), which).to_vec(), t);
                    assert!(c <= q * (1.0 + 1e-6));
                }
            }
        }
    }

    #[test]
    fn holevo_equals_binary_entropy() {
        assert!(holevo_eve(0.0, 1, 0.3).unwrap().abs() < 1e-12);
        for &e in &[0.02, 0.1, 0.15] {
            for n in [1u32, 4] {
                for &t in &[0.0, 1.3, 4.4] {
                    let chi = holevo_eve(e, n, t).unwrap();
                    assert!(close(chi, h(e).unwrap(), 1e-9), "{e} {n} {t}");
                }
            }
        }
        let mut prev = -1.0;
        for i in 0..=33 {
            let chi = holevo_eve(i as f64 / 100.0, 1, 0.5).unwrap();
            assert!(chi > prev);
            prev = chi;
        }
    }

    #[test]
    fn eve_qfi_matches_closed_form() {
        for &e in &[0.02, 0.1] {
            for n in [1u32, 4] {
                let num = fisher_eve_numeric(e, n, 0.9).unwrap();
                let closed = fisher_eve(e, n);
                assert!(close(num, closed, 1e-5 * closed), "{e} {n} {num} {closed}");
            }
        }
    }

    #[test]
    fn capacities() {
        assert!(close(mutual_info_ab(0.0).unwrap(), 1.0, 1e-15));
        assert!(close(mutual_info_ab(0.05).unwrap(), 0.547057, 1e-6));
        assert!(close(secrecy_capacity_qisac(0.0).unwrap(), 1.0, 1e-15));
        assert!(close(secrecy_capacity_twostep(0.0).unwrap(), 2.0, 1e-15));
        let r1 = qisac_threshold().unwrap();
        let r2 = twostep_threshold().unwrap();
        assert!(close(r1, 0.079363, 1e-5));
        assert!(close(r2, 0.085486, 1e-5));
        assert!(r1 < r2);
        for i in 1..8 {
            let e = i as f64 / 100.0;
            assert!(secrecy_capacity_qisac(e).unwrap() < secrecy_capacity_twostep(e).unwrap());
        }
    }

    #[test]
    fn fisher_closed_forms() {
        assert!(close(fisher_bob(0.0, 0.7, 3), 9.0, 1e-12));
        assert_eq!(fisher_eve(0.0, 3), 0.0);
        assert!(close(fisher_bob_bound(0.083, 1), 0.241900, 1e-5));
        assert!(close(fisher_eve(0.083, 1), 0.241487, 1e-5));
        for n in [1u32, 2, 3, 7] {
            assert!(close(fisher_crossing(n).unwrap(), 0.083080, 1e-5));
        }
        let mut prev = (f64::INFINITY, -1.0);
        for i in 0..=33 {
            let e = i as f64 / 100.0;
            let cur = (fisher_bob_bound(e, 2), fisher_eve(e, 2));
            assert!(cur.0 < prev.0 && cur.1 > prev.1);
            prev = cur;
        }
    }

    #[test]
    fn detection_closed_forms() {
        let d = detection_probability(DetectionKind::DoubleCnot { m: 320 }, 0.6).unwrap();
        assert!(close(d, 1.0 - (5.6f64 / 6.0).powi(64), 1e-15));
        assert!(close(d, 0.987912, 1e-6));
        let d = detection_probability(DetectionKind::Mitm { k: 32 }, 0.5).unwrap();
        assert!(close(d, 1.0 - (11.0f64 / 12.0).powi(32), 1e-15));
        assert!(close(d, 0.938232, 1e-6));
        assert_eq!(detection_probability(DetectionKind::DoubleCnot { m: 320 }, 1.0).unwrap(), 0.0);
        assert!(detection_probability(DetectionKind::Mitm { k: 3 }, 1.2).is_err());
    }

    #[test]
    fn root_finder() {
        assert!(close(threshold_root(|e| Ok(e - 0.5), 0.0, 1.0).unwrap(), 0.5, 1e-8));
        assert!(matches!(
            threshold_root(|e| Ok(e + 1.0), 0.0, 1.0),
            Err(Error::NoSignChange { .. })
        ));
    }

    #[test]
    fn security_report_is_consistent() {
        let r = SecurityReport::compute(0.05, 1, 0.4, 0.5, 320, 32).unwrap();
        assert!(r.capacity_secure && r.fisher_secure);
        assert!(close(r.holevo_eve, r.h_e, 1e-9));
        assert!(close(r.f_eve, r.f_eve_numeric, 1e-5 * r.f_eve));
        let json = serde_json::to_string(&r).unwrap();
        let back: SecurityReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn bob_dominates_bound(e in 0.0f64..0.45, t in 0.0f64..6.3, n in 1u32..8) {
            prop_assert!(fisher_bob(e, t, n) >= fisher_bob_bound(e, n) * (1.0 - 1e-12));
        }

        #[test]
        fn entropy_is_symmetric(x in 0.0f64..=1.0) {
            prop_assert!((h(x).unwrap() - h(1.0 - x).unwrap()).abs() < 1e-12);
        }
    }
}
