//! Noise and adversary models acting on the two transmissions of a pair.
//!
//! A pair lives in A ⊗ B ⊗ E with a one-qubit eavesdropper register E that
//! starts in `|0⟩`. Qubit B travels to Bob first; qubit A follows after
//! Alice's local operation. Each transit is depolarized with the same `p`,
//! and the adversary acts in-channel after the noise.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlin::{c, embed, partial_trace, r, CMat, CVec};
use crate::rng::categorical;
use crate::states::{bell, BellLabel, LambdaVec, PauliTag};

const ABE: [usize; 3] = [2, 2, 2];
const SITE_A: usize = 0;
const SITE_B: usize = 1;
const SITE_E: usize = 2;

/// Depolarizing strength per transit; the single-pass QBER is `e = p/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub p: f64,
}

impl NoiseModel {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRange { name: "p", value: p });
        }
        Ok(Self { p })
    }

    pub fn noiseless() -> Self {
        Self { p: 0.0 }
    }

    /// Noise producing single-pass QBER `e`.
    pub fn from_qber(e: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&e) {
            return Err(Error::OutOfRange { name: "e", value: e });
        }
        Ok(Self { p: 2.0 * e })
    }

    pub fn e(&self) -> f64 {
        0.5 * self.p
    }

    /// Pauli weights `(I, X, Y, Z)` of one transit.
    pub fn pauli_weights(&self) -> [f64; 4] {
        let b = 0.25 * self.p;
        [1.0 - 3.0 * b, b, b, b]
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::noiseless()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Adversary {
    #[default]
    None,
    /// Identical Pauli-twirled attack on every B qubit in the first transit.
    Collective { lambdas: LambdaVec },
    /// CNOT from B into Eve's ancilla on the way out, CNOT from A on the way back.
    DoubleCnot,
    /// Measure-and-resend in a uniformly random Pauli basis on `intercepted`
    /// B qubits during the first transit.
    InterceptResend {
        #[serde(default)]
        intercepted: usize,
    },
}

impl fmt::Display for Adversary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Adversary::None => f.write_str("none"),
            Adversary::Collective { .. } => f.write_str("collective"),
            Adversary::DoubleCnot => f.write_str("double_cnot"),
            Adversary::InterceptResend { intercepted } => write!(f, "intercept_resend({intercepted})"),
        }
    }
}

/// Pauli weights `(I, X, Y, Z)` of measure-and-resend in a random basis.
pub const INTERCEPT_RESEND_WEIGHTS: [f64; 4] = [0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];

/// `Σ wₖ σₖ ρ σₖ` on subsystem `site`, weights ordered `(I, X, Y, Z)`.
pub fn pauli_channel(rho: &CMat, weights: [f64; 4], site: usize, dims: &[usize]) -> Result<CMat> {
    let total: usize = dims.iter().product();
    if rho.rows() != total || dims.get(site) != Some(&2) {
        return Err(Error::DimensionMismatch {
            expected: total,
            found: rho.rows(),
        });
    }
    let mut out = CMat::zeros(total, total);
    for (tag, w) in PauliTag::ALL.into_iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let u = embed(&tag.pauli(), site, dims);
        out = &out + &rho.conjugate_by(&u).scale_real(w);
    }
    Ok(out)
}

/// `ρ ↦ (1 − p)ρ + p · Tr_q(ρ) ⊗ I/2` on qubit `qubit` of a multi-qubit state.
pub fn depolarize(rho: &CMat, p: f64, qubit: usize, dims: &[usize]) -> Result<CMat> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange { name: "p", value: p });
    }
    pauli_channel(rho, NoiseModel { p }.pauli_weights(), qubit, dims)
}

/// Bell weights after one depolarizing transit with single-pass QBER `e`.
pub fn bell_diagonal_after_one_pass(e: f64) -> Result<LambdaVec> {
    if !(0.0..=1.0 / 3.0).contains(&e) {
        return Err(Error::OutOfRange { name: "e", value: e });
    }
    LambdaVec::depolarizing(e)
}

/// Bell-error distribution `(q_I, q_X, q_Y, q_Z)` when both halves of a pair
/// cross the channel once each.
pub fn bell_error_after_two_passes(e: f64) -> Result<[f64; 4]> {
    if !(0.0..=1.0 / 3.0).contains(&e) {
        return Err(Error::OutOfRange { name: "e", value: e });
    }
    let p = 2.0 * e;
    let a = 1.0 - 0.75 * p;
    let b = 0.25 * p;
    let err = 2.0 * a * b + 2.0 * b * b;
    Ok([a * a + 3.0 * b * b, err, err, err])
}

/// CNOT with `control` on one qubit and target Eve's register.
fn cnot_into_e(control: usize) -> CMat {
    let mut m = CMat::zeros(8, 8);
    for i in 0..8 {
        let bits = [(i >> 2) & 1, (i >> 1) & 1, i & 1];
        let mut out = bits;
        out[SITE_E] ^= bits[control];
        let j = (out[0] << 2) | (out[1] << 1) | out[2];
        m[(j, i)] = r(1.0);
    }
    m
}

/// `(|01⟩|1⟩ − |10⟩|0⟩)/√2` over A ⊗ B ⊗ E: the singlet after Eve's first CNOT.
pub fn double_cnot_joint_state() -> CVec {
    let start = bell(BellLabel::PsiMinus).kron(&CVec::basis(2, 0));
    cnot_into_e(SITE_B).apply(&start)
}

/// Single-qubit measurement basis for eavesdropping checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::X, Basis::Y, Basis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Eigenvectors for outcomes `+1` and `−1`.
    pub fn eigenvectors(self) -> [CVec; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Basis::X => [CVec::from_real(&[s, s]), CVec::from_real(&[s, -s])],
            Basis::Y => [
                CVec::new(vec![r(s), c(0.0, s)]),
                CVec::new(vec![r(s), c(0.0, -s)]),
            ],
            Basis::Z => [CVec::basis(2, 0), CVec::basis(2, 1)],
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::ALL[rng.random_range(0..3)]
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::X => "X",
            Basis::Y => "Y",
            Basis::Z => "Z",
        })
    }
}

/// Joint outcome probabilities `(++, +−, −+, −−)` for A and B measured in `basis`.
pub fn product_basis_distribution(rho_ab: &CMat, basis: Basis) -> [f64; 4] {
    let vecs = basis.eigenvectors();
    let mut p = [0.0; 4];
    for (ia, va) in vecs.iter().enumerate() {
        for (ib, vb) in vecs.iter().enumerate() {
            let v = va.kron(vb);
            p[2 * ia + ib] = v.inner(&rho_ab.apply(&v)).re.max(0.0);
        }
    }
    p
}

/// Bell-measurement outcome probabilities in `BellLabel` order.
pub fn bell_distribution(rho_ab: &CMat) -> [f64; 4] {
    BellLabel::ALL.map(|l| {
        let v = bell(l);
        v.inner(&rho_ab.apply(&v)).re.max(0.0)
    })
}

fn outcome_pair(index: usize) -> (i8, i8) {
    let sign = |bit: usize| if bit == 0 { 1 } else { -1 };
    (sign(index >> 1), sign(index & 1))
}

/// The quantum channel between Alice and Bob together with Eve.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Link {
    pub noise: NoiseModel,
    pub adversary: Adversary,
}

impl Link {
    pub fn new(noise: NoiseModel, adversary: Adversary) -> Self {
        Self { noise, adversary }
    }

    /// ABE state after qubit B reaches Bob. `attacked` selects whether an
    /// intercept-resend adversary touched this particular qubit.
    pub fn first_pass(&self, attacked: bool) -> Result<CMat> {
        let start = bell(BellLabel::PsiMinus).kron(&CVec::basis(2, 0)).projector();
        let rho = depolarize(&start, self.noise.p, SITE_B, &ABE)?;
        match self.adversary {
            Adversary::None => Ok(rho),
            Adversary::Collective { lambdas } => pauli_channel(&rho, lambdas.pauli_weights(), SITE_B, &ABE),
            Adversary::DoubleCnot => Ok(rho.conjugate_by(&cnot_into_e(SITE_B))),
            Adversary::InterceptResend { .. } if attacked => {
                pauli_channel(&rho, INTERCEPT_RESEND_WEIGHTS, SITE_B, &ABE)
            }
            Adversary::InterceptResend { .. } => Ok(rho),
        }
    }

    /// Two-qubit state shared after the first transit.
    pub fn first_pass_ab(&self, attacked: bool) -> Result<CMat> {
        partial_trace(&self.first_pass(attacked)?, &ABE, &[SITE_A, SITE_B])
    }

    /// State Bob holds after Alice applies `local_a` and sends qubit A back.
    pub fn round_trip(&self, local_a: &CMat, attacked: bool) -> Result<CMat> {
        let rho = self.first_pass(attacked)?;
        let rho = rho.conjugate_by(&embed(local_a, SITE_A, &ABE));
        let mut rho = depolarize(&rho, self.noise.p, SITE_A, &ABE)?;
        if self.adversary == Adversary::DoubleCnot {
            rho = rho.conjugate_by(&cnot_into_e(SITE_A));
        }
        partial_trace(&rho, &ABE, &[SITE_A, SITE_B])
    }

    pub fn check_distribution(&self, basis: Basis, attacked: bool) -> Result<[f64; 4]> {
        Ok(product_basis_distribution(&self.first_pass_ab(attacked)?, basis))
    }

    /// Samples Alice's and Bob's `±1` outcomes for a first-round check pair.
    pub fn sample_check_pair<R: Rng + ?Sized>(
        &self,
        basis: Basis,
        attacked: bool,
        rng: &mut R,
    ) -> Result<(i8, i8)> {
        let p = self.check_distribution(basis, attacked)?;
        Ok(outcome_pair(categorical(rng, &p)))
    }
}

/// Check-pair sample on a noiseless channel with the given adversary
/// (intercept-resend counts as having touched this pair).
pub fn sample_check_pair<R: Rng + ?Sized>(adversary: Adversary, basis: Basis, rng: &mut R) -> Result<(i8, i8)> {
    Link::new(NoiseModel::noiseless(), adversary).sample_check_pair(basis, true, rng)
}
