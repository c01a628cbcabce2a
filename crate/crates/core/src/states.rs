//! Named states and operators of the protocol: Bell states, encoders, the
//! phase unitary, the two measurement observables and the Alice-Eve states.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlin::{
    c, embed, identity2, partial_trace, r, sigma_x, sigma_y, sigma_z, tensor, CMat, CVec, C64,
    TOL,
};

/// The four Bell states in the fixed order used by the dense-coding map
/// (`PsiMinus` ↔ 00, `PsiPlus` ↔ 01, `PhiMinus` ↔ 10, `PhiPlus` ↔ 11).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BellLabel {
    PsiMinus,
    PsiPlus,
    PhiMinus,
    PhiPlus,
}

impl BellLabel {
    pub const ALL: [BellLabel; 4] = [
        BellLabel::PsiMinus,
        BellLabel::PsiPlus,
        BellLabel::PhiMinus,
        BellLabel::PhiPlus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn symbol(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for BellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BellLabel::PsiMinus => "psi-",
            BellLabel::PsiPlus => "psi+",
            BellLabel::PhiMinus => "phi-",
            BellLabel::PhiPlus => "phi+",
        };
        f.write_str(s)
    }
}

pub fn bell(label: BellLabel) -> CVec {
    let s = FRAC_1_SQRT_2;
    match label {
        BellLabel::PsiMinus => CVec::from_real(&[0.0, s, -s, 0.0]),
        BellLabel::PsiPlus => CVec::from_real(&[0.0, s, s, 0.0]),
        BellLabel::PhiMinus => CVec::from_real(&[s, 0.0, 0.0, -s]),
        BellLabel::PhiPlus => CVec::from_real(&[s, 0.0, 0.0, s]),
    }
}

/// Identifies which Bell state a two-qubit vector is (up to global phase).
pub fn identify_bell(v: &CVec) -> Option<BellLabel> {
    BellLabel::ALL
        .into_iter()
        .find(|&l| bell(l).same_ray(v))
}

/// Single-qubit Pauli tags of the dense-coding frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliTag {
    I,
    X,
    Y,
    Z,
}

impl PauliTag {
    pub const ALL: [PauliTag; 4] = [PauliTag::I, PauliTag::X, PauliTag::Y, PauliTag::Z];

    /// Two-bit symbol carried by this encoder: I, σz, σx, iσy ↔ 00, 01, 10, 11.
    pub fn symbol(self) -> u8 {
        match self {
            PauliTag::I => 0,
            PauliTag::Z => 1,
            PauliTag::X => 2,
            PauliTag::Y => 3,
        }
    }

    pub fn from_symbol(symbol: u8) -> Result<Self> {
        match symbol {
            0 => Ok(PauliTag::I),
            1 => Ok(PauliTag::Z),
            2 => Ok(PauliTag::X),
            3 => Ok(PauliTag::Y),
            other => Err(Error::OutOfRange {
                name: "two-bit symbol",
                value: other as f64,
            }),
        }
    }

    /// Bell state obtained by applying this encoder to qubit A of `|ψ⁻⟩`.
    pub fn encoded_bell(self) -> BellLabel {
        BellLabel::from_index(self.symbol() as usize)
    }

    /// Hermitian Pauli matrix (σy rather than iσy for `Y`).
    pub fn pauli(self) -> CMat {
        match self {
            PauliTag::I => identity2(),
            PauliTag::X => sigma_x(),
            PauliTag::Y => sigma_y(),
            PauliTag::Z => sigma_z(),
        }
    }
}

impl fmt::Display for PauliTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PauliTag::I => "I",
            PauliTag::X => "X",
            PauliTag::Y => "Y",
            PauliTag::Z => "Z",
        };
        f.write_str(s)
    }
}

/// Dense-coding encoder: `I`, `σx`, `iσy`, `σz`.
pub fn pauli_frame_unitary(tag: PauliTag) -> CMat {
    match tag {
        PauliTag::Y => CMat::from_rows(&[&[r(0.0), r(1.0)], &[r(-1.0), r(0.0)]]),
        other => other.pauli(),
    }
}

/// `U₀ = I`, `U₁ = σx`.
pub fn encoding_unitary(bit: u8) -> CMat {
    assert!(bit <= 1, "bit must be 0 or 1");
    if bit == 0 {
        identity2()
    } else {
        sigma_x()
    }
}

/// `diag(1, e^{iθ})`.
pub fn phase_unitary(theta: f64) -> CMat {
    CMat::diagonal(&[r(1.0), C64::from_polar(1.0, theta)])
}

/// Operator applied to qubit A of a message pair: encode, then accumulate
/// phase over `n_passes` traversals. The other order would flip the sign of
/// the phase on bit-1 pairs.
pub fn encode_and_sense(bit: u8, n_passes: u32, theta: f64) -> CMat {
    phase_unitary(n_passes as f64 * theta).matmul(&encoding_unitary(bit))
}

/// `(|01⟩ − e^{iNθ}|10⟩)/√2` for bit 0 and `(|00⟩ − e^{iNθ}|11⟩)/√2` for bit 1.
pub fn probe_state(bit: u8, n_passes: u32, theta: f64) -> CVec {
    assert!(bit <= 1, "bit must be 0 or 1");
    let s = r(FRAC_1_SQRT_2);
    let ph = -C64::from_polar(FRAC_1_SQRT_2, n_passes as f64 * theta);
    let zero = r(0.0);
    if bit == 0 {
        CVec::new(vec![zero, s, ph, zero])
    } else {
        CVec::new(vec![s, zero, zero, ph])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObservableKind {
    O1,
    O2,
}

impl ObservableKind {
    pub const ALL: [ObservableKind; 2] = [ObservableKind::O1, ObservableKind::O2];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ObservableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObservableKind::O1 => "O1",
            ObservableKind::O2 => "O2",
        })
    }
}

impl std::str::FromStr for ObservableKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "O1" | "o1" => Ok(ObservableKind::O1),
            "O2" | "o2" => Ok(ObservableKind::O2),
            other => Err(Error::InvalidConfig(format!("unknown observable {other:?}"))),
        }
    }
}

/// Measurement observable with its detector-ordered eigensystem.
#[derive(Debug, Clone)]
pub struct Observable {
    pub kind: ObservableKind,
    pub matrix: CMat,
    /// Eigenvalue seen by detector `k + 1`.
    pub eigenvalues: [f64; 4],
    /// Normalized eigenvector of detector `k + 1`.
    pub eigenvectors: [CVec; 4],
}

pub fn observable(which: ObservableKind) -> Observable {
    let s = FRAC_1_SQRT_2;
    let z = r(0.0);
    let (matrix, raw): (CMat, [[C64; 4]; 4]) = match which {
        ObservableKind::O1 => (
            tensor(&sigma_x(), &sigma_x()),
            [
                [r(-1.0), z, z, r(1.0)],
                [r(1.0), z, z, r(1.0)],
                [z, r(1.0), r(1.0), z],
                [z, r(-1.0), r(1.0), z],
            ],
        ),
        ObservableKind::O2 => (
            tensor(&sigma_y(), &sigma_x()),
            [
                [c(0.0, 1.0), z, z, r(1.0)],
                [c(0.0, -1.0), z, z, r(1.0)],
                [z, c(0.0, 1.0), r(1.0), z],
                [z, c(0.0, -1.0), r(1.0), z],
            ],
        ),
    };
    let eigenvectors = raw.map(|v| CVec::new(v.to_vec()).scale(r(s)));
    let eigenvalues = std::array::from_fn(|k| {
        let v = &eigenvectors[k];
        v.inner(&matrix.apply(v)).re
    });
    Observable {
        kind: which,
        matrix,
        eigenvalues,
        eigenvectors,
    }
}

/// Anything the Born rule can be evaluated on.
pub trait BornState {
    fn dim(&self) -> usize;
    /// `⟨v|ρ|v⟩` (or `|⟨v|ψ⟩|²`).
    fn born(&self, v: &CVec) -> f64;
}

impl BornState for CVec {
    fn dim(&self) -> usize {
        CVec::dim(self)
    }
    fn born(&self, v: &CVec) -> f64 {
        v.inner(self).norm_sqr()
    }
}

impl BornState for CMat {
    fn dim(&self) -> usize {
        self.rows()
    }
    fn born(&self, v: &CVec) -> f64 {
        v.inner(&self.apply(v)).re
    }
}

/// Detector click probabilities (detectors 1..4) for a two-qubit state.
pub fn detector_distribution<S: BornState + ?Sized>(state: &S, which: ObservableKind) -> [f64; 4] {
    assert_eq!(state.dim(), 4, "detector distribution needs a two-qubit state");
    let obs = observable(which);
    let mut p = [0.0; 4];
    for (k, v) in obs.eigenvectors.iter().enumerate() {
        p[k] = state.born(v).max(0.0);
    }
    p
}

/// Equal mixture of the bit-0 and bit-1 probe states.
pub fn mixed_probe(n_passes: u32, theta: f64) -> CMat {
    let a = probe_state(0, n_passes, theta).projector();
    let b = probe_state(1, n_passes, theta).projector();
    (&a + &b).scale_real(0.5)
}

/// Bell-diagonal weights `(λ₁, λ₂, λ₃, λ₄)` on `(ψ⁻, ψ⁺, φ⁻, φ⁺)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct LambdaVec([f64; 4]);

impl TryFrom<[f64; 4]> for LambdaVec {
    type Error = Error;

    fn try_from(values: [f64; 4]) -> Result<Self> {
        Self::new(values)
    }
}

impl From<LambdaVec> for [f64; 4] {
    fn from(l: LambdaVec) -> Self {
        l.0
    }
}

impl LambdaVec {
    pub fn new(values: [f64; 4]) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidDistribution(format!("weight {bad} outside [0, 1]")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > TOL.validation {
            return Err(Error::InvalidDistribution(format!("weights sum to {sum}")));
        }
        Ok(Self(values))
    }

    pub fn ideal() -> Self {
        Self([1.0, 0.0, 0.0, 0.0])
    }

    /// Equal QBER `e` in all three bases: `(1 − 3e/2, e/2, e/2, e/2)`.
    pub fn depolarizing(e: f64) -> Result<Self> {
        if !(0.0..=2.0 / 3.0).contains(&e) {
            return Err(Error::OutOfRange { name: "e", value: e });
        }
        let t = 0.5 * e;
        Self::new([1.0 - 3.0 * t, t, t, t])
    }

    /// Weights solved from the three per-basis error rates.
    pub fn from_qbers(ex: f64, ey: f64, ez: f64) -> Result<Self> {
        let l2 = 0.5 * (ex + ey - ez);
        let l3 = 0.5 * (ey + ez - ex);
        let l4 = 0.5 * (ex + ez - ey);
        Self::new([1.0 - l2 - l3 - l4, l2, l3, l4])
    }

    pub fn values(&self) -> [f64; 4] {
        self.0
    }

    pub fn get(&self, label: BellLabel) -> f64 {
        self.0[label.index()]
    }

    pub fn epsilon_x(&self) -> f64 {
        self.0[1] + self.0[3]
    }

    pub fn epsilon_y(&self) -> f64 {
        self.0[1] + self.0[2]
    }

    pub fn epsilon_z(&self) -> f64 {
        self.0[2] + self.0[3]
    }

    /// Equivalent Pauli-channel weights `(I, X, Y, Z)` acting on qubit B of `|ψ⁻⟩`.
    pub fn pauli_weights(&self) -> [f64; 4] {
        let [l1, l2, l3, l4] = self.0;
        [l1, l3, l4, l2]
    }

    /// `Σ λᵢ |Ψᵢ⟩⟨Ψᵢ|`.
    pub fn bell_diagonal(&self) -> CMat {
        BellLabel::ALL
            .into_iter()
            .fold(CMat::zeros(4, 4), |acc, l| {
                &acc + &bell(l).projector().scale_real(self.get(l))
            })
    }
}

/// `Σ √λᵢ |Ψᵢ⟩_AB |Eᵢ⟩`, ordered A ⊗ B ⊗ E (dims 2, 2, 4).
pub fn purification_abe(lambdas: &LambdaVec) -> CVec {
    let mut out = CVec::zeros(16);
    for l in BellLabel::ALL {
        let w = lambdas.get(l).sqrt();
        if w == 0.0 {
            continue;
        }
        let term = bell(l).kron(&CVec::basis(4, l.index())).scale(r(w));
        out = CVec::new(
            out.as_slice()
                .iter()
                .zip(term.as_slice())
                .map(|(a, b)| a + b)
                .collect(),
        );
    }
    out
}

/// Alice-Eve state after Alice encodes `bit` and senses `n_passes` times
/// (8-dim, A ⊗ E).
pub fn rho_ae(lambdas: &LambdaVec, bit: u8, n_passes: u32, theta: f64) -> Result<CMat> {
    let lambdas = LambdaVec::new(lambdas.values())?;
    if bit > 1 {
        return Err(Error::OutOfRange {
            name: "bit",
            value: bit as f64,
        });
    }
    let abe = purification_abe(&lambdas).projector();
    let ae = partial_trace(&abe, &[2, 2, 4], &[0, 2])?;
    let u = embed(&encode_and_sense(bit, n_passes, theta), 0, &[2, 4]);
    Ok(ae.conjugate_by(&u))
}

/// Eve's view of a uniformly random message bit: `½ρ_AE,0 + ½ρ_AE,1`.
pub fn rho_ae_mixture(lambdas: &LambdaVec, n_passes: u32, theta: f64) -> Result<CMat> {
    let a = rho_ae(lambdas, 0, n_passes, theta)?;
    let b = rho_ae(lambdas, 1, n_passes, theta)?;
    Ok((&a + &b).scale_real(0.5))
}
