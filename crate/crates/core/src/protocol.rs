//! The six-step protocol as a staged session, the two-step dense-coding
//! baseline, and the per-pair transcript.
//!
//! Steps: distribute pairs and assign roles; first check round on
//! single-basis measurements; encode the message and sense the phase on qubit
//! A; second check round on pairs carrying random Pauli frames; final
//! measurement of the message pairs with a random observable; estimation.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{bell_distribution, Adversary, Basis, Link, NoiseModel};
use crate::error::{Error, Result};
use crate::estimate::{floor_count, wrap_2pi, CountTable, EstimationResult, Estimator};
use crate::rng::{categorical, path_rng, stream_id, SimRng};
use crate::states::{
    detector_distribution, encode_and_sense, pauli_frame_unitary, BellLabel, ObservableKind, PauliTag,
};

/// Default abort threshold on a round's pooled QBER.
pub const DEFAULT_QBER_THRESHOLD: f64 = 0.079;
/// Default width, in standard errors, of the basis-asymmetry tripwire.
pub const DEFAULT_ASYMMETRY_SIGMA: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Qisac,
    TwoStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Total EPR pairs.
    pub m: usize,
    /// Fraction of pairs carrying the message.
    pub p_e: f64,
    /// Probability of measuring O1.
    pub p_o: f64,
    pub n_passes: u32,
    /// Fraction of message pairs that pass the sensor once.
    pub single_pass_fraction: f64,
    pub theta_true: f64,
    /// Shift added before sensing and removed after estimation.
    pub guard_angle: f64,
    /// Single-pass QBER of the depolarizing channel.
    pub e: f64,
    pub adversary: Adversary,
    pub qber_threshold_1: f64,
    pub qber_threshold_2: f64,
    pub asymmetry_sigma: f64,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            m: 1000,
            p_e: 0.8,
            p_o: 0.5,
            n_passes: 1,
            single_pass_fraction: 0.1,
            theta_true: 1.0,
            guard_angle: 0.0,
            e: 0.0,
            adversary: Adversary::None,
            qber_threshold_1: DEFAULT_QBER_THRESHOLD,
            qber_threshold_2: DEFAULT_QBER_THRESHOLD,
            asymmetry_sigma: DEFAULT_ASYMMETRY_SIGMA,
            seed: 42,
        }
    }
}

/// Pair counts per role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub check1: usize,
    pub check2: usize,
    pub message: usize,
    /// Message pairs sensing once; the rest sense `n_passes` times.
    pub single_pass: usize,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if !(self.p_e > 0.0 && self.p_e < 1.0) {
            return bad(format!("p_e = {} must lie in (0, 1)", self.p_e));
        }
        if !(0.0..=1.0).contains(&self.p_o) {
            return bad(format!("p_o = {} must lie in [0, 1]", self.p_o));
        }
        if self.n_passes == 0 {
            return bad("n_passes must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.single_pass_fraction) {
            return bad(format!(
                "single_pass_fraction = {} must lie in [0, 1]",
                self.single_pass_fraction
            ));
        }
        for (name, t) in [
            ("qber_threshold_1", self.qber_threshold_1),
            ("qber_threshold_2", self.qber_threshold_2),
        ] {
            if !(0.0..=0.5).contains(&t) {
                return bad(format!("{name} = {t} must lie in [0, 0.5]"));
            }
        }
        if !self.theta_true.is_finite() || !self.guard_angle.is_finite() {
            return bad("theta_true and guard_angle must be finite".into());
        }
        if self.asymmetry_sigma.is_nan() || self.asymmetry_sigma < 0.0 {
            return bad("asymmetry_sigma must be nonnegative".into());
        }
        NoiseModel::from_qber(self.e).map_err(|_| Error::InvalidConfig(format!("e = {} is out of range", self.e)))?;
        if let Adversary::InterceptResend { intercepted } = self.adversary {
            if intercepted > self.m {
                return bad(format!("intercepted = {intercepted} exceeds m = {}", self.m));
            }
        }
        Ok(())
    }

    /// Floors every fractional count; remainders go to message pairs.
    pub fn partition(&self) -> Partition {
        let check = floor_count((1.0 - self.p_e) * self.m as f64 / 2.0);
        let message = self.m - 2 * check;
        Partition {
            check1: check,
            check2: check,
            message,
            single_pass: floor_count(self.single_pass_fraction * message as f64),
        }
    }

    pub fn link(&self) -> Result<Link> {
        Ok(Link::new(NoiseModel::from_qber(self.e)?, self.adversary))
    }
}

/// Message payload: bits for the integrated protocol, two-bit symbols for the
/// dense-coding baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageBits(Vec<u8>);

impl MessageBits {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        Self::checked(bits, 1)
    }

    pub fn symbols(symbols: Vec<u8>) -> Result<Self> {
        Self::checked(symbols, 3)
    }

    fn checked(values: Vec<u8>, max: u8) -> Result<Self> {
        if let Some(&v) = values.iter().find(|&&v| v > max) {
            return Err(Error::OutOfRange {
                name: "message symbol",
                value: v as f64,
            });
        }
        Ok(Self(values))
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| rng.random_range(0..2u8)).collect())
    }

    pub fn random_symbols<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| rng.random_range(0..4u8)).collect())
    }

    /// Reads digits from text, ignoring whitespace. Digits above `max` are
    /// rejected with their line number.
    pub fn parse(text: &str, two_bit: bool) -> Result<Self> {
        let max = if two_bit { 3 } else { 1 };
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("");
            for ch in line.chars().filter(|c| !c.is_whitespace()) {
                match ch.to_digit(10) {
                    Some(d) if d <= max => out.push(d as u8),
                    _ => {
                        return Err(Error::Parse {
                            line: i + 1,
                            message: format!("unexpected character {ch:?} in message"),
                        })
                    }
                }
            }
        }
        Ok(Self(out))
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Bit carried by a detector click: detectors 3 and 4 mean `|ψ⁻⟩` (bit 0),
/// detectors 1 and 2 mean `|φ⁻⟩` (bit 1), for either observable.
pub fn decode_bit(_which: ObservableKind, detector: u8) -> u8 {
    match detector {
        3 | 4 => 0,
        1 | 2 => 1,
        other => panic!("detector index {other} out of range"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Check1,
    Check2,
    Message,
}

impl Role {
    fn token(self) -> &'static str {
        match self {
            Role::Check1 => "check1",
            Role::Check2 => "check2",
            Role::Message => "message",
        }
    }
}

/// What was done to a pair at measurement time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    Basis(Basis),
    Frame(PauliTag),
    Observable(ObservableKind),
    BellMeasurement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    /// Alice's and Bob's `±1` results.
    Signs(i8, i8),
    Bell(BellLabel),
    /// Detector index 1..4.
    Detector(u8),
}

/// One line of the transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub index: usize,
    pub role: Role,
    pub passes: Option<u32>,
    pub setting: Option<Setting>,
    pub outcome: Option<Outcome>,
    /// Bob's decoded value (bit, symbol, or measured frame symbol).
    pub bit: Option<u8>,
    /// Value Alice sent.
    pub sent: Option<u8>,
}

impl PairRecord {
    fn new(index: usize, role: Role) -> Self {
        Self {
            index,
            role,
            passes: None,
            setting: None,
            outcome: None,
            bit: None,
            sent: None,
        }
    }
}

fn dash<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn sign_char(s: i8) -> char {
    if s > 0 {
        '+'
    } else {
        '-'
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::Basis(b) => f.write_str(match b {
                Basis::X => "x",
                Basis::Y => "y",
                Basis::Z => "z",
            }),
            Setting::Frame(t) => write!(f, "{t}"),
            Setting::Observable(o) => write!(f, "{o}"),
            Setting::BellMeasurement => f.write_str("bell"),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Signs(a, b) => write!(f, "{}{}", sign_char(*a), sign_char(*b)),
            Outcome::Bell(l) => write!(f, "{l}"),
            Outcome::Detector(d) => write!(f, "{d}"),
        }
    }
}

impl fmt::Display for PairRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {} {}",
            self.index,
            self.role.token(),
            dash(self.passes),
            dash(self.setting),
            dash(self.outcome),
            dash(self.bit),
            dash(self.sent)
        )
    }
}

fn parse_setting(s: &str) -> Option<Setting> {
    Some(match s {
        "x" => Setting::Basis(Basis::X),
        "y" => Setting::Basis(Basis::Y),
        "z" => Setting::Basis(Basis::Z),
        "I" => Setting::Frame(PauliTag::I),
        "X" => Setting::Frame(PauliTag::X),
        "Y" => Setting::Frame(PauliTag::Y),
        "Z" => Setting::Frame(PauliTag::Z),
        "bell" => Setting::BellMeasurement,
        other => Setting::Observable(ObservableKind::from_str(other).ok()?),
    })
}

fn parse_outcome(s: &str) -> Option<Outcome> {
    let sign = |c: char| match c {
        '+' => Some(1i8),
        '-' => Some(-1i8),
        _ => None,
    };
    if let Some(l) = BellLabel::ALL.into_iter().find(|l| l.to_string() == s) {
        return Some(Outcome::Bell(l));
    }
    let chars: Vec<char> = s.chars().collect();
    match chars.as_slice() {
        [a, b] => Some(Outcome::Signs(sign(*a)?, sign(*b)?)),
        [d] => match d.to_digit(10)? {
            d @ 1..=4 => Some(Outcome::Detector(d as u8)),
            _ => None,
        },
        _ => None,
    }
}

impl FromStr for PairRecord {
    type Err = String;

    fn from_str(line: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(format!("expected 7 fields, found {}", fields.len()));
        }
        fn opt<T>(s: &str, parse: impl Fn(&str) -> Option<T>, what: &str) -> std::result::Result<Option<T>, String> {
            if s == "-" {
                Ok(None)
            } else {
                parse(s).map(Some).ok_or_else(|| format!("bad {what} {s:?}"))
            }
        }
        let role = match fields[1] {
            "check1" => Role::Check1,
            "check2" => Role::Check2,
            "message" => Role::Message,
            other => return Err(format!("bad role {other:?}")),
        };
        Ok(Self {
            index: fields[0].parse().map_err(|_| format!("bad index {:?}", fields[0]))?,
            role,
            passes: opt(fields[2], |s| s.parse().ok(), "pass count")?,
            setting: opt(fields[3], parse_setting, "setting")?,
            outcome: opt(fields[4], parse_outcome, "outcome")?,
            bit: opt(fields[5], |s| s.parse().ok(), "bit")?,
            sent: opt(fields[6], |s| s.parse().ok(), "sent value")?,
        })
    }
}

/// Header line of the record file.
pub const RECORD_HEADER: &str = "# index role passes setting outcome bit sent";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Distributed,
    Round1Checked,
    Encoded,
    Round2Checked,
    Measured,
    Aborted,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Distributed => "distributed",
            Stage::Round1Checked => "round1_checked",
            Stage::Encoded => "encoded",
            Stage::Round2Checked => "round2_checked",
            Stage::Measured => "measured",
            Stage::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    /// Pooled QBER above the round threshold.
    Qber,
    /// σx or σy errors significantly above σz errors.
    BasisAsymmetry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abort {
    pub round: u8,
    pub reason: AbortReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Round1Stats {
    /// Pairs checked per basis (x, y, z).
    pub checked: [usize; 3],
    pub errors: [usize; 3],
    pub epsilon_x: f64,
    pub epsilon_y: f64,
    pub epsilon_z: f64,
    pub pooled: f64,
    /// `max(ε_x, ε_y) − ε_z − σ·SE`; positive means the tripwire fired.
    pub asymmetry_margin: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Round2Stats {
    pub checked: usize,
    pub errors: usize,
    pub qber: f64,
    pub passed: bool,
}

fn rate(errors: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        errors as f64 / n as f64
    }
}

/// Born distributions for every pair configuration the session can meet.
#[derive(Debug, Clone)]
struct Distributions {
    check1: HashMap<(usize, bool), [f64; 4]>,
    check2: HashMap<(u8, bool), [f64; 4]>,
    /// Keyed by (value, passes, attacked): O1 and O2 detector distributions,
    /// or a Bell distribution in slot 0 for the baseline.
    message: HashMap<(u8, u32, bool), [[f64; 4]; 2]>,
}

impl Distributions {
    fn build(config: &ProtocolConfig, mode: Mode) -> Result<Self> {
        let link = config.link()?;
        let attack_flags: &[bool] = match config.adversary {
            Adversary::InterceptResend { .. } => &[false, true],
            _ => &[false],
        };
        let mut check1 = HashMap::new();
        let mut check2 = HashMap::new();
        let mut message = HashMap::new();
        let theta = config.theta_true + config.guard_angle;
        for &attacked in attack_flags {
            for b in Basis::ALL {
                check1.insert((b.index(), attacked), link.check_distribution(b, attacked)?);
            }
            for tag in PauliTag::ALL {
                let rho = link.round_trip(&pauli_frame_unitary(tag), attacked)?;
                check2.insert((tag.symbol(), attacked), bell_distribution(&rho));
            }
            match mode {
                Mode::Qisac => {
                    let mut passes = vec![1, config.n_passes];
                    passes.dedup();
                    for bit in 0..=1u8 {
                        for &n in &passes {
                            let rho = link.round_trip(&encode_and_sense(bit, n, theta), attacked)?;
                            message.insert(
                                (bit, n, attacked),
                                ObservableKind::ALL.map(|o| detector_distribution(&rho, o)),
                            );
                        }
                    }
                }
                Mode::TwoStep => {
                    for tag in PauliTag::ALL {
                        message.insert((tag.symbol(), 0, attacked), [check2[&(tag.symbol(), attacked)], [0.0; 4]]);
                    }
                }
            }
        }
        Ok(Self {
            check1,
            check2,
            message,
        })
    }
}

const ROLES_STREAM: u64 = 0;
const ROUND1_STREAM: u64 = 1;
const ENCODE_STREAM: u64 = 2;
const ROUND2_STREAM: u64 = 3;
const MEASURE_STREAM: u64 = 4;

/// A protocol run in progress. Stages must be called in order; each stage
/// draws from its own random stream so that, for example, adding an
/// adversary does not reshuffle the role assignment.
#[derive(Debug, Clone)]
pub struct Session {
    config: ProtocolConfig,
    mode: Mode,
    dists: Distributions,
    stage: Stage,
    records: Vec<PairRecord>,
    attacked: Vec<bool>,
    /// Payload value per pair (message value, or frame symbol for check2).
    payload: Vec<u8>,
    round1: Option<Round1Stats>,
    round2: Option<Round2Stats>,
    abort: Option<Abort>,
    counts: CountTable,
}

impl Session {
    /// Step 1: validates the configuration, assigns roles uniformly at random,
    /// and marks the pairs an intercept-resend adversary touches.
    pub fn new(config: &ProtocolConfig, message: &MessageBits, mode: Mode) -> Result<Self> {
        config.validate()?;
        let part = config.partition();
        if message.len() != part.message {
            return Err(Error::InvalidConfig(format!(
                "message has {} values but the configuration has {} message pairs",
                message.len(),
                part.message
            )));
        }
        let max = if mode == Mode::Qisac { 1 } else { 3 };
        if message.as_slice().iter().any(|&v| v > max) {
            return Err(Error::InvalidConfig("message value out of range for this mode".into()));
        }
        let dists = Distributions::build(config, mode)?;

        let mut rng = path_rng(config.seed, &[ROLES_STREAM]);
        let mut order: Vec<usize> = (0..config.m).collect();
        order.shuffle(&mut rng);
        let mut roles = vec![Role::Message; config.m];
        for &i in &order[..part.check1] {
            roles[i] = Role::Check1;
        }
        for &i in &order[part.check1..part.check1 + part.check2] {
            roles[i] = Role::Check2;
        }
        let mut attacked = vec![false; config.m];
        if let Adversary::InterceptResend { intercepted } = config.adversary {
            let mut targets: Vec<usize> = (0..config.m).collect();
            targets.shuffle(&mut rng);
            for &i in &targets[..intercepted] {
                attacked[i] = true;
            }
        }
        let mut payload = vec![0u8; config.m];
        let mut next = message.as_slice().iter();
        for (i, role) in roles.iter().enumerate() {
            if *role == Role::Message {
                payload[i] = *next.next().expect("message length checked");
            }
        }
        Ok(Self {
            config: config.clone(),
            mode,
            dists,
            stage: Stage::Distributed,
            records: roles.iter().enumerate().map(|(i, &r)| PairRecord::new(i, r)).collect(),
            attacked,
            payload,
            round1: None,
            round2: None,
            abort: None,
            counts: CountTable::new(),
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    fn expect(&self, expected: Stage) -> Result<()> {
        if self.stage == expected {
            Ok(())
        } else {
            Err(Error::StageOrder {
                expected: expected.name(),
                actual: self.stage.name(),
            })
        }
    }

    fn indices(&self, role: Role) -> Vec<usize> {
        self.records.iter().filter(|r| r.role == role).map(|r| r.index).collect()
    }

    /// Step 2: each first-round check pair is measured in a random basis;
    /// a singlet should give opposite signs in every basis.
    pub fn round1_check(&mut self) -> Result<Round1Stats> {
        self.expect(Stage::Distributed)?;
        let mut rng = path_rng(self.config.seed, &[ROUND1_STREAM]);
        let mut checked = [0usize; 3];
        let mut errors = [0usize; 3];
        for i in self.indices(Role::Check1) {
            let basis = Basis::random(&mut rng);
            let p = &self.dists.check1[&(basis.index(), self.attacked[i])];
            let k = categorical(&mut rng, p);
            let (a, b) = (if k >> 1 == 0 { 1 } else { -1 }, if k & 1 == 0 { 1 } else { -1 });
            checked[basis.index()] += 1;
            if a == b {
                errors[basis.index()] += 1;
            }
            let rec = &mut self.records[i];
            rec.setting = Some(Setting::Basis(basis));
            rec.outcome = Some(Outcome::Signs(a, b));
        }
        let eps = [0, 1, 2].map(|b| rate(errors[b], checked[b]));
        let total: usize = checked.iter().sum();
        let pooled = rate(errors.iter().sum(), total);
        let asymmetry_margin = self.asymmetry_margin(&checked, &eps, pooled);
        let mut passed = pooled <= self.config.qber_threshold_1;
        if !passed {
            self.abort = Some(Abort {
                round: 1,
                reason: AbortReason::Qber,
            });
        } else if asymmetry_margin.is_some_and(|m| m > 0.0) {
            passed = false;
            self.abort = Some(Abort {
                round: 1,
                reason: AbortReason::BasisAsymmetry,
            });
        }
        let stats = Round1Stats {
            checked,
            errors,
            epsilon_x: eps[0],
            epsilon_y: eps[1],
            epsilon_z: eps[2],
            pooled,
            asymmetry_margin,
            passed,
        };
        self.round1 = Some(stats);
        self.stage = if passed { Stage::Round1Checked } else { Stage::Aborted };
        Ok(stats)
    }

    /// Worst of the x and y bases against z, less `σ` pooled standard errors.
    fn asymmetry_margin(&self, checked: &[usize; 3], eps: &[f64; 3], pooled: f64) -> Option<f64> {
        let nz = checked[2];
        if nz == 0 {
            return None;
        }
        [0, 1]
            .into_iter()
            .filter(|&b| checked[b] > 0)
            .map(|b| {
                let se = (pooled * (1.0 - pooled) * (1.0 / checked[b] as f64 + 1.0 / nz as f64)).sqrt();
                eps[b] - eps[2] - self.config.asymmetry_sigma * se
            })
            .reduce(f64::max)
    }

    /// Step 3: message pairs get the encoder (and the sensing passes in the
    /// integrated protocol); second-round pairs get a random Pauli frame.
    pub fn encode_and_sense(&mut self) -> Result<()> {
        self.expect(Stage::Round1Checked)?;
        let mut rng = path_rng(self.config.seed, &[ENCODE_STREAM]);
        let part = self.config.partition();
        let mut message = self.indices(Role::Message);
        message.shuffle(&mut rng);
        for (k, &i) in message.iter().enumerate() {
            let rec = &mut self.records[i];
            rec.sent = Some(self.payload[i]);
            if self.mode == Mode::Qisac {
                rec.passes = Some(if k < part.single_pass { 1 } else { self.config.n_passes });
            }
        }
        for i in self.indices(Role::Check2) {
            let tag = PauliTag::ALL[rng.random_range(0..4)];
            self.payload[i] = tag.symbol();
            let rec = &mut self.records[i];
            rec.setting = Some(Setting::Frame(tag));
            rec.sent = Some(tag.symbol());
        }
        self.stage = Stage::Encoded;
        Ok(())
    }

    /// Step 4: Bell measurement of the second-round pairs against the
    /// declared frames.
    pub fn round2_check(&mut self) -> Result<Round2Stats> {
        self.expect(Stage::Encoded)?;
        let mut rng = path_rng(self.config.seed, &[ROUND2_STREAM]);
        let mut checked = 0;
        let mut errors = 0;
        for i in self.indices(Role::Check2) {
            let sent = self.payload[i];
            let p = &self.dists.check2[&(sent, self.attacked[i])];
            let label = BellLabel::from_index(categorical(&mut rng, p));
            checked += 1;
            if label.symbol() != sent {
                errors += 1;
            }
            let rec = &mut self.records[i];
            rec.outcome = Some(Outcome::Bell(label));
            rec.bit = Some(label.symbol());
        }
        let qber = rate(errors, checked);
        let passed = qber <= self.config.qber_threshold_2;
        if !passed {
            self.abort = Some(Abort {
                round: 2,
                reason: AbortReason::Qber,
            });
        }
        let stats = Round2Stats {
            checked,
            errors,
            qber,
            passed,
        };
        self.round2 = Some(stats);
        self.stage = if passed { Stage::Round2Checked } else { Stage::Aborted };
        Ok(stats)
    }

    /// Step 5: message pairs are measured and decoded.
    pub fn measure(&mut self) -> Result<()> {
        self.expect(Stage::Round2Checked)?;
        let mut rng = path_rng(self.config.seed, &[MEASURE_STREAM]);
        for i in self.indices(Role::Message) {
            let sent = self.payload[i];
            let attacked = self.attacked[i];
            match self.mode {
                Mode::Qisac => {
                    let passes = self.records[i].passes.expect("passes set at encoding");
                    let which = if rng.random::<f64>() < self.config.p_o {
                        ObservableKind::O1
                    } else {
                        ObservableKind::O2
                    };
                    let p = &self.dists.message[&(sent, passes, attacked)][which.index()];
                    let detector = categorical(&mut rng, p) as u8 + 1;
                    self.counts.record(passes, which, detector);
                    let rec = &mut self.records[i];
                    rec.setting = Some(Setting::Observable(which));
                    rec.outcome = Some(Outcome::Detector(detector));
                    rec.bit = Some(decode_bit(which, detector));
                }
                Mode::TwoStep => {
                    let p = &self.dists.message[&(sent, 0, attacked)][0];
                    let label = BellLabel::from_index(categorical(&mut rng, p));
                    let rec = &mut self.records[i];
                    rec.setting = Some(Setting::BellMeasurement);
                    rec.outcome = Some(Outcome::Bell(label));
                    rec.bit = Some(label.symbol());
                }
            }
        }
        self.stage = Stage::Measured;
        Ok(())
    }

    /// Step 6: closes the session. Phase estimation runs on the returned
    /// transcript.
    pub fn finish(self) -> Result<Transcript> {
        if self.stage != Stage::Measured && self.stage != Stage::Aborted {
            return Err(Error::StageOrder {
                expected: Stage::Measured.name(),
                actual: self.stage.name(),
            });
        }
        Ok(Transcript {
            config: self.config,
            mode: self.mode,
            records: self.records,
            round1: self.round1,
            round2: self.round2,
            abort: self.abort,
            counts: self.counts,
        })
    }

    /// Runs the remaining stages, stopping at an abort.
    pub fn run(mut self) -> Result<Transcript> {
        if self.stage == Stage::Distributed && !self.round1_check()?.passed {
            return self.finish();
        }
        if self.stage == Stage::Round1Checked {
            self.encode_and_sense()?;
        }
        if self.stage == Stage::Encoded && !self.round2_check()?.passed {
            return self.finish();
        }
        if self.stage == Stage::Round2Checked {
            self.measure()?;
        }
        self.finish()
    }
}

/// Full record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub config: ProtocolConfig,
    pub mode: Mode,
    pub records: Vec<PairRecord>,
    pub round1: Option<Round1Stats>,
    pub round2: Option<Round2Stats>,
    pub abort: Option<Abort>,
    /// Detector counts per pass group; empty for the baseline.
    pub counts: CountTable,
}

/// Machine-readable run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Mode,
    pub m: usize,
    pub partition: Partition,
    pub round1: Option<Round1Stats>,
    pub round2: Option<Round2Stats>,
    pub aborted: bool,
    pub abort: Option<Abort>,
    pub message_pairs: usize,
    pub decoded: usize,
    pub value_errors: usize,
    pub value_error_rate: Option<f64>,
    pub counts: CountTable,
    pub theta_true: f64,
    pub estimate: Option<EstimationResult>,
}

impl Transcript {
    pub fn aborted(&self) -> bool {
        self.abort.is_some()
    }

    pub fn messages(&self) -> impl Iterator<Item = &PairRecord> {
        self.records.iter().filter(|r| r.role == Role::Message)
    }

    /// Decoded message values, if the run reached the measurement.
    pub fn decoded(&self) -> Option<Vec<u8>> {
        self.messages().map(|r| r.bit).collect()
    }

    /// Pairs whose decoded value differs from the sent one.
    pub fn value_errors(&self) -> usize {
        self.messages()
            .filter(|r| matches!((r.bit, r.sent), (Some(b), Some(s)) if b != s))
            .count()
    }

    /// Phase estimate with the guard angle removed.
    pub fn estimate(&self, estimator: Estimator) -> Result<EstimationResult> {
        let mut est = estimator.apply(&self.counts)?;
        let shift = self.config.guard_angle;
        if shift != 0.0 {
            let period = match est.method {
                crate::estimate::Method::Expectation => {
                    TAU / self.counts.max_passes().unwrap_or(1) as f64
                }
                _ => TAU,
            };
            let unshift = |t: f64| (t - shift).rem_euclid(period);
            est.theta1 = est.theta1.map(unshift);
            est.theta2 = est.theta2.map(unshift);
            est.theta = unshift(est.theta);
        }
        Ok(est)
    }

    pub fn summary(&self) -> Summary {
        let decoded = self.messages().filter(|r| r.bit.is_some()).count();
        let errors = self.value_errors();
        let estimate = if self.mode == Mode::Qisac && !self.aborted() {
            self.estimate(Estimator::Mle).ok()
        } else {
            None
        };
        Summary {
            mode: self.mode,
            m: self.config.m,
            partition: self.config.partition(),
            round1: self.round1,
            round2: self.round2,
            aborted: self.aborted(),
            abort: self.abort,
            message_pairs: self.messages().count(),
            decoded,
            value_errors: errors,
            value_error_rate: (decoded > 0).then(|| errors as f64 / decoded as f64),
            counts: self.counts.clone(),
            theta_true: wrap_2pi(self.config.theta_true),
            estimate,
        }
    }

    /// Writes the header and one line per pair.
    pub fn write_records<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{RECORD_HEADER}")?;
        for r in &self.records {
            writeln!(out, "{r}")?;
        }
        Ok(())
    }

    pub fn records_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_records(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("records are ASCII")
    }
}

/// Parses a record file written by [`Transcript::write_records`].
pub fn read_records<R: BufRead>(input: R) -> Result<Vec<PairRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(trimmed.parse().map_err(|message| Error::Parse { line: i + 1, message })?);
    }
    Ok(out)
}

/// Rebuilds the detector count table from message records.
pub fn counts_from_records(records: &[PairRecord]) -> CountTable {
    let mut t = CountTable::new();
    for r in records.iter().filter(|r| r.role == Role::Message) {
        if let (Some(n), Some(Setting::Observable(o)), Some(Outcome::Detector(d))) = (r.passes, r.setting, r.outcome) {
            t.record(n, o, d);
        }
    }
    t
}

/// Runs the integrated protocol end to end.
pub fn run_qisac(config: &ProtocolConfig, message: &MessageBits) -> Result<Transcript> {
    Session::new(config, message, Mode::Qisac)?.run()
}

/// Runs the dense-coding baseline: four encoders, Bell-measurement decoding
/// of two bits per message pair, no sensing.
pub fn run_twostep_baseline(config: &ProtocolConfig, symbols: &MessageBits) -> Result<Transcript> {
    Session::new(config, symbols, Mode::TwoStep)?.run()
}

/// Random message of the right length for `config`, from its own stream.
pub fn random_message(config: &ProtocolConfig, mode: Mode) -> MessageBits {
    let mut rng: SimRng = path_rng(config.seed, &[u64::MAX]);
    let n = config.partition().message;
    match mode {
        Mode::Qisac => MessageBits::random(n, &mut rng),
        Mode::TwoStep => MessageBits::random_symbols(n, &mut rng),
    }
}

/// Seed of trial `t` in a batch under `seed`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    stream_id(&[seed, trial])
}

/// Empirical detection statistics over repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRates {
    pub trials: usize,
    /// Runs aborted at either round.
    pub abort_rate: f64,
    pub round1_abort_rate: f64,
    /// Runs in which at least one check pair (either round) showed an error.
    pub any_error_rate: f64,
}

/// Runs `trials` independent sessions (random messages, per-trial seeds) and
/// reports how often the adversary was caught.
pub fn detection_rates(config: &ProtocolConfig, trials: usize) -> Result<DetectionRates> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    config.validate()?;
    let outcomes: Vec<(bool, bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let cfg = ProtocolConfig {
                seed: trial_seed(config.seed, t as u64),
                ..config.clone()
            };
            // Thresholds off so both rounds always run and every error is seen.
            let open = ProtocolConfig {
                qber_threshold_1: 0.5,
                qber_threshold_2: 0.5,
                asymmetry_sigma: f64::INFINITY,
                ..cfg.clone()
            };
            let msg = random_message(&cfg, Mode::Qisac);
            let real = run_qisac(&cfg, &msg)?;
            let seen = run_qisac(&open, &msg)?;
            let any = seen.round1.is_some_and(|r| r.errors.iter().sum::<usize>() > 0)
                || seen.round2.is_some_and(|r| r.errors > 0);
            Ok((
                real.aborted(),
                real.abort.is_some_and(|a| a.round == 1),
                any,
            ))
        })
        .collect::<Result<_>>()?;
    let frac = |f: fn(&(bool, bool, bool)) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / trials as f64;
    Ok(DetectionRates {
        trials,
        abort_rate: frac(|o| o.0),
        round1_abort_rate: frac(|o| o.1),
        any_error_rate: frac(|o| o.2),
    })
}
