//! Data-producing tasks behind the command-line tool.
//!
//! Each task has a serde configuration whose defaults reproduce one figure or
//! table, runs deterministically under its seed, and writes CSV files (header
//! row, `.` decimals) plus a JSON manifest that can be replayed.
//!
//! CSV schemas:
//!
//! | file | columns |
//! |---|---|
//! | `table1.csv` | n, theta, bit, state, observable, p1, p2, p3, p4, total |
//! | `capacity.csv` | e, i_ab, chi_eve, cs_qisac, cs_twostep |
//! | `fisher.csv` | e, n, theta, f_bob, f_bob_bound, f_eve, f_eve_numeric |
//! | `cfi_noisy.csv` | e, n, theta, cfi_o1, cfi_o2, cfi_total, cfi_o1_printed, cfi_o2_printed |
//! | `likelihood.csv` | theta, l_o1, l_o2, l_both, l_single, l_multi, l_combined |
//! | `bias.csv` | pairs, n, theta, bias, std, stderr, bound, repeats, failures |
//! | `tradeoff.csv` | p_e, variance, precision, p_det1, p_det2, mc_abort_double_cnot, mc_detect_intercept, mc_abort_intercept |
//! | `optimal_n.csv` | pairs, n, theta, abs_bias, std |
//! | `optimal_n_summary.csv` | pairs, n, mean_abs_bias, single_pass_level |
//! | `precision.csv` | trial, seed, theta_hat, error |

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::channel::Adversary;
use crate::error::{Error, Result};
use crate::estimate::{
    likelihood_curve, likelihood_peaks, mle_combined, monte_carlo_bias, optimal_n_scan, sample_counts, wrap_pi,
    BiasConfig, CountTable, Estimator, SamplingModel, ScanConfig,
};
use crate::metrics::{
    cfi_noisy, cfi_noisy_printed, detection_probability, fisher_bob, fisher_bob_bound, fisher_crossing, fisher_eve,
    fisher_eve_numeric, h, mutual_info_ab, qisac_threshold, secrecy_capacity_qisac, secrecy_capacity_twostep,
    twostep_threshold, DetectionKind, SecurityReport,
};
use crate::protocol::{
    detection_rates, random_message, run_qisac, run_twostep_baseline, trial_seed, MessageBits, Mode, ProtocolConfig,
};
use crate::rng::path_rng;
use crate::states::{detector_distribution, probe_state, BellLabel, ObservableKind};

/// One `key = value` setting and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    /// 1-based line in a config file; `None` for command-line settings.
    pub line: Option<usize>,
    pub key: String,
    pub value: String,
}

impl Setting {
    pub fn flag(key: &str, value: &str) -> Self {
        Self {
            line: None,
            key: key.to_string(),
            value: value.to_string(),
        }
    }

    fn error(&self, message: String) -> Error {
        match self.line {
            Some(line) => Error::Parse { line, message },
            None => Error::InvalidConfig(format!("--set {}: {message}", self.key)),
        }
    }
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_settings(text: &str) -> Result<Vec<Setting>> {
    let mut out: Vec<Setting> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key = value, found {line:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        if let Some(prev) = out.iter().find(|s| s.key == key) {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("duplicate key {key:?} (first set on line {})", prev.line.unwrap_or(0)),
            });
        }
        out.push(Setting {
            line: Some(i + 1),
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

/// Parses a `--set key=value` argument.
pub fn parse_flag_setting(arg: &str) -> Result<Setting> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("--set expects key=value, found {arg:?}")))?;
    Ok(Setting::flag(k.trim(), v.trim()))
}

/// JSON value of a raw setting: JSON literals and arrays as written, numbers
/// with a `pi` suffix scaled by π, anything else as a string.
pub fn parse_value(raw: &str) -> Value {
    if let Some(prefix) = raw.strip_suffix("pi") {
        let prefix = prefix.trim().trim_end_matches('*');
        let factor = if prefix.is_empty() { Some(1.0) } else { prefix.parse::<f64>().ok() };
        if let Some(f) = factor {
            return json!(f * PI);
        }
    }
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, setting: &Setting) -> Result<()> {
    let parts: Vec<&str> = setting.key.split('.').collect();
    let mut node = root;
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        let obj = node
            .as_object_mut()
            .ok_or_else(|| setting.error(format!("{:?} is not a table", parts[..depth].join("."))))?;
        if last {
            let value = parse_value(&setting.value);
            match obj.get_mut(*part) {
                // A bare word selects the variant of a tagged table.
                Some(Value::Object(inner)) if inner.contains_key("kind") && value.is_string() => {
                    let mut fresh = Map::new();
                    fresh.insert("kind".into(), value);
                    *inner = fresh;
                }
                Some(slot) => *slot = value,
                None if depth > 0 => {
                    obj.insert(part.to_string(), value);
                }
                None => return Err(setting.error(format!("unknown key {:?}", setting.key))),
            }
            return Ok(());
        }
        node = obj
            .get_mut(*part)
            .ok_or_else(|| setting.error(format!("unknown key {:?}", setting.key)))?;
    }
    Ok(())
}

/// Applies settings in order on top of `base`. A failure is reported at the
/// setting that introduced it; an incomplete table (missing field) may still be
/// completed by later settings.
pub fn apply_settings<T: Serialize + DeserializeOwned>(base: &T, settings: &[Setting]) -> Result<T> {
    let mut value = serde_json::to_value(base)?;
    // (index, message, hard)
    let mut culprit: Option<(usize, String, bool)> = None;
    for (i, s) in settings.iter().enumerate() {
        set_path(&mut value, s)?;
        match serde_json::from_value::<T>(value.clone()) {
            Ok(_) => culprit = None,
            Err(e) => {
                let msg = e.to_string();
                let hard = !msg.starts_with("missing field");
                let replace = match &culprit {
                    None => true,
                    Some((_, _, was_hard)) => hard && !was_hard,
                };
                if replace {
                    culprit = Some((i, msg, hard));
                }
            }
        }
    }
    match culprit {
        Some((i, msg, _)) => Err(settings[i].error(format!("invalid value {:?}: {msg}", settings[i].value))),
        None => Ok(serde_json::from_value(value)?),
    }
}

/// Where a task writes its files.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.root.join(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json<V: Serialize>(&mut self, name: &str, value: &V) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        fs::write(self.root.join(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<()> {
        fs::write(self.root.join(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// What a task reports besides its files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Headline numbers (roots, fitted values, pass counts).
    pub derived: Value,
    /// A protocol run ended in an abort.
    pub aborted: bool,
}

pub trait Task: Serialize + DeserializeOwned + Default {
    const NAME: &'static str;
    fn execute(&self, out: &mut OutputDir) -> Result<Report>;
}

/// Record written next to every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub outputs: Vec<String>,
    pub derived: Value,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}_manifest.json")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub aborted: bool,
}

fn run_task<T: Task>(config: T, out_dir: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut out = OutputDir::new(out_dir)?;
    let report = config.execute(&mut out)?;
    let config = serde_json::to_value(&config)?;
    let manifest = RunManifest {
        command: T::NAME.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.get("seed").and_then(Value::as_u64),
        config,
        outputs: out.written.clone(),
        derived: report.derived,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    out.json(&RunManifest::file_name(T::NAME), &manifest)?;
    Ok(RunOutcome {
        manifest,
        aborted: report.aborted,
    })
}

fn configure<T: Task>(settings: &[Setting]) -> Result<T> {
    apply_settings(&T::default(), settings)
}

macro_rules! tasks {
    ($($ty:ident),* $(,)?) => {
        /// Names of all tasks, as accepted by [`run_named`].
        pub const TASK_NAMES: &[&str] = &[$($ty::NAME),*];

        /// Runs the task `name` with `settings` applied over its defaults.
        pub fn run_named(name: &str, settings: &[Setting], out_dir: &Path) -> Result<RunOutcome> {
            $(if name == $ty::NAME {
                return run_task(configure::<$ty>(settings)?, out_dir);
            })*
            Err(Error::InvalidConfig(format!("unknown command {name:?}")))
        }

        /// Default configuration of task `name`, as JSON.
        pub fn default_config(name: &str) -> Result<Value> {
            $(if name == $ty::NAME {
                return Ok(serde_json::to_value($ty::default())?);
            })*
            Err(Error::InvalidConfig(format!("unknown command {name:?}")))
        }

        fn run_from_value(name: &str, config: Value, out_dir: &Path) -> Result<RunOutcome> {
            $(if name == $ty::NAME {
                return run_task(serde_json::from_value::<$ty>(config)?, out_dir);
            })*
            Err(Error::InvalidConfig(format!("unknown command {name:?}")))
        }
    };
}

tasks!(
    Table1Task,
    CapacityTask,
    FisherTask,
    CfiNoisyTask,
    LikelihoodTask,
    BiasTask,
    TradeoffTask,
    OptimalNTask,
    PrecisionTask,
    ProtocolTask,
    SecurityTask,
);

/// Re-runs the task recorded in a manifest, writing into `out_dir`.
pub fn replay(manifest: &RunManifest, out_dir: &Path) -> Result<RunOutcome> {
    run_from_value(&manifest.command, manifest.config.clone(), out_dir)
}

fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps == 0 {
        return vec![lo];
    }
    (0..=steps).map(|k| lo + (hi - lo) * k as f64 / steps as f64).collect()
}

/// `points` angles at the centres of equal cells of `[0, 2π)`, so no grid
/// point lands on a multiple of π/2.
pub fn centred_theta_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| TAU * (k as f64 + 0.5) / points as f64).collect()
}

/// Equal cells of `[0, 2π)` sampled at an irrational offset. A pass-count
/// scan needs this: on [`centred_theta_grid`] every multiple of `points`
/// puts Nθ on a multiple of π, where noiseless counts are deterministic.
pub fn scan_theta_grid(points: usize) -> Vec<f64> {
    const OFFSET: f64 = 0.618_033_988_749_894_8;
    (0..points).map(|k| TAU * (k as f64 + OFFSET) / points as f64).collect()
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::InvalidConfig(format!("{name} must be positive")))
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------- table 1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Table1Task {
    pub n_passes: Vec<u32>,
    /// θ steps over `[0, 2π]`, endpoints included.
    pub steps: usize,
}

impl Default for Table1Task {
    fn default() -> Self {
        Self {
            n_passes: vec![1],
            steps: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Table1Row {
    pub n: u32,
    pub theta: f64,
    pub bit: u8,
    pub state: String,
    pub observable: String,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
    pub total: f64,
}

pub fn table1_rows(n_passes: &[u32], thetas: &[f64]) -> Vec<Table1Row> {
    let mut rows = Vec::new();
    for &n in n_passes {
        for &theta in thetas {
            for bit in 0..=1u8 {
                let psi = probe_state(bit, n, theta);
                let label = if bit == 0 { BellLabel::PsiMinus } else { BellLabel::PhiMinus };
                for which in ObservableKind::ALL {
                    let p = detector_distribution(&psi, which);
                    rows.push(Table1Row {
                        n,
                        theta,
                        bit,
                        state: label.to_string(),
                        observable: which.to_string(),
                        p1: p[0],
                        p2: p[1],
                        p3: p[2],
                        p4: p[3],
                        total: p.iter().sum(),
                    });
                }
            }
        }
    }
    rows
}

impl Task for Table1Task {
    const NAME: &'static str = "table1";

    fn execute(&self, out: &mut OutputDir) -> Result<Report> {
        if self.n_passes.contains(&0) {
            return Err(Error::InvalidConfig("n_passes entries must be positive".into()));
        }
        let rows = table1_rows(&self.n_passes, &linspace(0.0, TAU, self.steps));
        let worst = rows.iter().map(|r| (r.total - 1.0).abs()).fold(0.0, f64::max);
        out.csv("table1.csv", &rows)?;
        Ok(Report {
            derived: json!({ "rows": rows.len(), "max_normalization_error": worst }),
            aborted: false,
        })
    }
}

// ---------------------------------------------------------------- capacity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapacityTask {
    pub e_min: f64,
    pub e_max: f64,
    pub steps: usize,
}

impl Default for CapacityTask {
    fn default() -> Self {
        Self {
            e_min: 0.0,
            e_max: 0.12,
            steps: 240,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CapacityRow {
    pub e: f64,
    pub i_ab: f64,
    pub chi_eve: f64,
    pub cs_qisac: f64,
    pub cs_twostep: f64,
}

impl Task for CapacityTask {
    const NAME: &'static str = "capacity";

    fn execute(&self, out: &mut OutputDir) -> Result<Report> {
        let rows = linspace(self.e_min, self.e_max, self.steps)
            .into_iter()
            .map(|e| {
                Ok(CapacityRow {
                    e,
                    i_ab: mutual_info_ab(e)?,
                    chi_eve: h(e)?,
                    cs_qisac: secrecy_capacity_qisac(e)?,
                    cs_twostep: secrecy_capacity_twostep(e)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.csv("capacity.csv", &rows)?;
        Ok(Report {
            derived: json!({
                "threshold_qisac": qisac_threshold()?,
                "threshold_twostep": twostep_threshold()?,
            }),
            aborted: false,
        })
    }
}

// ---------------------------------------------------------------- fisher

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FisherTask {
    pub e_min: f64,
    pub e_max: f64,
    pub steps: usize,
    pub n: u32,
    /// Phase at which Bob's attained information is evaluated.
    pub theta: f64,
    /// Also evaluate Eve's information from the state's spectrum.
    pub numeric: bool,
}

impl Default for FisherTask {
    fn default() -> Self {
        Self {
            e_min: 0.0,
            e_max: 0.15,
            steps: 150,
            n: 1,
            theta: 1.0,
            numeric: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FisherRow {
    pub e: f64,
    pub n: u32,
    pub theta: f64,
    pub f_bob: f64,
    pub f_bob_bound: f64,
    pub f_eve: f64,
    pub f_eve_numeric: Option<f64>,
}

impl Task for FisherTask {
    const NAME: &'static str = "fisher";

    fn execute(&self, out: &mut OutputDir) -> Result<Report> {
        check_positive("n", self.n as usize)?;
        let rows = linspace(self.e_min, self.e_max, self.steps)
            .into_iter()
            .map(|e| {
                let numeric = if self.numeric && e > 0.0 {
                    Some(fisher_eve_numeric(e, self.n, self.theta)?)
                } else if self.numeric {
                    Some(0.0)
                } else {
                    None
                };
                Ok(FisherRow {
                    e,
                    n: self.n,
                    theta: self.theta,
                    f_bob: fisher_bob(e, self.theta, self.n),
                    f_bob_bound: fisher_bob_bound(e, self.n),
                    f_eve: fisher_eve(e, self.n),
                    f_eve_numeric: numeric,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.csv("fisher.csv", &rows)?;
        Ok(Report {
            derived: json!({ "fisher_crossing": fisher_crossing(self.n)? }),
            aborted: false,
        })
    }
}

// ---------------------------------------------------------------- noisy CFI

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfiNoisyTask {
    pub e: Vec<f64>,
    pub n: u32,
    pub steps: usize,
}

impl Default for CfiNoisyTask {
    fn default() -> Self {
        Self {
            e: vec![0.0, 0.05, 0.1],
            n: 1,
            steps: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CfiRow {
    pub e: f64,
    pub n: u32,
    pub theta: f64,
    pub cfi_o1: f64,
    pub cfi_o2: f64,
    pub cfi_total: f64,
    pub cfi_o1_printed: f64,
    pub cfi_o2_printed: f64,
}

impl Task for CfiNoisyTask {
    const NAME: &'static str = "cfi_noisy";

    fn execute(&self, out: &mut OutputDir) -> Result<Report> {
        check_positive("n", self.n as usize)?;
        let mut rows = Vec::new();
        for &e in &self.e {
            for theta in linspace(0.0, TAU, self.steps) {
                let o1 = cfi_noisy(ObservableKind::O1, e, theta, self.n);
                let o2 = cfi_noisy(ObservableKind::O2, e, theta, self.n);
                rows.push(CfiRow {
                    e,
                    n: self.n,
                    theta,
                    cfi_o1: o1,
                    cfi_o2: o2,
                    cfi_total: o1 + o2,
                    cfi_o1_printed: cfi_noisy_printed(ObservableKind::O1, e, theta, self.n),
                    cfi_o2_printed: cfi_noisy_printed(ObservableKind::O2, e, theta, self.n),
                });
            }
        }
        out.csv("cfi_noisy.csv", &rows)?;
        Ok(Report {
            derived: json!({ "rows": rows.len() }),
            aborted: false,
        })
    }
}

// ---------------------------------------------------------------- likelihood

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LikelihoodTask {
    /// Single-pass pairs for the one- and two-observable curves.
    pub pairs: u64,
    pub theta_true: f64,
    /// Pairs for the single/multi-pass comparison.
    pub combined_pairs: u64,
    pub n_passes: u32,
    /// Share of `combined_pairs` sensing once.
    pub split: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for LikelihoodTask {
    fn default() -> Self {
        Self {
            pairs: 500,
            theta_true: 0.8 * PI,
            combined_pairs: 140,
            n_passes: 4,
            split: 0.5,
            steps: 2000,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LikelihoodRow {
    pub theta: f64,
    pub l_o1: f64,
    pub l_o2: f64,
    pub l_both: f64,
    pub l_single: f64,
    pub l_multi: f64,
    pub l_combined: f64,
}

impl Task for LikelihoodTask {
    const NAME: &'static str = "likelihood";

    fn execute(&self, out: &mut OutputDir) -> Result<Report> {
        check_positive("n_passes", self.n_passes as usize)?;
        let mut rng = path_rng(self.seed, &[0]);
        let single = sample_counts(&SamplingModel::single_group(self.theta_true, 1, self.pairs), &mut rng)?;
        let mut rng = path_rng(self.seed, &[1]);
        let split = SamplingModel::split(self.theta_true, self.n_passes, self.combined_pairs, self.split);
        let combined = sample_counts(&split, &mut rng)?;
        let only_single = combined.only(1);
        let only_multi = combined.only(self.n_passes);

        let thetas: Vec<f64> = (0..self.steps).map(|k| TAU * k as f64 / self.steps as f64).collect();
        let curves: Vec<Vec<f64>> = [
            single.only_observable(ObservableKind::O1),
            single.only_observable(ObservableKind::O2),
            single.clone(),
            only_single.clone(),
            only_multi.clone(),
            combined.clone(),
        ]
        .iter()
        .map(|t| likelihood_curve(t, &thetas))
        .collect();
        let rows: Vec<LikelihoodRow> = thetas
            .iter()
            .enumerate()
            .map(|(k, &theta)| LikelihoodRow {
                theta,
                l_o1: curves[0][k],
                l_o2: curves[1][k],
                l_both: curves[2][k],
                l_single: curves[3][k],
                l_multi: curves[4][k],
                l_combined: curves[5][k],
            })
            .collect();
        out.csv("likelihood.csv", &rows)?;
        let summarize = |t: &CountTable| -> Value {
            match (mle_combined(t), likelihood_peaks(t)) {
                (Ok(est), Ok(peaks)) => json!({
                    "theta": est.theta,
                    "ambiguous": est.ambiguous,
                    "peaks": peaks.iter().map(|p| p.theta).collect::<Vec<_>>(),
                }),
                _ => Value::Null,
            }
        };
        Ok(Report {
            derived: json!({
                "theta_true": self.theta_true,
                "o1": summarize(&single.only_observable(ObservableKind::O1)),
                "o2": summarize(&single.only_observable(ObservableKind::O2)),
                "both": summarize(&single),
                "single": summarize(&only_single),
                "multi": summarize(&only_multi),
                "combined": summarize(&combined),
            }),
            aborted: false,
        })
    }
}

// ---------------------------------------------------------------- bias

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasTask {
    pub pairs: Vec<u64>,
    pub repeats: usize,
    pub n: u32,
    /// θ points, centred in equal cells of `[0, 2π)`.
    pub points: usize,
    pub estimator: Estimator,
    pub single_pass_fraction: f64,
    pub e: f64,
    pub seed: u64,
}

impl Default for BiasTask {
    fn default() -> Self {
        Self {
            pairs: vec![100, 500, 1000, 2000],
            repeats: 1000,
            n: 1,
            points: 64,
            estimator: Estimator::Expectation,
            single_pass_fraction: 0.1,
            e: 0.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BiasCsvRow {
    pub pairs: u64,
    pub n: u32,
    pub theta: f64,
    pub bias: f64,
    pub std: f64,
    pub stderr: f64,
    pub bound: f64,
    pub repeats: usize,
    pub failures: usize,
}

impl BiasTask {
    pub fn rows(&self) -> Result<Vec<BiasCsvRow>> {
        check_positive("n", self.n as usize)?;
        let thetas = centred_theta_grid(self.points);
        let mut rows = Vec::new();
        for (j, &pairs) in self.pairs.iter().enumerate() {
            let cfg = BiasConfig {
                single_pass_fraction: self.single_pass_fraction,
                e: self.e,
                estimator: self.estimator,
                seed: trial_seed(self.seed, j as u64),
                ..BiasConfig::new(pairs, self.n)
            };
            for r in monte_carlo_bias(&cfg, &thetas, self.repeats)? {
                rows.push(BiasCsvRow {
                    pairs,
                    n: self.n,
                    theta: r.theta,
                    bias: r.bias,
                    std: r.std,
                    stderr: r.stderr,
                    bound: 1.0 / (pairs as f64).sqrt(),
                    repeats: r.repeats,
                    failures: r.failures,
                });
            }
        }
        Ok(rows)
    }
}

impl Task for BiasTask {
    const NAME: &'static str = "bias";

    fn execute(&self, out: &mut OutputDir) -> Result<Report> {
        let rows = self.rows()?;
        out.csv("bias.csv", &rows)?;
        let below: Vec<Value> = self
            .pairs
            .iter()
            .map(|&p| {
                let sel: Vec<&BiasCsvRow> = rows.iter().filter(|r| r.pairs == p).collect();
                let ok = sel.iter().filter(|r| r.bias.abs() < r.bound).count();
                json!({ "pairs": p, "fraction_below_bound": ok as f64 / sel.len().max(1) as f64 })
            })
            .collect();
        Ok(Report {
            derived: json!({ "bound_check": below }),
            aborted: false,
        })
    }
}

// ---------------------------------------------------------------- trade-off

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TradeoffTask {
    pub m: usize,
    pub k: usize,
    pub n: u32,
    pub p_o: f64,
    pub p_e_min: f64,
    pub p_e_max: f64,
    pub steps: usize,
    /// Protocol runs per point for the empirical detection columns; 0 skips them.
    pub mc_trials: usize,
    pub seed: u64,
}

impl Default for TradeoffTask {
    fn default() -> Self {
        Self {
            m: 320,
            k: 32,
            n: 3,
            p_o: 0.5,
            p_e_min: 0.02,
            p_e_max: 0.98,
            steps: 48,
            mc_trials: 100,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TradeoffRow {
    pub p_e: f64,
    pub variance: f64,
    pub precision: f64,
    pub p_det1: f64,
    pub p_det2: f64,
    pub mc_abort_double_cnot: Option<f64>,
    pub mc_detect_intercept: Option<f64>,
    pub mc_abort_intercept: Option<f64>,
}

/// `1/(4 p_e p_o (1 − p_o) m N²)`.
pub fn tradeoff_variance(p_e: f64, p_o: f64, m: usize, n: u32) -> f64 {
    1.0 / (4.0 * p_e * p_o * (1.0 - p_o) * m as f64 * (n as f64).powi(2))
}

impl Task for TradeoffTask {
    const NAME: &'static str = "tradeoff";

    fn execute(&self, out: &mut OutputDir) -> Result<Report> {
        check_positive("n", self.n as usize)?;
        let mut rows = Vec::new();
        for (i, p_e) in linspace(self.p_e_min, self.p_e_max, self.steps).into_iter().enumerate() {
            let variance = tradeoff_variance(p_e, self.p_o, self.m, self.n);
            let (mut dc, mut ir_any, mut ir_abort) = (None, None, None);
            if self.mc_trials > 0 {
                let base = ProtocolConfig {
                    m: self.m,
                    p_e,
                    p_o: self.p_o,
                    n_passes: self.n,
                    seed: trial_seed(self.seed, i as u64),
                    ..ProtocolConfig::default()
                };
                let d = detection_rates(
                    &ProtocolConfig {
                        adversary: Adversary::DoubleCnot,
                        ..base.clone()
                    },
                    self.mc_trials,
                )?;
                let r = detection_rates(
                    &ProtocolConfig {
                        adversary: Adversary::InterceptResend { intercepted: self.k },
                        ..base
                    },
                    self.mc_trials,
                )?;
                dc = Some(d.abort_rate);
                ir_any = Some(r.any_error_rate);
                ir_abort = Some(r.abort_rate);
            }
            rows.push(TradeoffRow {
                p_e,
                variance,
                precision: variance.sqrt(),
                p_det1: detection_probability(DetectionKind::DoubleCnot { m: self.m }, p_e)?,
                p_det2: detection_probability(DetectionKind::Mitm { k: self.k }, p_e)?,
                mc_abort_double_cnot: dc,
                mc_detect_intercept: ir_any,
                mc_abort_intercept: ir_abort,
            });
        }
        out.csv("tradeoff.csv", &rows)?;
        Ok(Report {
            derived: json!({ "rows": rows.len() }),
            aborted: false,
        })
    }
}

// ---------------------------------------------------------------- optimal N

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimalNTask {
    pub pairs: Vec<u64>,
    pub n_min: u32,
    pub n_max: u32,
    pub n_step: u32,
    /// θ points, centred in equal cells of `[0, 2π)`.
    pub points: usize,
    pub repeats: usize,
    pub single_pass_fraction: f64,
    pub seed: u64,
}

impl Default for OptimalNTask {
    fn default() -> Self {
        Self {
            pairs: vec![800, 5000, 10000],
            n_min: 1,
            n_max: 1000,
            n_step: 10,
            points: 16,
            repeats: 50,
            single_pass_fraction: 0.1,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OptimalNCell {
    pub pairs: u64,
    pub n: u32,
    pub theta: f64,
    pub abs_bias: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OptimalNSummaryRow {
    pub pairs: u64,
    pub n: u32,
    pub mean_abs_bias: f64,
    pub single_pass_level: f64,
}

impl OptimalNTask {
    pub fn n_values(&self) -> Vec<u32> {
        (self.n_min.max(1)..=self.n_max).step_by(self.n_step.max(1) as usize).collect()
    }
}

impl Task for OptimalNTask {
    const NAME: &'static str = "optimal_n";

    fn execute(&self, out: &mut OutputDir) -> Result<Report> {
        let mut cells = Vec::new();
        let mut summary = Vec::new();
        let mut best = Vec::new();
        for (j, &pairs) in self.pairs.iter().enumerate() {
            let cfg = ScanConfig {
                single_pass_fraction: self.single_pass_fraction,
                seed: trial_seed(self.seed, j as u64),
                ..ScanConfig::new(pairs, self.n_values(), scan_theta_grid(self.points), self.repeats)
            };
            let r = optimal_n_scan(&cfg)?;
            cells.extend(r.cells.iter().map(|c| OptimalNCell {
                pairs,
                n: c.n,
                theta: c.theta,
                abs_bias: c.abs_bias,
                std: c.std,
            }));
            summary.extend(r.per_n.iter().map(|&(n, b)| OptimalNSummaryRow {
                pairs,
                n,
                mean_abs_bias: b,
                single_pass_level: r.single_pass_level,
            }));
            best.push(json!({ "pairs": pairs, "best_n": r.best_n, "runner_up": r.runner_up }));
        }
        out.csv("optimal_n.csv", &cells)?;
        out.csv("optimal_n_summary.csv", &summary)?;
        Ok(Report {
            derived: json!({ "optimum": best }),
            aborted: false,
        })
    }
}

// ---------------------------------------------------------------- precision

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrecisionTask {
    pub p_e: f64,
    pub m: usize,
    pub n: u32,
    pub theta_true: f64,
    pub repeats: usize,
    pub single_pass_fraction: f64,
    pub estimator: Estimator,
    pub seed: u64,
}

impl Default for PrecisionTask {
    fn default() -> Self {
        Self {
            p_e: 0.8,
            m: 60_000,
            n: 4,
            theta_true: 1.0,
            repeats: 200,
            single_pass_fraction: 0.1,
            estimator: Estimator::Mle,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PrecisionRow {
    pub trial: usize,
    pub seed: u64,
    pub theta_hat: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PrecisionSummary {
    pub repeats: usize,
    pub mean_error: f64,
    /// Sample standard deviation of the wrapped errors.
    pub std: f64,
    pub variance: f64,
    /// `(p_e m N²)^{-1/2}`, all message pairs at N passes.
    pub heisenberg_bound: f64,
    /// Cramér–Rao bound for the actual single/multi-pass split.
    pub split_bound: f64,
}

impl PrecisionTask {
    fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            m: self.m,
            p_e: self.p_e,
            n_passes: self.n,
            single_pass_fraction: self.single_pass_fraction,
            theta_true: self.theta_true,
            seed: self.seed,
            ..ProtocolConfig::default()
        }
    }

    /// Runs the full protocol `repeats` times and estimates θ from each
    /// transcript.
    pub fn study(&self) -> Result<(Vec<PrecisionRow>, PrecisionSummary)> {
        check_positive("repeats", self.repeats)?;
        let base = self.protocol();
        base.validate()?;
        let rows: Vec<PrecisionRow> = (0..self.repeats)
            .into_par_iter()
            .map(|trial| {
                let seed = trial_seed(self.seed, trial as u64);
                let cfg = ProtocolConfig { seed, ..base.clone() };
                let t = run_qisac(&cfg, &random_message(&cfg, Mode::Qisac))?;
                if t.aborted() {
                    return Err(Error::InvalidConfig("noiseless run aborted".into()));
                }
                let est = t.estimate(self.estimator)?;
                let period = match self.estimator {
                    Estimator::Expectation => TAU / self.n as f64,
                    _ => TAU,
                };
                let err = wrap_pi((est.theta - self.theta_true) * TAU / period) * period / TAU;
                Ok(PrecisionRow {
                    trial,
                    seed,
                    theta_hat: est.theta,
                    error: err,
                })
            })
            .collect::<Result<_>>()?;
        let n = rows.len() as f64;
        let mean = rows.iter().map(|r| r.error).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r.error - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let part = base.partition();
        let nn = (self.n as f64).powi(2);
        let multi = (part.message - part.single_pass) as f64;
        let fisher = if self.n == 1 {
            part.message as f64
        } else {
            part.single_pass as f64 + multi * nn
        };
        let summary = PrecisionSummary {
            repeats: rows.len(),
            mean_error: mean,
            std: var.sqrt(),
            variance: var,
            heisenberg_bound: 1.0 / (self.p_e * self.m as f64 * nn).sqrt(),
            split_bound: 1.0 / fisher.sqrt(),
        };
        Ok((rows, summary))
    }
}

impl Task for PrecisionTask {
    const NAME: &'static str = "precision";

    fn execute(&self, out: &mut OutputDir) -> Result<Report> {
        let (rows, summary) = self.study()?;
        out.csv("precision.csv", &rows)?;
        Ok(Report {
            derived: serde_json::to_value(summary)?,
            aborted: false,
        })
    }
}

// ---------------------------------------------------------------- protocol

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolTask {
    #[serde(flatten)]
    pub config: ProtocolConfig,
    pub mode: Mode,
    /// Message digits; a random message of the right length when absent.
    pub message_file: Option<PathBuf>,
}

impl Default for ProtocolTask {
    fn default() -> Self {
        Self {
            config: ProtocolConfig::default(),
            mode: Mode::Qisac,
            message_file: None,
        }
    }
}

impl Task for ProtocolTask {
    const NAME: &'static str = "protocol";

    fn execute(&self, out: &mut OutputDir) -> Result<Report> {
        self.config.validate()?;
        let message = match &self.message_file {
            Some(path) => MessageBits::parse(&fs::read_to_string(path)?, self.mode == Mode::TwoStep)?,
            None => random_message(&self.config, self.mode),
        };
        let t = match self.mode {
            Mode::Qisac => run_qisac(&self.config, &message)?,
            Mode::TwoStep => run_twostep_baseline(&self.config, &message)?,
        };
        out.text("transcript.txt", &t.records_string())?;
        let summary = t.summary();
        out.json("summary.json", &summary)?;
        Ok(Report {
            derived: json!({
                "aborted": summary.aborted,
                "abort": summary.abort,
                "value_error_rate": summary.value_error_rate,
                "theta_hat": summary.estimate.as_ref().map(|e| e.theta),
            }),
            aborted: t.aborted(),
        })
    }
}

// ---------------------------------------------------------------- security

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SecurityTask {
    pub e: f64,
    pub n: u32,
    pub theta: f64,
    pub p_e: f64,
    pub m: usize,
    pub k: usize,
}

impl Default for SecurityTask {
    fn default() -> Self {
        Self {
            e: 0.05,
            n: 1,
            theta: 1.0,
            p_e: 0.6,
            m: 320,
            k: 32,
        }
    }
}

impl Task for SecurityTask {
    const NAME: &'static str = "security";

    fn execute(&self, out: &mut OutputDir) -> Result<Report> {
        check_positive("n", self.n as usize)?;
        let report = SecurityReport::compute(self.e, self.n, self.theta, self.p_e, self.m, self.k)?;
        out.json("security.json", &report)?;
        Ok(Report {
            derived: json!({
                "capacity_secure": report.capacity_secure,
                "fisher_secure": report.fisher_secure,
            }),
            aborted: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_parse_with_comments() {
        let s = parse_settings("# header\nm = 320\n\n p_e=0.6 # trailing\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].line, Some(2));
        assert_eq!(s[1].key, "p_e");
        assert_eq!(s[1].value, "0.6");
    }

    #[test]
    fn settings_report_lines() {
        match parse_settings("m = 3\nnonsense\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_settings("m = 3\nm = 4\n") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("duplicate"));
            }
            other => panic!("{other:?}"),
        }
        let s = parse_settings("m = 10\nbogus = 1\n").unwrap();
        match apply_settings(&ProtocolConfig::default(), &s) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let s = parse_settings("m = 10\np_o = lots\n").unwrap();
        match apply_settings(&ProtocolConfig::default(), &s) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn values_and_pi_suffix() {
        assert_eq!(parse_value("3"), json!(3));
        assert_eq!(parse_value("[1, 2]"), json!([1, 2]));
        assert_eq!(parse_value("true"), json!(true));
        assert_eq!(parse_value("mle"), json!("mle"));
        assert!((parse_value("0.8pi").as_f64().unwrap() - 0.8 * PI).abs() < 1e-15);
        assert!((parse_value("pi").as_f64().unwrap() - PI).abs() < 1e-15);
    }

    #[test]
    fn adversary_settings() {
        let s = parse_settings("adversary = double_cnot\n").unwrap();
        let c = apply_settings(&ProtocolConfig::default(), &s).unwrap();
        assert_eq!(c.adversary, Adversary::DoubleCnot);
        let s = parse_settings("adversary = intercept_resend\nadversary.intercepted = 32\n").unwrap();
        let c = apply_settings(&ProtocolConfig::default(), &s).unwrap();
        assert_eq!(c.adversary, Adversary::InterceptResend { intercepted: 32 });
        let s = parse_settings("adversary = collective\nadversary.lambdas = [0.9, 0.05, 0.03, 0.02]\n").unwrap();
        assert!(apply_settings(&ProtocolConfig::default(), &s).is_ok());
        let s = parse_settings("adversary = collective\nadversary.lambdas = [0.9, 0.5, 0.03, 0.02]\n").unwrap();
        match apply_settings(&ProtocolConfig::default(), &s) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flattened_protocol_task() {
        let s = parse_settings("m = 200\nmode = two_step\n").unwrap();
        let t: ProtocolTask = apply_settings(&ProtocolTask::default(), &s).unwrap();
        assert_eq!(t.config.m, 200);
        assert_eq!(t.mode, Mode::TwoStep);
        assert!(parse_flag_setting("m").is_err());
        assert_eq!(parse_flag_setting("m=5").unwrap(), Setting::flag("m", "5"));
    }

    #[test]
    fn table1_rows_normalized() {
        let rows = table1_rows(&[1, 2], &linspace(0.0, TAU, 16));
        assert_eq!(rows.len(), 2 * 17 * 2 * 2);
        assert!(rows.iter().all(|r| (r.total - 1.0).abs() < 1e-12));
        let r0 = &rows[0];
        assert_eq!((r0.theta, r0.state.as_str(), r0.observable.as_str()), (0.0, "psi-", "O1"));
        assert!((r0.p4 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn centred_grid_avoids_axes() {
        let g = centred_theta_grid(64);
        assert_eq!(g.len(), 64);
        for t in g {
            let d = (t / (PI / 2.0)).fract();
            assert!(d > 1e-3 && d < 1.0 - 1e-3);
        }
    }

    #[test]
    fn variance_formula() {
        assert!((tradeoff_variance(0.8, 0.5, 5000, 1) - 2.5e-4).abs() < 1e-15);
        assert!((tradeoff_variance(0.8, 0.5, 60000, 4).sqrt() - 0.0011410).abs() < 1e-7);
    }

    #[test]
    fn unknown_command() {
        let dir = tempfile::tempdir().unwrap();
        assert!(run_named("nope", &[], dir.path()).is_err());
        assert!(default_config("nope").is_err());
        for name in TASK_NAMES {
            assert!(default_config(name).unwrap().is_object());
        }
    }
}
