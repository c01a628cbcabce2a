use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qisac::commands::{self, parse_flag_setting, parse_settings, RunManifest, Setting};
use qisac::Error;

/// Simulator and analytics for integrated quantum sensing and communication.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for CSV, JSON and transcript outputs.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// File of `key = value` settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` setting; repeatable, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Exit with status 3 when a protocol run aborts.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Detector probabilities of both probe states on a θ grid.
    Table1,
    /// Secrecy capacities against single-pass QBER.
    Capacity,
    /// Bob's and Eve's Fisher information against QBER.
    Fisher,
    /// Per-observable Fisher information under noise.
    CfiNoisy,
    /// Normalized likelihood curves from simulated counts.
    Likelihood,
    /// Monte-Carlo bias of the phase estimate.
    Bias,
    /// Precision against detection probability.
    Tradeoff,
    /// Bias heatmap over pass count and phase.
    OptimalN,
    /// Spread of the combined estimate over repeated protocol runs.
    Precision,
    /// One protocol run with transcript and summary.
    Protocol {
        /// Message digits (0/1, or 0-3 for the two-step mode).
        #[arg(long)]
        message: Option<PathBuf>,
    },
    /// Security figures of merit at one noise level.
    Security,
    /// Re-run a manifest written by an earlier invocation.
    Replay { manifest: PathBuf },
    /// Print a command's default settings as JSON.
    Defaults { command: String },
}

fn name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Table1 => "table1",
        Cmd::Capacity => "capacity",
        Cmd::Fisher => "fisher",
        Cmd::CfiNoisy => "cfi_noisy",
        Cmd::Likelihood => "likelihood",
        Cmd::Bias => "bias",
        Cmd::Tradeoff => "tradeoff",
        Cmd::OptimalN => "optimal_n",
        Cmd::Precision => "precision",
        Cmd::Protocol { .. } => "protocol",
        Cmd::Security => "security",
        Cmd::Replay { .. } => "replay",
        Cmd::Defaults { .. } => "defaults",
    }
}

fn settings(cli: &Cli) -> qisac::Result<Vec<Setting>> {
    let mut out = match &cli.config {
        Some(path) => parse_settings(&fs::read_to_string(path)?)?,
        None => Vec::new(),
    };
    for arg in &cli.set {
        out.push(parse_flag_setting(arg)?);
    }
    if let Cmd::Protocol { message: Some(path) } = &cli.command {
        out.push(Setting::flag("message_file", &serde_json::to_string(path)?));
    }
    if let Some(seed) = cli.seed {
        out.push(Setting::flag("seed", &seed.to_string()));
    }
    Ok(out)
}

fn run(cli: &Cli) -> qisac::Result<bool> {
    let outcome = match &cli.command {
        Cmd::Defaults { command } => {
            println!("{}", serde_json::to_string_pretty(&commands::default_config(command)?)?);
            return Ok(false);
        }
        Cmd::Replay { manifest } => commands::replay(&RunManifest::read(manifest)?, &cli.out_dir)?,
        cmd => commands::run_named(name(cmd), &settings(cli)?, &cli.out_dir)?,
    };
    let m = &outcome.manifest;
    println!("{} -> {}", m.command, cli.out_dir.display());
    for f in &m.outputs {
        println!("  {f}");
    }
    println!("{}", serde_json::to_string_pretty(&m.derived)?);
    Ok(outcome.aborted)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) if cli.strict => {
            eprintln!("protocol aborted");
            ExitCode::from(3)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e @ (Error::Parse { .. } | Error::InvalidConfig(_) | Error::Json(_))) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
