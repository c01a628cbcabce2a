//! Writes every figure's CSV through the same task layer as the command-line
//! tool, at reduced Monte-Carlo sizes. Output goes to the directory given as
//! the first argument (default `figure-data`).

use std::path::PathBuf;

use qisac::commands::{parse_settings, run_named, TASK_NAMES};

fn reduced(name: &str) -> &'static str {
    match name {
        "bias" => "repeats = 200",
        "tradeoff" => "mc_trials = 10",
        "optimal_n" => "pairs = [800]\nn_max = 300\nrepeats = 10",
        "precision" => "m = 10000\nrepeats = 20",
        _ => "",
    }
}

fn main() -> qisac::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "figure-data".into()));
    for name in TASK_NAMES {
        let out = run_named(name, &parse_settings(reduced(name))?, &root)?;
        println!("{name:<11} {:>7.2}s  {}", out.manifest.wall_time_s, out.manifest.outputs.join(" "));
    }
    Ok(())
}
