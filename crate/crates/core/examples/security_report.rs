//! Every security figure at one noise level, as JSON.

use qisac::metrics::SecurityReport;

fn main() -> qisac::Result<()> {
    let e: f64 = std::env::args().nth(1).map_or(Ok(0.05), |a| a.parse()).expect("e must be a number");
    let report = SecurityReport::compute(e, 1, 1.0, 0.6, 320, 32)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
