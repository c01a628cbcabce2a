//! A coarse pass-count scan: mean |bias| against N at a fixed pair budget,
//! with the level reached by the single-pass pairs alone for reference.

use qisac::commands::scan_theta_grid;
use qisac::estimate::{optimal_n_scan, ScanConfig};

fn main() -> qisac::Result<()> {
    let n_values: Vec<u32> = [1, 2, 3, 5, 8, 12, 20, 30, 50, 100, 200, 300].into();
    let r = optimal_n_scan(&ScanConfig::new(800, n_values, scan_theta_grid(8), 24))?;
    for (n, bias) in &r.per_n {
        println!("N {n:>4}  mean |bias| {bias:.5}");
    }
    println!("single-pass pairs alone: {:.5}", r.single_pass_level);
    println!("best N {} (runner-up {:?})", r.best_n, r.runner_up);
    Ok(())
}
