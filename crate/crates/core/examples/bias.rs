//! Monte-Carlo bias of the expectation estimator at a few pair counts.

use qisac::commands::centred_theta_grid;
use qisac::estimate::{monte_carlo_bias, BiasConfig};

fn main() -> qisac::Result<()> {
    let thetas = centred_theta_grid(16);
    for pairs in [100, 1000] {
        let rows = monte_carlo_bias(&BiasConfig::new(pairs, 1), &thetas, 300)?;
        let bound = 1.0 / (pairs as f64).sqrt();
        println!("{pairs} pairs, bound {bound:.4}");
        for r in rows {
            println!("  theta {:.4}  bias {:+.5}  std {:.4}", r.theta, r.bias, r.std);
        }
    }
    Ok(())
}
