//! Why single-pass pairs are kept: multi-pass counts alone leave N equally
//! good candidates, and a few single-pass pairs pick the right one.

use std::f64::consts::PI;

use qisac::estimate::{likelihood_peaks, mle_combined, sample_counts, wrap_pi, SamplingModel};
use qisac::rng::path_rng;
use qisac::states::ObservableKind;

fn main() -> qisac::Result<()> {
    let theta = 0.8 * PI;
    let mut rng = path_rng(42, &[0]);

    let single = sample_counts(&SamplingModel::single_group(theta, 1, 500), &mut rng)?;
    let o1_only = single.only_observable(ObservableKind::O1);
    let peaks = likelihood_peaks(&o1_only)?;
    println!("O1 alone, 500 pairs: {} maxima at {:?}", peaks.len(), peaks.iter().map(|p| p.theta).collect::<Vec<_>>());
    println!("both observables: estimate {:.4} (truth {theta:.4})", mle_combined(&single)?.theta);

    let counts = sample_counts(&SamplingModel::split(theta, 4, 140, 0.5), &mut rng)?;
    let multi = likelihood_peaks(&counts.only(4))?;
    println!("\nN = 4 pairs alone: {} near-degenerate maxima", multi.len());
    for p in &multi {
        println!("  theta {:.4}  loglik {:.3}", p.theta, p.loglik);
    }
    let est = mle_combined(&counts)?;
    println!(
        "with the 70 single-pass pairs: {:.4}, error {:+.4} rad, ambiguous: {}",
        est.theta,
        wrap_pi(est.theta - theta),
        est.ambiguous
    );
    Ok(())
}
