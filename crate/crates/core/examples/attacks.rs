//! The two attacks against the closed-form detection curves.

use qisac::channel::{Adversary, Basis, Link, NoiseModel};
use qisac::metrics::{detection_probability, DetectionKind};
use qisac::protocol::{detection_rates, ProtocolConfig};

fn main() -> qisac::Result<()> {
    let link = Link::new(NoiseModel::noiseless(), Adversary::DoubleCnot);
    for basis in [Basis::X, Basis::Y, Basis::Z] {
        let p = link.check_distribution(basis, true)?;
        // Outcomes ordered (++, +-, -+, --); equal signs are errors.
        println!("double CNOT, {basis:?} basis: error rate {:.3}", p[0] + p[3]);
    }

    let (m, k) = (320, 32);
    println!("\n{:>5} {:>8} {:>8} {:>8} {:>8}", "p_e", "Pdet1", "MC", "Pdet2", "MC");
    for p_e in [0.2, 0.5, 0.8] {
        let base = ProtocolConfig { m, p_e, ..ProtocolConfig::default() };
        let cnot = detection_rates(&ProtocolConfig { adversary: Adversary::DoubleCnot, ..base.clone() }, 40)?;
        let ir = detection_rates(
            &ProtocolConfig { adversary: Adversary::InterceptResend { intercepted: k }, ..base },
            40,
        )?;
        println!(
            "{p_e:>5.2} {:>8.4} {:>8.3} {:>8.4} {:>8.3}",
            detection_probability(DetectionKind::DoubleCnot { m }, p_e)?,
            cnot.abort_rate,
            detection_probability(DetectionKind::Mitm { k }, p_e)?,
            ir.any_error_rate
        );
    }
    Ok(())
}
