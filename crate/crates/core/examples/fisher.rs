//! Phase information available to Bob and to an eavesdropper holding the
//! purification of the channel noise.

use std::f64::consts::PI;

use qisac::metrics::{cfi_noisy, fisher_crossing, fisher_eve_numeric, FisherReport};
use qisac::states::ObservableKind;

fn main() -> qisac::Result<()> {
    let theta = 1.0;
    for n in [1, 3] {
        println!("N = {n}");
        println!("{:>6} {:>9} {:>9} {:>9} {:>9}", "e", "F_bob", "bound", "F_eve", "numeric");
        for e in [0.0, 0.02, 0.05, 0.08, 0.1, 0.15] {
            let r = FisherReport::at(e, theta, n);
            let numeric = if e > 0.0 { fisher_eve_numeric(e, n, theta)? } else { 0.0 };
            println!(
                "{:>6.3} {:>9.4} {:>9.4} {:>9.4} {:>9.4}{}",
                e,
                r.f_bob,
                r.f_bob_bound,
                r.f_eve,
                numeric,
                if r.secure { "" } else { "  insecure" }
            );
        }
        println!("Bob's bound meets Eve's information at e = {:.6}\n", fisher_crossing(n)?);
    }

    // Under noise the two observables trade information as θ varies.
    let e = 0.05;
    println!("{:>7} {:>8} {:>8} {:>8}", "theta", "F_O1", "F_O2", "sum");
    for k in 0..=8 {
        let t = k as f64 * PI / 8.0;
        let (a, b) = (cfi_noisy(ObservableKind::O1, e, t, 1), cfi_noisy(ObservableKind::O2, e, t, 1));
        println!("{t:>7.4} {a:>8.4} {b:>8.4} {:>8.4}", a + b);
    }
    Ok(())
}
