//! Detector probabilities of the two probe states, i.e. the content of the
//! decoding table: bit 0 always lands on detectors 3 or 4, bit 1 on 1 or 2,
//! and the split inside each pair carries the phase.

use std::f64::consts::PI;

use qisac::commands::table1_rows;
use qisac::protocol::decode_bit;
use qisac::states::{detector_distribution, probe_state, ObservableKind};

fn main() {
    let thetas = [0.0, PI / 4.0, PI / 2.0, 0.8 * PI];
    println!("{:>3} {:>7} {:>3} {:>5} {:>7} {:>7} {:>7} {:>7}", "N", "theta", "bit", "obs", "p1", "p2", "p3", "p4");
    for row in table1_rows(&[1, 2], &thetas) {
        println!(
            "{:>3} {:>7.4} {:>3} {:>5} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
            row.n, row.theta, row.bit, row.observable, row.p1, row.p2, row.p3, row.p4
        );
    }

    // Decoding never needs the phase.
    for bit in 0..=1 {
        for which in ObservableKind::ALL {
            let p = detector_distribution(&probe_state(bit, 3, 1.234), which);
            let wrong: f64 = (1..=4u8).filter(|&d| decode_bit(which, d) != bit).map(|d| p[d as usize - 1]).sum();
            println!("bit {bit} via {which}: probability of a wrong decode {wrong:.1e}");
        }
    }
}
