//! Spread of the phase estimate over repeated full protocol runs, next to
//! the Cramér–Rao bounds for the pass split and for all pairs at N passes.

use qisac::commands::PrecisionTask;

fn main() -> qisac::Result<()> {
    let task = PrecisionTask {
        m: 10_000,
        repeats: 40,
        ..PrecisionTask::default()
    };
    let (rows, s) = task.study()?;
    for r in rows.iter().take(5) {
        println!("trial {:>3}  theta_hat {:.5}  error {:+.5}", r.trial, r.theta_hat, r.error);
    }
    println!("...");
    println!("std {:.5} rad over {} runs", s.std, s.repeats);
    println!("bound for the split {:.5}, all pairs at N {:.5}", s.split_bound, s.heisenberg_bound);
    Ok(())
}
