//! One run driven stage by stage, with the transcript written to stdout.

use qisac::estimate::Estimator;
use qisac::protocol::{random_message, Mode, ProtocolConfig, Session};

fn main() -> qisac::Result<()> {
    let config = ProtocolConfig {
        m: 60,
        n_passes: 3,
        e: 0.01,
        theta_true: 2.0,
        ..ProtocolConfig::default()
    };
    let message = random_message(&config, Mode::Qisac);
    let mut s = Session::new(&config, &message, Mode::Qisac)?;

    let r1 = s.round1_check()?;
    println!("round 1: {:?} checked, {:?} errors, passed {}", r1.checked, r1.errors, r1.passed);
    if r1.passed {
        s.encode_and_sense()?;
        let r2 = s.round2_check()?;
        println!("round 2: {} checked, {} errors, passed {}", r2.checked, r2.errors, r2.passed);
        if r2.passed {
            s.measure()?;
        }
    }
    let t = s.finish()?;
    print!("{}", t.records_string());
    if !t.aborted() {
        let est = t.estimate(Estimator::Mle)?;
        println!("value errors {}  theta_hat {:.4}", t.value_errors(), est.theta);
    }
    Ok(())
}
