//! The dense-coding baseline: two bits per message pair, no sensing.

use qisac::protocol::{run_twostep_baseline, MessageBits, ProtocolConfig};

fn main() -> qisac::Result<()> {
    let config = ProtocolConfig { m: 40, ..ProtocolConfig::default() };
    let n = config.partition().message;
    let symbols = MessageBits::symbols((0..n).map(|i| (i % 4) as u8).collect())?;
    let t = run_twostep_baseline(&config, &symbols)?;
    for r in t.messages().take(8) {
        println!("{r}");
    }
    println!("{} symbols, {} errors", n, t.value_errors());

    let noisy = ProtocolConfig { e: 0.03, m: 4000, ..config };
    let symbols = qisac::protocol::random_message(&noisy, qisac::protocol::Mode::TwoStep);
    let t = run_twostep_baseline(&noisy, &symbols)?;
    println!("at e = 0.03: symbol error rate {:.4}", t.value_errors() as f64 / symbols.len() as f64);
    Ok(())
}
