use qisac::channel::Adversary;
use qisac::estimate::{wrap_pi, Estimator};
use qisac::protocol::{
    counts_from_records, random_message, read_records, run_qisac, run_twostep_baseline, AbortReason, MessageBits, Mode,
    ProtocolConfig, Role, Session, Stage,
};
use qisac::states::LambdaVec;
use qisac::Error;

fn config(m: usize, seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        m,
        seed,
        ..ProtocolConfig::default()
    }
}

#[test]
fn noiseless_run_delivers_message_and_phase() {
    let cfg = ProtocolConfig {
        n_passes: 4,
        theta_true: 2.3,
        ..config(4000, 3)
    };
    let msg = random_message(&cfg, Mode::Qisac);
    let t = run_qisac(&cfg, &msg).unwrap();
    assert!(!t.aborted());
    assert_eq!(t.value_errors(), 0);
    assert_eq!(t.decoded().unwrap(), msg.as_slice());
    let est = t.estimate(Estimator::Mle).unwrap();
    assert!(wrap_pi(est.theta - 2.3).abs() < 0.02, "{}", est.theta);
}

#[test]
fn runs_are_reproducible_under_a_seed() {
    let cfg = ProtocolConfig { e: 0.03, ..config(600, 11) };
    let msg = random_message(&cfg, Mode::Qisac);
    let a = run_qisac(&cfg, &msg).unwrap();
    let b = run_qisac(&cfg, &msg).unwrap();
    assert_eq!(a, b);
    let c = run_qisac(&ProtocolConfig { seed: 12, ..cfg.clone() }, &msg).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn transcript_round_trips_through_text() {
    let cfg = ProtocolConfig { n_passes: 3, e: 0.02, ..config(500, 5) };
    let t = run_qisac(&cfg, &random_message(&cfg, Mode::Qisac)).unwrap();
    let text = t.records_string();
    let back = read_records(text.as_bytes()).unwrap();
    assert_eq!(back, t.records);
    assert_eq!(counts_from_records(&back), t.counts);
}

#[test]
fn double_cnot_is_caught_in_round_one() {
    let cfg = ProtocolConfig {
        adversary: Adversary::DoubleCnot,
        ..config(1000, 8)
    };
    let t = run_qisac(&cfg, &random_message(&cfg, Mode::Qisac)).unwrap();
    let abort = t.abort.expect("must abort");
    assert_eq!(abort.round, 1);
    assert!(t.decoded().is_none());
    let r1 = t.round1.unwrap();
    assert!(r1.epsilon_x > 0.3 && r1.epsilon_y > 0.3);
    assert_eq!(r1.epsilon_z, 0.0);
}

#[test]
fn asymmetry_tripwire_fires_when_the_qber_gate_is_open() {
    let cfg = ProtocolConfig {
        adversary: Adversary::DoubleCnot,
        qber_threshold_1: 0.5,
        ..config(4000, 2)
    };
    let t = run_qisac(&cfg, &random_message(&cfg, Mode::Qisac)).unwrap();
    assert_eq!(t.abort.map(|a| a.reason), Some(AbortReason::BasisAsymmetry));
}

#[test]
fn strong_collective_noise_aborts_and_weak_noise_passes() {
    let heavy = ProtocolConfig {
        adversary: Adversary::Collective {
            lambdas: LambdaVec::depolarizing(0.2).unwrap(),
        },
        ..config(2000, 4)
    };
    assert!(run_qisac(&heavy, &random_message(&heavy, Mode::Qisac)).unwrap().aborted());
    let light = ProtocolConfig { e: 0.005, ..config(2000, 4) };
    assert!(!run_qisac(&light, &random_message(&light, Mode::Qisac)).unwrap().aborted());
}

#[test]
fn baseline_decodes_two_bits_per_pair() {
    let cfg = config(800, 9);
    let symbols = random_message(&cfg, Mode::TwoStep);
    assert!(symbols.as_slice().iter().any(|&s| s > 1));
    let t = run_twostep_baseline(&cfg, &symbols).unwrap();
    assert!(!t.aborted());
    assert_eq!(t.value_errors(), 0);
    assert!(t.counts.groups().is_empty());
}

#[test]
fn stages_must_run_in_order() {
    let cfg = config(200, 1);
    let msg = random_message(&cfg, Mode::Qisac);
    let mut s = Session::new(&cfg, &msg, Mode::Qisac).unwrap();
    assert_eq!(s.stage(), Stage::Distributed);
    assert!(matches!(s.measure(), Err(Error::StageOrder { .. })));
    s.round1_check().unwrap();
    s.encode_and_sense().unwrap();
    s.round2_check().unwrap();
    s.measure().unwrap();
    let t = s.finish().unwrap();
    assert_eq!(t.records.iter().filter(|r| r.role == Role::Message).count(), cfg.partition().message);
}

#[test]
fn message_length_must_match_partition() {
    let cfg = config(200, 1);
    let short = MessageBits::new(vec![0, 1, 1]).unwrap();
    assert!(matches!(run_qisac(&cfg, &short), Err(Error::InvalidConfig(_))));
}

#[test]
fn guard_angle_is_removed_from_the_estimate() {
    let base = ProtocolConfig { theta_true: 0.4, ..config(3000, 21) };
    let msg = random_message(&base, Mode::Qisac);
    let plain = run_qisac(&base, &msg).unwrap().estimate(Estimator::Mle).unwrap();
    let guarded = ProtocolConfig { guard_angle: 1.1, ..base };
    let shifted = run_qisac(&guarded, &msg).unwrap().estimate(Estimator::Mle).unwrap();
    assert!(wrap_pi(plain.theta - 0.4).abs() < 0.1);
    assert!(wrap_pi(shifted.theta - 0.4).abs() < 0.1);
}
