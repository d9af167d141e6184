mod common;

use qfusion::circuit::AnsatzId;
use qfusion::encoding::EncoderConfig;
use qfusion::noise::{ChannelKind, KrausChannel};
use qfusion::qnn::QnnModel;

fn features(seed: u64) -> Vec<f64> {
    common::random_vec(&mut common::rng(seed), 16, 0.0, 1.0)
}

fn model(ansatz: i64, layers: usize, seed: u64) -> QnnModel {
    QnnModel::new(EncoderConfig::amplitude(16).unwrap(), AnsatzId::new(ansatz).unwrap(), layers, seed).unwrap()
}

#[test]
fn expectations_are_bounded() {
    for id in 1..=6 {
        let m = model(id, 3, id as u64);
        let out = m.forward(&features(id as u64)).unwrap();
        assert_eq!(out.expectations.len(), 4);
        assert!(out.expectations.iter().all(|e| (-1.0..=1.0).contains(e)));
    }
}

#[test]
fn depolarizing_never_amplifies_a_product_state() {
    // circuit 3 at zero angles keeps |0000> a product state
    let mut m = model(3, 2, 1);
    let mut p = vec![0.0; m.theta().len()];
    p.extend(m.head().params());
    m.set_params(&p).unwrap();
    let mut x = vec![0.0; 16];
    x[0] = 1.0;
    let clean = m.forward(&x).unwrap();
    let ch = KrausChannel::new(ChannelKind::Depolarizing, 0.1).unwrap();
    let noisy = m.forward_noisy(&x, &ch).unwrap();
    for (a, b) in noisy.expectations.iter().zip(&clean.expectations) {
        assert!(a.abs() <= b.abs() + 1e-9);
    }
}

#[test]
fn full_depolarizing_drives_expectations_to_zero() {
    let m = model(1, 10, 2);
    let ch = KrausChannel::new(ChannelKind::Depolarizing, 1.0).unwrap();
    let out = m.forward_noisy(&features(2), &ch).unwrap();
    assert!(out.expectations.iter().all(|e| e.abs() < 1e-6));
    assert!((out.prediction - m.head_output(&[0.0; 4]).unwrap()).abs() < 1e-6);
}

#[test]
fn prediction_depends_on_the_circuit_only_through_expectations() {
    let m = model(4, 2, 3);
    let x = features(3);
    let out = m.forward(&x).unwrap();
    assert_eq!(out.prediction, m.head_output(&out.expectations).unwrap());
    let ch = KrausChannel::new(ChannelKind::AmplitudeDamping, 0.05).unwrap();
    let noisy = m.forward_noisy(&x, &ch).unwrap();
    assert_eq!(noisy.prediction, m.head_output(&noisy.expectations).unwrap());
}

#[test]
fn hae_model_runs_on_eight_qubits() {
    let m = QnnModel::new(EncoderConfig::hae(16, 2, 4).unwrap(), AnsatzId::new(1).unwrap(), 1, 4).unwrap();
    let out = m.forward(&features(4)).unwrap();
    assert_eq!(out.expectations.len(), 8);
    assert_eq!(m.total_params(), 24 + 9);
}

#[test]
fn invalid_configurations_are_rejected() {
    let enc = EncoderConfig::amplitude(16).unwrap();
    assert!(AnsatzId::new(7).is_err());
    assert!(QnnModel::new(enc, AnsatzId::new(1).unwrap(), 0, 0).is_err());
    assert!(QnnModel::new(enc, AnsatzId::new(1).unwrap(), 15, 0).is_err());
    let m = model(1, 1, 0);
    assert!(m.forward(&[1.0; 15]).is_err());
    assert!(m.forward(&[0.0; 16]).is_err());
}
