mod common;

use common::{central_diff, random_vec, rng, worst_rel_excess};
use qfusion::circuit::{AnsatzId, Circuit, GateKind, GateSpec};
use qfusion::encoding::EncoderConfig;
use qfusion::mitigation::{build_drem_corpus, train_drem, CorpusSpec, DEFAULT_ALPHA};
use qfusion::nn::{Activation, ClassicalFusion, DenseNet};
use qfusion::noise::{noisy_execute, ChannelKind, KrausChannel};
use qfusion::qnn::{expectation_jacobian, NoisyQnn, QnnModel};
use qfusion::sim::StateVector;
use qfusion::train::{Regressor, TrainConfig};
use rand::Rng;

const H: f64 = 1e-6;
const REL: f64 = 1e-4;
const FLOOR: f64 = 1e-8;

fn assert_close(analytic: &[f64], fd: &[f64]) {
    let excess = worst_rel_excess(analytic, fd, REL);
    assert!(excess <= FLOOR, "excess {excess:e}\n{analytic:?}\n{fd:?}");
}

fn qnn(ansatz: i64, layers: usize, seed: u64) -> QnnModel {
    QnnModel::new(
        EncoderConfig::amplitude(16).unwrap(),
        AnsatzId::new(ansatz).unwrap(),
        layers,
        seed,
    )
    .unwrap()
}

#[test]
fn classical_baseline_matches_finite_differences() {
    let mut r = rng(1);
    for seed in 0..10 {
        let model = ClassicalFusion::new(&mut rng(seed));
        let x = random_vec(&mut r, 16, 0.0, 2.0);
        let y = r.random_range(0.0..1.0);
        let (_, g) = model.sample_gradient(&x, y).unwrap();
        let loss = |p: &[f64]| {
            let mut m = model.clone();
            Regressor::set_params(&mut m, p).unwrap();
            (m.forward(&x).unwrap() - y).powi(2)
        };
        assert_close(&g, &central_diff(loss, &Regressor::params(&model), H));
    }
}

#[test]
fn dense_net_parameter_and_input_gradients() {
    let mut r = rng(2);
    let net = DenseNet::init(
        &[4, 32, 16, 4],
        &[Activation::Relu, Activation::Relu, Activation::Identity],
        &mut r,
    )
    .unwrap();
    for _ in 0..10 {
        let x = random_vec(&mut r, 4, -1.0, 1.0);
        let w = random_vec(&mut r, 4, -1.0, 1.0);
        let dot = |net: &DenseNet, x: &[f64]| {
            net.forward(x).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let g = net.backward(&x, &w).unwrap();
        let by_params = central_diff(
            |p| {
                let mut n = net.clone();
                n.set_params(p).unwrap();
                dot(&n, &x)
            },
            &net.params(),
            H,
        );
        assert_close(&g.params, &by_params);
        assert_close(&g.input, &central_diff(|v| dot(&net, v), &x, H));
    }
}

fn single_gate_circuit(kind: GateKind) -> Circuit {
    // random-angle preparation on both qubits so every generator acts on a
    // generic state, then the gate under test on (0, 1)
    let mut gates = vec![
        GateSpec::parametric(GateKind::Rot, &[0], &[0, 1, 2]),
        GateSpec::parametric(GateKind::Rot, &[1], &[3, 4, 5]),
    ];
    let k = kind.num_params();
    let targets: Vec<usize> = (0..kind.arity()).collect();
    let slots: Vec<usize> = (6..6 + k).collect();
    gates.push(if k == 0 {
        GateSpec::fixed(kind, &targets)
    } else {
        GateSpec::parametric(kind, &targets, &slots)
    });
    gates.push(GateSpec::parametric(GateKind::Ry, &[1], &[6 + k]));
    Circuit::new(2, gates, 7 + k).unwrap()
}

fn jacobian_vs_fd(circuit: &Circuit, params: &[f64]) {
    let zero = StateVector::zero(circuit.num_qubits()).unwrap();
    let jac = expectation_jacobian(circuit, params, &zero).unwrap();
    for q in 0..circuit.num_qubits() {
        let ez = |p: &[f64]| {
            let mut s = zero.clone();
            circuit.bind(p).unwrap().run(&mut s).unwrap();
            s.expectation_z(q).unwrap()
        };
        let column: Vec<f64> = jac.iter().map(|row| row[q]).collect();
        assert_close(&column, &central_diff(ez, params, H));
    }
}

#[test]
fn parameter_shift_is_exact_for_every_gate_kind() {
    let mut r = rng(3);
    for kind in GateKind::ALL {
        let c = single_gate_circuit(kind);
        for _ in 0..5 {
            let params = random_vec(&mut r, c.num_params(), -3.0, 3.0);
            jacobian_vs_fd(&c, &params);
            jacobian_vs_fd(&c.inverse(), &params);
            jacobian_vs_fd(&c.fold_global(3).unwrap(), &params);
        }
    }
}

#[test]
fn ry_readout_derivative_is_minus_sine() {
    let c = Circuit::new(1, vec![GateSpec::parametric(GateKind::Ry, &[0], &[0])], 1).unwrap();
    let zero = StateVector::zero(1).unwrap();
    for i in 0..32 {
        let t = -3.0 + 6.0 * i as f64 / 31.0;
        let j = expectation_jacobian(&c, &[t], &zero).unwrap();
        assert!((j[0][0] + t.sin()).abs() < 1e-14);
    }
}

#[test]
fn noisy_parameter_shift_matches_finite_differences() {
    let model = qnn(4, 1, 5);
    let x: Vec<f64> = (0..16).map(|i| 0.2 + (i as f64 * 1.3).sin().abs()).collect();
    let w = [0.3, -1.0, 0.5, 0.8];
    for kind in ChannelKind::ALL {
        let ch = KrausChannel::new(kind, 0.07).unwrap();
        let g = model.noisy_theta_vjp(&x, &ch, &w).unwrap();
        let f = |theta: &[f64]| {
            let rho = noisy_execute(
                &model.circuit().bind(theta).unwrap(),
                model.encode(&x).unwrap().to_density_matrix(),
                &ch,
            )
            .unwrap();
            rho.expectations_z().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        assert_close(&g, &central_diff(f, model.theta(), H));
    }
}

#[test]
fn mitigated_noisy_model_gradient() {
    let inputs: Vec<Vec<f64>> = (0..6)
        .map(|s| (0..16).map(|i| 0.1 + ((i * 7 + s) as f64).cos().abs()).collect())
        .collect();
    let spec = CorpusSpec {
        channel: ChannelKind::Depolarizing,
        p: 0.05,
        ansatz: AnsatzId::new(1).unwrap(),
        layers: 1,
        num_qnns: 5,
        encoder: EncoderConfig::amplitude(16).unwrap(),
        seed: 1,
    };
    let layer = train_drem(
        &build_drem_corpus(&spec, &inputs).unwrap(),
        DEFAULT_ALPHA,
        &TrainConfig { epochs: 5, ..TrainConfig::default() },
    )
    .unwrap();
    let ch = KrausChannel::new(ChannelKind::Depolarizing, 0.05).unwrap();
    let mut model = NoisyQnn::new(qnn(1, 1, 6), ch, Some(layer)).unwrap();
    model.set_output_bias(3.0);
    let (_, g) = model.sample_gradient(&inputs[0], 0.4).unwrap();
    let loss = |p: &[f64]| {
        let mut m = model.clone();
        m.set_params(p).unwrap();
        (m.predict(&inputs[0]).unwrap() - 0.4).powi(2)
    };
    assert_close(&g, &central_diff(loss, &model.params(), H));
}

#[test]
fn gradient_vanishes_at_the_label() {
    let model = qnn(2, 2, 7);
    let mut r = rng(7);
    let xs: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut r, 16, 0.0, 1.0)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| model.forward(x).unwrap().prediction).collect();
    let batch: Vec<(&[f64], f64)> = xs.iter().map(Vec::as_slice).zip(ys).collect();
    let g = model.gradient(&batch).unwrap();
    assert!(g.loss.abs() < 1e-20);
    assert!(g.theta.iter().chain(&g.head).all(|v| v.abs() < 1e-10));
}
