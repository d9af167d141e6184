use std::time::Instant;

use anyhow::{bail, Context};
use qfusion::circuit::{build_ansatz, AnsatzId};
use qfusion::data::MetricReport;
use qfusion::mitigation::{
    build_drem_corpus, train_drem, zne_estimate, CorpusSpec, DremLayer, DREM_HIDDEN,
};
use qfusion::noise::{ChannelKind, KrausChannel};
use qfusion::pqc_metrics::{entangling_capacity, expressibility};
use qfusion::qnn::QnnModel;
use qfusion::train::{LabelScaler, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EvalSplit, ModelKind, RunConfig};
use crate::output::Output;
use crate::pipeline::{
    self, expectation_mse, metrics, quantum_model, splits, variance, write_checkpoint,
    ClassicalCheckpoint, Fitted, FusionCheckpoint,
};

/// Samples per condition echoed in the noise-sweep report.
const PREVIEW: usize = 20;

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn metric_row(name: &str, m: &MetricReport) -> String {
    format!(
        "{name:<12} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
        m.rmse, m.mae, m.r2, m.pearson, m.spearman
    )
}

fn metric_header(first: &str) -> String {
    format!("{first:<12} {:>8} {:>8} {:>8} {:>8} {:>8}", "RMSE", "MAE", "R2", "Pearson", "Spearman")
}

#[derive(Serialize)]
struct ModelReport {
    model: &'static str,
    total_params: usize,
    epochs_run: usize,
    best_epoch: usize,
    best_val_loss: f64,
    train_ms: f64,
    validation: Option<MetricReport>,
    test: MetricReport,
}

#[derive(Serialize)]
struct TrainReport {
    train_samples: usize,
    validation_samples: usize,
    test_samples: usize,
    models: Vec<ModelReport>,
}

pub fn train(config: &RunConfig, out: &Output) -> anyhow::Result<()> {
    let s = splits(config)?;
    let mut models = Vec::new();
    let kind = config.model.kind;
    let validation_metrics = |pred: &[f64]| -> anyhow::Result<Option<MetricReport>> {
        if s.validation.len() < 2 {
            return Ok(None);
        }
        metrics(pred, &s.validation).map(Some)
    };

    if matches!(kind, ModelKind::Quantum | ModelKind::Both) {
        let fit = pipeline::fit(pipeline::new_quantum(config)?, config, &s)?;
        let t = &fit.trained;
        out.write_csv(&out.log("quantum_convergence.csv"), &t.log.to_csv())?;
        write_checkpoint(
            out,
            &out.checkpoint("quantum.json"),
            FusionCheckpoint::Quantum(t.model.to_checkpoint(Some(t.scaler))),
        )?;
        models.push(ModelReport {
            model: "quantum",
            total_params: t.model.total_params(),
            epochs_run: t.log.epochs.len(),
            best_epoch: t.log.best_epoch,
            best_val_loss: t.log.best_val_loss(),
            train_ms: fit.train_ms,
            validation: validation_metrics(&t.predict_all(&s.validation)?)?,
            test: metrics(&t.predict_all(&s.test)?, &s.test)?,
        });
    }
    if matches!(kind, ModelKind::Classical | ModelKind::Both) {
        let fit = pipeline::fit(pipeline::new_classical(config), config, &s)?;
        let t = &fit.trained;
        out.write_csv(&out.log("classical_convergence.csv"), &t.log.to_csv())?;
        write_checkpoint(
            out,
            &out.checkpoint("classical.json"),
            FusionCheckpoint::Classical(ClassicalCheckpoint {
                net: t.model.clone(),
                scaler: t.scaler,
            }),
        )?;
        models.push(ModelReport {
            model: "classical",
            total_params: t.model.total_params(),
            epochs_run: t.log.epochs.len(),
            best_epoch: t.log.best_epoch,
            best_val_loss: t.log.best_val_loss(),
            train_ms: fit.train_ms,
            validation: validation_metrics(&t.predict_all(&s.validation)?)?,
            test: metrics(&t.predict_all(&s.test)?, &s.test)?,
        });
    }

    println!("{}", metric_header("test"));
    for m in &models {
        println!("{}", metric_row(m.model, &m.test));
    }
    let report = TrainReport {
        train_samples: s.train.len(),
        validation_samples: s.validation.len(),
        test_samples: s.test.len(),
        models,
    };
    let path = out.write_report("train", config, &report)?;
    println!("report: {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct CircuitRecord {
    ansatz: u8,
    layers: usize,
    qubits: usize,
    circuit_params: usize,
    head_params: usize,
    expressibility_kl: f64,
    untrainable: bool,
    entangling_capacity: f64,
    wall_ms: f64,
}

#[derive(Serialize)]
struct PqcReport {
    samples: usize,
    bins: usize,
    circuits: Vec<CircuitRecord>,
    layer_sweep: Vec<CircuitRecord>,
}

fn circuit_record(config: &RunConfig, ansatz: AnsatzId, layers: usize) -> anyhow::Result<CircuitRecord> {
    let q = &config.pqc;
    let start = Instant::now();
    let circuit = build_ansatz(ansatz, q.qubits, layers)?;
    let expr = expressibility(&circuit, q.samples, q.bins, config.seed)?;
    let ent = entangling_capacity(&circuit, q.samples, config.seed)?;
    Ok(CircuitRecord {
        ansatz: ansatz.get(),
        layers,
        qubits: q.qubits,
        circuit_params: circuit.num_params(),
        head_params: q.qubits + 1,
        expressibility_kl: expr.kl_divergence,
        untrainable: expr.untrainable,
        entangling_capacity: ent.mean_q,
        wall_ms: ms(start),
    })
}

pub fn pqc_metrics(config: &RunConfig, out: &Output) -> anyhow::Result<()> {
    let q = &config.pqc;
    let circuits = AnsatzId::ALL
        .iter()
        .map(|&a| circuit_record(config, a, q.layers))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let layer_sweep = q
        .sweep_layers
        .iter()
        .map(|&l| circuit_record(config, q.sweep_ansatz, l))
        .collect::<anyhow::Result<Vec<_>>>()?;

    println!("{:<8} {:>6} {:>8} {:>6} {:>10} {:>10}", "circuit", "layers", "params", "head", "KL", "Q");
    for r in circuits.iter().chain(&layer_sweep) {
        println!(
            "{:<8} {:>6} {:>8} {:>6} {:>10.4} {:>10.4}",
            r.ansatz, r.layers, r.circuit_params, r.head_params, r.expressibility_kl, r.entangling_capacity
        );
    }
    let report = PqcReport {
        samples: q.samples,
        bins: q.bins,
        circuits,
        layer_sweep,
    };
    let path = out.write_report("pqc-metrics", config, &report)?;
    println!("report: {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct MethodResult {
    metrics: MetricReport,
    prediction_variance: f64,
    /// Mean squared deviation of `<Z>` from the noiseless values.
    expectation_mse: f64,
    first_predictions: Vec<f64>,
}

#[derive(Serialize)]
struct Condition {
    channel: ChannelKind,
    p: f64,
    noisy: MethodResult,
    drem: Option<MethodResult>,
    zne: Option<MethodResult>,
    wall_ms: f64,
}

#[derive(Serialize)]
struct NoiseSweepReport {
    test_samples: usize,
    first_ids: Vec<String>,
    first_labels: Vec<f64>,
    noiseless: MethodResult,
    conditions: Vec<Condition>,
}

struct Evaluated<'a> {
    model: &'a QnnModel,
    scaler: &'a LabelScaler,
    test: &'a [qfusion::data::FusionSample],
    noiseless: Vec<Vec<f64>>,
}

impl Evaluated<'_> {
    fn method(&self, expectations: Vec<Vec<f64>>) -> anyhow::Result<MethodResult> {
        let pred = expectations
            .iter()
            .map(|e| Ok(self.scaler.unscale(self.model.head_output(e)?)))
            .collect::<anyhow::Result<Vec<f64>>>()?;
        Ok(MethodResult {
            metrics: metrics(&pred, self.test)?,
            prediction_variance: variance(&pred),
            expectation_mse: expectation_mse(&expectations, &self.noiseless),
            first_predictions: pred.into_iter().take(PREVIEW).collect(),
        })
    }
}

fn drem_inputs(config: &RunConfig, s: &pipeline::Splits) -> Vec<Vec<f64>> {
    s.train
        .iter()
        .take(config.mitigation.drem_inputs)
        .map(|x| x.features.clone())
        .collect()
}

fn fit_drem(
    config: &RunConfig,
    channel: ChannelKind,
    p: f64,
    num_qnns: usize,
    inputs: &[Vec<f64>],
) -> anyhow::Result<(qfusion::mitigation::DremCorpus, CorpusSpec)> {
    let spec = CorpusSpec {
        channel,
        p,
        ansatz: config.model.ansatz,
        layers: config.model.layers,
        num_qnns,
        encoder: config.encoder()?,
        seed: config.seed,
    };
    Ok((build_drem_corpus(&spec, inputs)?, spec))
}

pub fn noise_sweep(config: &RunConfig, out: &Output) -> anyhow::Result<()> {
    let s = splits(config)?;
    let (model, scaler) = quantum_model(config, out, &s)?;
    let noiseless = s
        .test
        .par_iter()
        .map(|x| model.expectations(&x.features))
        .collect::<qfusion::Result<Vec<_>>>()?;
    let ev = Evaluated {
        model: &model,
        scaler: &scaler,
        test: &s.test,
        noiseless,
    };
    let inputs = drem_inputs(config, &s);
    let m = &config.mitigation;

    let mut conditions = Vec::new();
    println!("{}", metric_header("condition"));
    let base = ev.method(ev.noiseless.clone())?;
    println!("{}", metric_row("noiseless", &base.metrics));
    for &kind in &config.noise.channels {
        for &p in &config.noise.p {
            let start = Instant::now();
            let channel = KrausChannel::new(kind, p)?;
            let noisy = s
                .test
                .par_iter()
                .map(|x| model.noisy_expectations(&x.features, &channel))
                .collect::<qfusion::Result<Vec<_>>>()?;
            let drem = if m.drem {
                let (corpus, _) = fit_drem(config, kind, p, m.drem_qnns, &inputs)?;
                let layer = train_drem(&corpus, m.drem_alpha, &config.train)?;
                let mitigated = noisy
                    .iter()
                    .map(|e| layer.apply(e))
                    .collect::<qfusion::Result<Vec<_>>>()?;
                Some(ev.method(mitigated)?)
            } else {
                None
            };
            let zne = if m.zne {
                let extrapolated = s
                    .test
                    .par_iter()
                    .map(|x| {
                        zne_estimate(&model, &x.features, &channel, &m.zne_scale_factors)
                            .map(|z| z.expectations)
                    })
                    .collect::<qfusion::Result<Vec<_>>>()?;
                Some(ev.method(extrapolated)?)
            } else {
                None
            };
            let noisy = ev.method(noisy)?;
            let tag = format!("{kind} p={p}");
            println!("{}", metric_row(&format!("{tag} noisy"), &noisy.metrics));
            if let Some(d) = &drem {
                println!("{}", metric_row(&format!("{tag} DREM"), &d.metrics));
            }
            if let Some(z) = &zne {
                println!("{}", metric_row(&format!("{tag} ZNE"), &z.metrics));
            }
            conditions.push(Condition {
                channel: kind,
                p,
                noisy,
                drem,
                zne,
                wall_ms: ms(start),
            });
        }
    }
    let report = NoiseSweepReport {
        test_samples: s.test.len(),
        first_ids: s.test.iter().take(PREVIEW).map(|x| x.id.clone()).collect(),
        first_labels: s.test.iter().take(PREVIEW).map(|x| x.affinity).collect(),
        noiseless: base,
        conditions,
    };
    let path = out.write_report("noise-sweep", config, &report)?;
    println!("report: {}", path.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct DremCheckpoint {
    pub config_hash: String,
    pub spec: CorpusSpec,
    pub layer: DremLayer,
}

#[derive(Serialize)]
struct DremReport {
    spec: CorpusSpec,
    inputs: usize,
    training_qnns: usize,
    held_out_qnns: usize,
    drem_params: usize,
    hidden: [usize; 2],
    train_unmitigated_mse: f64,
    train_mitigated_mse: f64,
    held_out_unmitigated_mse: f64,
    held_out_mitigated_mse: f64,
    held_out_ratio: f64,
    corpus_ms: f64,
    drem_train_ms: f64,
    reference_train_ms: f64,
    reference_source: &'static str,
    time_fraction: f64,
    checksum: u64,
}

/// Fusion training time to compare the DREM time with: configured, from a
/// previous `train` report in the same output directory, or one measured
/// quantum epoch scaled to the configured epoch count.
fn reference_train_ms(config: &RunConfig, out: &Output) -> anyhow::Result<(f64, &'static str)> {
    if let Some(t) = config.mitigation.reference_train_ms {
        return Ok((t, "config"));
    }
    let from_report = std::fs::read_to_string(out.report("train.json"))
        .ok()
        .and_then(|text| serde_json::from_str::<serde_json::Value>(&text).ok())
        .and_then(|v| {
            v["results"]["models"]
                .as_array()?
                .iter()
                .find(|m| m["model"] == "quantum")?["train_ms"]
                .as_f64()
        });
    if let Some(t) = from_report {
        return Ok((t, "train report"));
    }
    let s = splits(config)?;
    let one_epoch = RunConfig {
        train: TrainConfig {
            epochs: 1,
            ..config.train.clone()
        },
        ..config.clone()
    };
    let fit = pipeline::fit(pipeline::new_quantum(config)?, &one_epoch, &s)?;
    Ok((fit.train_ms * config.train.epochs as f64, "one-epoch estimate"))
}

pub fn drem_train(config: &RunConfig, out: &Output) -> anyhow::Result<()> {
    let s = splits(config)?;
    let m = &config.mitigation;
    let inputs = drem_inputs(config, &s);
    let start = Instant::now();
    let (corpus, spec) = fit_drem(config, m.drem_channel, m.drem_p, m.drem_qnns + m.drem_held_out, &inputs)?;
    let corpus_ms = ms(start);
    corpus.save(out.checkpoint("drem_corpus.json"))?;
    let (train_c, held_out) = corpus.split_qnns(m.drem_held_out)?;

    let start = Instant::now();
    let layer = train_drem(&train_c, m.drem_alpha, &config.train)?;
    let drem_train_ms = ms(start);
    if !layer.is_frozen() {
        bail!("DREM layer was not frozen after training");
    }
    let (reference, source) = reference_train_ms(config, out)?;

    let report = DremReport {
        spec: spec.clone(),
        inputs: inputs.len(),
        training_qnns: m.drem_qnns,
        held_out_qnns: m.drem_held_out,
        drem_params: layer.num_params(),
        hidden: DREM_HIDDEN,
        train_unmitigated_mse: train_c.unmitigated_mse()?,
        train_mitigated_mse: train_c.mitigated_mse(&layer)?,
        held_out_unmitigated_mse: held_out.unmitigated_mse()?,
        held_out_mitigated_mse: held_out.mitigated_mse(&layer)?,
        held_out_ratio: held_out.mitigated_mse(&layer)? / held_out.unmitigated_mse()?,
        corpus_ms,
        drem_train_ms,
        reference_train_ms: reference,
        reference_source: source,
        time_fraction: drem_train_ms / reference,
        checksum: layer.checksum(),
    };
    out.write_json(
        &out.checkpoint("drem.json"),
        &DremCheckpoint {
            config_hash: out.hash().to_string(),
            spec,
            layer,
        },
    )?;
    println!(
        "held-out <Z> MSE: unmitigated {:.6}, mitigated {:.6} (ratio {:.3})",
        report.held_out_unmitigated_mse, report.held_out_mitigated_mse, report.held_out_ratio
    );
    println!(
        "DREM training {:.0} ms = {:.1}% of fusion training ({})",
        report.drem_train_ms,
        100.0 * report.time_fraction,
        report.reference_source
    );
    let path = out.write_report("drem-train", config, &report)?;
    println!("report: {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct ZneCondition {
    channel: ChannelKind,
    p: f64,
    noisy_expectation_mse: f64,
    zne_expectation_mse: f64,
    noisy: MetricReport,
    zne: MetricReport,
    base_gates_per_sample: usize,
    gate_executions: u64,
    wall_ms: f64,
}

#[derive(Serialize)]
struct ZneReport {
    scale_factors: Vec<usize>,
    test_samples: usize,
    noiseless: MetricReport,
    conditions: Vec<ZneCondition>,
}

pub fn zne_eval(config: &RunConfig, out: &Output) -> anyhow::Result<()> {
    let s = splits(config)?;
    let (model, scaler) = quantum_model(config, out, &s)?;
    let scales = &config.mitigation.zne_scale_factors;
    let noiseless = s
        .test
        .par_iter()
        .map(|x| model.expectations(&x.features))
        .collect::<qfusion::Result<Vec<_>>>()?;
    let head = |e: &[Vec<f64>]| -> anyhow::Result<Vec<f64>> {
        e.iter()
            .map(|v| Ok(scaler.unscale(model.head_output(v)?)))
            .collect()
    };
    let base = metrics(&head(&noiseless)?, &s.test)?;
    let mut conditions = Vec::new();
    println!("{:<28} {:>12} {:>12} {:>8} {:>8}", "condition", "noisy <Z>", "ZNE <Z>", "R2", "R2 ZNE");
    for &kind in &config.noise.channels {
        for &p in &config.noise.p {
            let start = Instant::now();
            let channel = KrausChannel::new(kind, p)?;
            let estimates = s
                .test
                .par_iter()
                .map(|x| zne_estimate(&model, &x.features, &channel, scales))
                .collect::<qfusion::Result<Vec<_>>>()?;
            let noisy: Vec<Vec<f64>> = estimates.iter().map(|e| e.per_scale[0].clone()).collect();
            let zne: Vec<Vec<f64>> = estimates.iter().map(|e| e.expectations.clone()).collect();
            let c = ZneCondition {
                channel: kind,
                p,
                noisy_expectation_mse: expectation_mse(&noisy, &noiseless),
                zne_expectation_mse: expectation_mse(&zne, &noiseless),
                noisy: metrics(&head(&noisy)?, &s.test)?,
                zne: metrics(&head(&zne)?, &s.test)?,
                base_gates_per_sample: model.circuit().num_gates(),
                gate_executions: estimates.iter().map(|e| e.gate_executions).sum(),
                wall_ms: ms(start),
            };
            println!(
                "{:<28} {:>12.6} {:>12.6} {:>8.4} {:>8.4}",
                format!("{kind} p={p}"),
                c.noisy_expectation_mse,
                c.zne_expectation_mse,
                c.noisy.r2,
                c.zne.r2
            );
            conditions.push(c);
        }
    }
    let report = ZneReport {
        scale_factors: scales.clone(),
        test_samples: s.test.len(),
        noiseless: base,
        conditions,
    };
    let path = out.write_report("zne-eval", config, &report)?;
    println!("report: {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct SynthReport {
    path: String,
    samples: usize,
    noise_sigma: f64,
    label_min: f64,
    label_max: f64,
    label_mean: f64,
}

pub fn synth_data(config: &RunConfig, out: &Output) -> anyhow::Result<()> {
    let data = qfusion::data::synth_dataset(config.data.synth_samples, config.seed, config.data.synth_noise)?;
    let path = out.data("synthetic.csv")?;
    let mut body = Vec::new();
    qfusion::data::write_dataset(&mut body, &data)?;
    out.write_csv(&path, &String::from_utf8(body).context("dataset is not UTF-8")?)?;
    let y = pipeline::labels(&data);
    let report = SynthReport {
        path: path.display().to_string(),
        samples: data.len(),
        noise_sigma: config.data.synth_noise,
        label_min: y.iter().copied().fold(f64::INFINITY, f64::min),
        label_max: y.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        label_mean: y.iter().sum::<f64>() / y.len() as f64,
    };
    println!("wrote {} samples to {}", data.len(), path.display());
    out.write_report("synth-data", config, &report)?;
    Ok(())
}

#[derive(Serialize)]
struct EvaluateReport {
    checkpoint: String,
    model: &'static str,
    split: EvalSplit,
    samples: usize,
    metrics: MetricReport,
}

pub fn evaluate(config: &RunConfig, out: &Output) -> anyhow::Result<()> {
    let ckpt_path = config
        .model
        .checkpoint
        .clone()
        .unwrap_or_else(|| out.checkpoint("quantum.json"));
    let fitted = Fitted::from_checkpoint(pipeline::read_checkpoint(&ckpt_path)?)?;
    let s = splits(config)?;
    let samples = match config.evaluate.split {
        EvalSplit::Train => s.train.clone(),
        EvalSplit::Validation => s.validation.clone(),
        EvalSplit::Test => s.test.clone(),
        EvalSplit::All => s.all(),
    };
    let pred = fitted.predict_all(&samples)?;
    let report = EvaluateReport {
        checkpoint: ckpt_path.display().to_string(),
        model: fitted.name(),
        split: config.evaluate.split,
        samples: samples.len(),
        metrics: metrics(&pred, &samples)?,
    };
    let mut csv = String::from("id,label,prediction\n");
    for (x, p) in samples.iter().zip(&pred) {
        csv += &format!("{},{},{}\n", x.id, x.affinity, p);
    }
    out.write_csv(&out.report("evaluate_predictions.csv"), &csv)?;
    println!("{}", metric_header("split"));
    println!("{}", metric_row(&format!("{:?}", config.evaluate.split).to_lowercase(), &report.metrics));
    let path = out.write_report("evaluate", config, &report)?;
    println!("report: {}", path.display());
    Ok(())
}
