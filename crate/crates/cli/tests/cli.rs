use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

/// Small, fast settings shared by the tests below.
const FAST: &str = r#"
seed = 3

[model]
kind = "quantum"
layers = 2

[train]
epochs = 3
batch_size = 50

[data]
synth_samples = 200
synth_noise = 0.1

[mitigation]
drem_qnns = 6
drem_held_out = 2
drem_inputs = 10

[pqc]
samples = 200
bins = 20
sweep_layers = [1, 2, 3]
"#;

fn qfusion(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("fast.toml");
    if !config.exists() {
        std::fs::write(&config, FAST).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_qfusion"))
        .args(args)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn report(dir: &Path, command: &str) -> Value {
    read_json(&dir.join("out/reports").join(format!("{command}.json")))
}

fn metric_keys(m: &Value) -> bool {
    ["rmse", "mae", "r2", "pearson", "spearman"]
        .iter()
        .all(|k| m[k].is_f64())
}

#[test]
fn train_writes_checkpoint_logs_and_report() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qfusion(dir.path(), &["train"]));
    let out = dir.path().join("out");
    let r = report(dir.path(), "train");
    let hash = r["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);

    let ckpt = read_json(&out.join("checkpoints/quantum.json"));
    assert_eq!(ckpt["config_hash"], hash.as_str());
    assert_eq!(ckpt["checkpoint"]["model"], "quantum");
    let log = std::fs::read_to_string(out.join("logs/quantum_convergence.csv")).unwrap();
    assert!(log.starts_with(&format!("# config_hash: {hash}\n")));
    assert_eq!(log.lines().count(), 2 + 4, "comment, header, epoch 0 and 3 epochs");

    let models = r["results"]["models"].as_array().unwrap();
    assert_eq!(models.len(), 1);
    assert_eq!(models[0]["total_params"], 24 + 5);
    assert!(metric_keys(&models[0]["test"]) && metric_keys(&models[0]["validation"]));
}

#[test]
fn both_models_share_splits_and_report_five_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = qfusion(dir.path(), &["train", "--set", "model.kind=\"both\""]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("quantum") && stdout.contains("classical") && stdout.contains("Spearman"));
    let models = report(dir.path(), "train")["results"]["models"].clone();
    let names: Vec<&str> = models.as_array().unwrap().iter().map(|m| m["model"].as_str().unwrap()).collect();
    assert_eq!(names, ["quantum", "classical"]);
    for m in models.as_array().unwrap() {
        assert!(metric_keys(&m["test"]));
    }
    assert!(dir.path().join("out/checkpoints/classical.json").exists());
}

#[test]
fn runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&qfusion(a.path(), &["train"]));
    ok(&qfusion(b.path(), &["train", "--threads", "1"]));
    let ca = std::fs::read_to_string(a.path().join("out/checkpoints/quantum.json")).unwrap();
    let cb = std::fs::read_to_string(b.path().join("out/checkpoints/quantum.json")).unwrap();
    assert_eq!(ca, cb);
    let (ra, rb) = (report(a.path(), "train"), report(b.path(), "train"));
    assert_eq!(ra["config_hash"], rb["config_hash"]);
    assert_eq!(ra["results"]["models"][0]["test"], rb["results"]["models"][0]["test"]);
}

#[test]
fn invalid_ansatz_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = qfusion(dir.path(), &["train", "--set", "model.ansatz=7"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("1..=6"));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["train", "--set", "model.depth=3"],
        vec!["train", "--set", "train.seed=4"],
        vec!["zne-eval", "--set", "mitigation.zne_scale_factors=[1,2]"],
        vec!["train", "--set", "model.layers=15"],
        vec!["no-such-command"],
    ] {
        let out = qfusion(dir.path(), &args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
    let unknown = qfusion(dir.path(), &["train", "--set", "model.depth=3"]);
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("depth"));
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = qfusion(dir.path(), &["evaluate", "--checkpoint", "/nonexistent/model.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = qfusion(dir.path(), &["train", "--set", "data.path=\"/nonexistent/data.csv\""]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pqc_metrics_report_parameter_counts_and_layer_sweep() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qfusion(dir.path(), &["pqc-metrics"]));
    let r = report(dir.path(), "pqc-metrics");
    let circuits = r["results"]["circuits"].as_array().unwrap();
    let params: Vec<u64> = circuits.iter().map(|c| c["circuit_params"].as_u64().unwrap()).collect();
    assert_eq!(params, [120, 40, 40, 160, 160, 280]);
    assert!(circuits.iter().all(|c| c["head_params"] == 5 && c["layers"] == 10));
    let sweep = r["results"]["layer_sweep"].as_array().unwrap();
    let layers: Vec<u64> = sweep.iter().map(|c| c["layers"].as_u64().unwrap()).collect();
    assert_eq!(layers, [1, 2, 3]);

    let again = tempfile::tempdir().unwrap();
    ok(&qfusion(again.path(), &["pqc-metrics"]));
    let r2 = report(again.path(), "pqc-metrics");
    for (a, b) in circuits.iter().zip(r2["results"]["circuits"].as_array().unwrap()) {
        assert_eq!(a["expressibility_kl"], b["expressibility_kl"]);
        assert_eq!(a["entangling_capacity"], b["entangling_capacity"]);
    }
}

#[test]
fn noise_sweep_covers_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qfusion(dir.path(), &["train"]));
    let ckpt = dir.path().join("out/checkpoints/quantum.json");
    let out = qfusion(
        dir.path(),
        &["noise-sweep", "--checkpoint", ckpt.to_str().unwrap(), "--set", "train.epochs=2"],
    );
    ok(&out);
    let r = report(dir.path(), "noise-sweep")["results"].clone();
    let conditions = r["conditions"].as_array().unwrap();
    assert_eq!(conditions.len(), 9);
    assert_eq!(r["first_labels"].as_array().unwrap().len(), 20);
    for c in conditions {
        for method in ["noisy", "drem", "zne"] {
            assert!(metric_keys(&c[method]["metrics"]), "{method}");
            assert_eq!(c[method]["first_predictions"].as_array().unwrap().len(), 20);
        }
    }
}

#[test]
fn noise_free_condition_matches_noiseless() {
    let dir = tempfile::tempdir().unwrap();
    let out = qfusion(
        dir.path(),
        &["noise-sweep", "--set", "noise.p=[0.0]", "--set", "mitigation.drem=false"],
    );
    ok(&out);
    let r = report(dir.path(), "noise-sweep")["results"].clone();
    assert!(dir.path().join("out/checkpoints/quantum.json").exists());
    let base = &r["noiseless"]["metrics"];
    for c in r["conditions"].as_array().unwrap() {
        for method in ["noisy", "zne"] {
            for k in ["rmse", "mae", "r2", "pearson", "spearman"] {
                let d = (c[method]["metrics"][k].as_f64().unwrap() - base[k].as_f64().unwrap()).abs();
                assert!(d <= 1e-6, "{method} {k} differs by {d}");
            }
        }
        assert!(c["drem"].is_null());
    }
}

#[test]
fn strong_depolarizing_noise_flattens_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let out = qfusion(
        dir.path(),
        &[
            "noise-sweep",
            "--set",
            "model.layers=10",
            "--set",
            "train.epochs=5",
            "--set",
            "noise.channels=[\"depolarizing\"]",
            "--set",
            "noise.p=[0.1]",
            "--set",
            "mitigation.drem=false",
            "--set",
            "mitigation.zne=false",
        ],
    );
    ok(&out);
    let r = report(dir.path(), "noise-sweep")["results"].clone();
    let clean = r["noiseless"]["prediction_variance"].as_f64().unwrap();
    let noisy = r["conditions"][0]["noisy"]["prediction_variance"].as_f64().unwrap();
    assert!(clean > 0.0);
    assert!(noisy < clean, "noisy variance {noisy} vs noiseless {clean}");
}

#[test]
fn drem_train_persists_a_frozen_layer_and_reports_timing() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qfusion(dir.path(), &["drem-train", "--set", "mitigation.reference_train_ms=1000.0"]));
    let r = report(dir.path(), "drem-train")["results"].clone();
    assert!(r["time_fraction"].as_f64().unwrap() > 0.0);
    assert_eq!(r["reference_source"], "config");
    assert_eq!(r["drem_params"], 756);
    let ckpt = read_json(&dir.path().join("out/checkpoints/drem.json"));
    assert_eq!(ckpt["layer"]["frozen"], true);
    assert_eq!(ckpt["config_hash"], report(dir.path(), "drem-train")["config_hash"]);
}

#[test]
fn drem_train_without_noise_learns_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qfusion(
        dir.path(),
        &[
            "drem-train",
            "--set",
            "mitigation.drem_p=0.0",
            "--set",
            "mitigation.drem_qnns=40",
            "--set",
            "mitigation.drem_held_out=10",
            "--set",
            "mitigation.drem_inputs=25",
            "--set",
            "train.epochs=100",
            "--set",
            "train.batch_size=50",
        ],
    ));
    let r = report(dir.path(), "drem-train")["results"].clone();
    // density-matrix and state-vector paths agree up to rounding
    assert!(r["held_out_unmitigated_mse"].as_f64().unwrap() < 1e-20);
    let mse = r["held_out_mitigated_mse"].as_f64().unwrap();
    assert!(mse <= 1e-3, "held-out MSE {mse}");
    assert!(r["time_fraction"].is_f64());
}

#[test]
fn zne_eval_counts_folded_gates() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qfusion(
        dir.path(),
        &["zne-eval", "--set", "noise.channels=[\"depolarizing\"]", "--set", "noise.p=[0.05]"],
    ));
    let r = report(dir.path(), "zne-eval")["results"].clone();
    let c = &r["conditions"][0];
    let base = c["base_gates_per_sample"].as_u64().unwrap();
    let samples = r["test_samples"].as_u64().unwrap();
    assert_eq!(c["gate_executions"].as_u64().unwrap(), samples * base * (1 + 3));
    assert!(metric_keys(&c["zne"]));
}

#[test]
fn synthetic_data_feeds_training_and_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qfusion(dir.path(), &["synth-data"]));
    let data = dir.path().join("out/data/synthetic.csv");
    let text = std::fs::read_to_string(&data).unwrap();
    assert!(text.starts_with("# config_hash: "));
    assert_eq!(text.lines().count(), 2 + 200);

    let with_file = ["--set", &format!("data.path=\"{}\"", data.display())];
    let mut train = vec!["train"];
    train.extend(with_file);
    ok(&qfusion(dir.path(), &train));
    let mut eval = vec!["evaluate"];
    eval.extend(with_file);
    ok(&qfusion(dir.path(), &eval));
    let trained = report(dir.path(), "train")["results"]["models"][0]["test"].clone();
    let evaluated = report(dir.path(), "evaluate")["results"].clone();
    assert_eq!(evaluated["model"], "quantum");
    assert_eq!(evaluated["metrics"], trained);
    let preds = std::fs::read_to_string(dir.path().join("out/reports/evaluate_predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 2 + evaluated["samples"].as_u64().unwrap() as usize);
}
