//! Run configuration: a TOML file, `--set key=value` overrides and the
//! dedicated flags, merged in that order and validated before any work.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use qfusion::circuit::{AnsatzId, MAX_LAYERS, MIN_LAYERS};
use qfusion::data::FEATURE_DIM;
use qfusion::encoding::EncoderConfig;
use qfusion::mitigation::{validate_scale_factors, DEFAULT_ALPHA};
use qfusion::noise::ChannelKind;
use qfusion::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Quantum,
    Classical,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Amplitude,
    Hae,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Which fusion model(s) `train` fits.
    pub kind: ModelKind,
    pub ansatz: AnsatzId,
    pub layers: usize,
    pub encoder: EncoderKind,
    pub hae_blocks: usize,
    pub hae_qubits_per_block: usize,
    /// Existing checkpoint for `evaluate`, `noise-sweep` and `zne-eval`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Both,
            ansatz: AnsatzId::ALL[0],
            layers: 10,
            encoder: EncoderKind::Amplitude,
            hae_blocks: 2,
            hae_qubits_per_block: 4,
            checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV dataset; synthetic data is generated when absent.
    pub path: Option<PathBuf>,
    pub synth_samples: usize,
    pub synth_noise: f64,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            synth_samples: 2000,
            synth_noise: 0.0,
            test_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub channels: Vec<ChannelKind>,
    pub p: Vec<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            channels: ChannelKind::ALL.to_vec(),
            p: vec![0.01, 0.05, 0.1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MitigationConfig {
    /// Evaluate DREM in `noise-sweep`.
    pub drem: bool,
    /// Evaluate ZNE in `noise-sweep`.
    pub zne: bool,
    /// Channel used by `drem-train`.
    pub drem_channel: ChannelKind,
    pub drem_p: f64,
    pub drem_qnns: usize,
    pub drem_held_out: usize,
    pub drem_inputs: usize,
    pub drem_alpha: f64,
    pub zne_scale_factors: Vec<usize>,
    /// Fusion training time the DREM time is compared with. Taken from a
    /// previous `train` report, or estimated, when absent.
    pub reference_train_ms: Option<f64>,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self {
            drem: true,
            zne: true,
            drem_channel: ChannelKind::Depolarizing,
            drem_p: 0.05,
            drem_qnns: 100,
            drem_held_out: 20,
            drem_inputs: 50,
            drem_alpha: DEFAULT_ALPHA,
            zne_scale_factors: vec![1, 3],
            reference_train_ms: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PqcConfig {
    pub qubits: usize,
    pub layers: usize,
    pub samples: usize,
    pub bins: usize,
    pub sweep_ansatz: AnsatzId,
    pub sweep_layers: Vec<usize>,
}

impl Default for PqcConfig {
    fn default() -> Self {
        Self {
            qubits: 4,
            layers: 10,
            samples: 5000,
            bins: 75,
            sweep_ansatz: AnsatzId::ALL[0],
            sweep_layers: (MIN_LAYERS..=MAX_LAYERS).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub split: EvalSplit,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            split: EvalSplit::Test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Also used as the training seed.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub noise: NoiseConfig,
    pub mitigation: MitigationConfig,
    pub pqc: PqcConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            threads: 0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            noise: NoiseConfig::default(),
            mitigation: MitigationConfig::default(),
            pqc: PqcConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> anyhow::Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| anyhow!("empty key in `{key}`"))?;
    let mut cur = table;
    for part in parts {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("`{part}` in `{key}` is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    /// `key.path=value` pairs.
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub checkpoint: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> anyhow::Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                toml::from_str::<toml::Table>(&text)
                    .with_context(|| format!("invalid config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for item in &overrides.set {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("override `{item}` is not of the form key=value"))?;
            set_path(&mut table, key.trim(), parse_value(raw.trim()))?;
        }
        if let Some(seed) = overrides.seed {
            let seed = i64::try_from(seed).context("--seed does not fit a TOML integer")?;
            set_path(&mut table, "seed", toml::Value::Integer(seed))?;
        }
        if let Some(out) = &overrides.out {
            set_path(&mut table, "output_dir", toml::Value::String(out.display().to_string()))?;
        }
        if let Some(threads) = overrides.threads {
            set_path(&mut table, "threads", toml::Value::Integer(threads as i64))?;
        }
        if let Some(ckpt) = &overrides.checkpoint {
            set_path(
                &mut table,
                "model.checkpoint",
                toml::Value::String(ckpt.display().to_string()),
            )?;
        }
        if table
            .get("train")
            .and_then(toml::Value::as_table)
            .is_some_and(|t| t.contains_key("seed"))
        {
            bail!("`train.seed` is not accepted; set the top-level `seed` instead");
        }
        let mut config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| anyhow!("invalid configuration: {}", e.message()))?;
        config.train.seed = config.seed;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(MIN_LAYERS..=MAX_LAYERS).contains(&self.model.layers) {
            bail!(
                "model.layers = {} out of range; valid range is {MIN_LAYERS}..={MAX_LAYERS}",
                self.model.layers
            );
        }
        self.encoder()?;
        self.train.validate()?;
        let tf = self.data.test_fraction;
        if !(tf > 0.0 && tf < 1.0) {
            bail!("data.test_fraction = {tf} must lie strictly between 0 and 1");
        }
        if self.data.synth_samples == 0 {
            bail!("data.synth_samples must be positive");
        }
        if !(self.data.synth_noise >= 0.0 && self.data.synth_noise.is_finite()) {
            bail!("data.synth_noise must be finite and non-negative");
        }
        if self.noise.channels.is_empty() || self.noise.p.is_empty() {
            bail!("noise.channels and noise.p must be non-empty");
        }
        for &p in self.noise.p.iter().chain([&self.mitigation.drem_p]) {
            if !(0.0..=1.0).contains(&p) {
                bail!("noise probability {p} must lie in [0, 1]");
            }
        }
        validate_scale_factors(&self.mitigation.zne_scale_factors)?;
        let m = &self.mitigation;
        if m.drem_inputs == 0 || m.drem_qnns == 0 || m.drem_held_out == 0 {
            bail!("mitigation.drem_qnns, drem_held_out and drem_inputs must be positive");
        }
        if !(m.drem_alpha >= 0.0 && m.drem_alpha.is_finite()) {
            bail!("mitigation.drem_alpha must be finite and non-negative");
        }
        if m.reference_train_ms.is_some_and(|t| !t.is_finite() || t <= 0.0) {
            bail!("mitigation.reference_train_ms must be positive");
        }
        let q = &self.pqc;
        if !(1..=12).contains(&q.qubits) {
            bail!("pqc.qubits = {} out of range; valid range is 1..=12", q.qubits);
        }
        for &l in std::iter::once(&q.layers).chain(&q.sweep_layers) {
            if !(MIN_LAYERS..=MAX_LAYERS).contains(&l) {
                bail!("pqc layer count {l} out of range; valid range is {MIN_LAYERS}..={MAX_LAYERS}");
            }
        }
        if q.samples == 0 || q.bins < 2 {
            bail!("pqc.samples must be positive and pqc.bins at least 2");
        }
        Ok(())
    }

    pub fn encoder(&self) -> anyhow::Result<EncoderConfig> {
        Ok(match self.model.encoder {
            EncoderKind::Amplitude => EncoderConfig::amplitude(FEATURE_DIM)?,
            EncoderKind::Hae => EncoderConfig::hae(
                FEATURE_DIM,
                self.model.hae_blocks,
                self.model.hae_qubits_per_block,
            )?,
        })
    }

    /// SHA-256 of the resolved configuration. The output directory and thread
    /// count do not change results and are left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.threads = 0;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
