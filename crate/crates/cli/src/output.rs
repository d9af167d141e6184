//! Output directory layout:
//!
//! ```text
//! <out>/checkpoints/  quantum.json, classical.json, drem.json, drem_corpus.json
//! <out>/logs/         <model>_convergence.csv
//! <out>/reports/      <command>.json, evaluate_predictions.csv
//! <out>/data/         synthetic.csv
//! ```
//!
//! JSON files carry a `config_hash` field, CSV files a leading
//! `# config_hash: ...` comment line.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Serialize)]
struct Envelope<'a, T> {
    command: &'a str,
    config_hash: &'a str,
    config: &'a RunConfig,
    results: &'a T,
}

pub struct Output {
    root: PathBuf,
    hash: String,
}

impl Output {
    pub fn create(root: &Path, hash: String) -> anyhow::Result<Self> {
        for dir in ["checkpoints", "logs", "reports"] {
            let d = root.join(dir);
            fs::create_dir_all(&d).with_context(|| format!("cannot create {}", d.display()))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            hash,
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(name)
    }

    pub fn log(&self, name: &str) -> PathBuf {
        self.root.join("logs").join(name)
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn data(&self, name: &str) -> anyhow::Result<PathBuf> {
        let dir = self.root.join("data");
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(dir.join(name))
    }

    pub fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
    }

    /// Writes `<out>/reports/<command>.json`.
    pub fn write_report<T: Serialize>(
        &self,
        command: &str,
        config: &RunConfig,
        results: &T,
    ) -> anyhow::Result<PathBuf> {
        let path = self.report(&format!("{command}.json"));
        let env = Envelope {
            command,
            config_hash: &self.hash,
            config,
            results,
        };
        self.write_json(&path, &env)?;
        Ok(path)
    }

    /// Writes CSV text behind a config-hash comment line.
    pub fn write_csv(&self, path: &Path, body: &str) -> anyhow::Result<()> {
        let text = format!("# config_hash: {}\n{body}", self.hash);
        fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}
