//! `qfusion` experiment runner.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

mod commands;
mod config;
mod output;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::output::Output;

#[derive(Parser)]
#[command(name = "qfusion", version, about = "Quantum fusion model experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads, 0 for the default (overrides `threads`).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Model checkpoint (overrides `model.checkpoint`).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,

    /// Override any config key, e.g. `--set train.epochs=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, Subcommand)]
enum Command {
    /// Train the quantum and/or classical fusion model.
    Train,
    /// Parameter counts, expressibility and entangling capacity per circuit.
    PqcMetrics,
    /// Noiseless, noisy, DREM- and ZNE-mitigated predictions per noise condition.
    NoiseSweep,
    /// Build a DREM corpus, train and freeze the layer.
    DremTrain,
    /// Zero-noise extrapolation per noise condition.
    ZneEval,
    /// Write a synthetic dataset.
    SynthData,
    /// Metrics of a saved checkpoint on a data split.
    Evaluate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::PqcMetrics => "pqc-metrics",
            Command::NoiseSweep => "noise-sweep",
            Command::DremTrain => "drem-train",
            Command::ZneEval => "zne-eval",
            Command::SynthData => "synth-data",
            Command::Evaluate => "evaluate",
        }
    }
}

fn run(command: Command, config: &RunConfig) -> anyhow::Result<()> {
    if config.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()?;
    }
    let out = Output::create(&config.output_dir, config.hash())?;
    eprintln!("{} config_hash={}", command.name(), out.hash());
    match command {
        Command::Train => commands::train(config, &out),
        Command::PqcMetrics => commands::pqc_metrics(config, &out),
        Command::NoiseSweep => commands::noise_sweep(config, &out),
        Command::DremTrain => commands::drem_train(config, &out),
        Command::ZneEval => commands::zne_eval(config, &out),
        Command::SynthData => commands::synth_data(config, &out),
        Command::Evaluate => commands::evaluate(config, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let overrides = Overrides {
        set: cli.set,
        seed: cli.seed,
        out: cli.out,
        threads: cli.threads,
        checkpoint: cli.checkpoint,
    };
    let config = match RunConfig::load(cli.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    match run(cli.command, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
