//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! failures while running.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use elab_core::experiment::{ablate, default_checkpoint, write_eval, AblationAxis, BackendKind, RunConfig, Session};
use elab_core::models::adapter::serve;
use elab_core::trainer::{RunOptions, TrainingMode};
use elab_core::types::{FilterKind, IntegrationKind};
use elab_core::Error;

#[derive(Parser)]
#[command(name = "elab", version, about = "Train and evaluate elaboration generators with answer predictors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample and cache teacher elaborations for every instance.
    CacheTeacher(Common),
    /// Run the training loop.
    Train {
        #[command(flatten)]
        common: Common,
        /// Resume from a block checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the dev split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to the final checkpoint in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sweep one setting, training and evaluating each value.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// One of: k, n_student, filter, integration, decoding.
        #[arg(long)]
        axis: String,
        /// Consecutive seeds averaged per row.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
    /// Serve the configured toy models over the line-delimited JSON protocol on stdin/stdout.
    ServeBackend(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n_student: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    filter: Option<String>,
    #[arg(long)]
    integration: Option<String>,
}

fn parse_kind<T: Copy + ToString>(all: &[T], s: &str, what: &str) -> Result<T, Error> {
    all.iter()
        .copied()
        .find(|x| x.to_string() == s)
        .ok_or_else(|| Error::config(format!("unknown {what} {s:?}")))
}

impl Common {
    /// The raw config text and the config with flag overrides applied.
    fn load(&self) -> Result<(String, RunConfig), Error> {
        let raw = fs::read_to_string(&self.config)
            .map_err(|e| Error::config(format!("{}: {e}", self.config.display())))?;
        let mut cfg = RunConfig::from_toml(&raw)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(m) = &self.mode {
            cfg.mode = m.parse::<TrainingMode>()?;
        }
        if let Some(k) = self.k {
            cfg.trainer.k = k;
        }
        if let Some(n) = self.n_student {
            cfg.trainer.n_student = n;
        }
        if let Some(e) = self.epochs {
            cfg.trainer.epochs = e;
        }
        if let Some(f) = &self.filter {
            cfg.trainer.filter_strategy = parse_kind(&FilterKind::ALL, f, "filter")?;
        }
        if let Some(i) = &self.integration {
            cfg.trainer.integration = parse_kind(&IntegrationKind::ALL, i, "integration")?;
        }
        cfg.validate()?;
        Ok((raw, cfg))
    }
}

/// Copies the config verbatim into the output directory, plus the resolved form.
fn echo_config(raw: &str, cfg: &RunConfig) -> anyhow::Result<()> {
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    fs::write(cfg.output_dir.join("config.toml"), raw)?;
    fs::write(cfg.output_dir.join("config.resolved.toml"), cfg.resolved().to_toml()?)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::CacheTeacher(common) => {
            let (raw, cfg) = common.load()?;
            echo_config(&raw, &cfg)?;
            let mut session = Session::new(cfg)?;
            let report = session.cache_teacher()?;
            println!("{report}");
        }
        Command::Train { common, resume } => {
            let (raw, cfg) = common.load()?;
            echo_config(&raw, &cfg)?;
            let opts = RunOptions {
                output_dir: Some(cfg.output_dir.clone()),
                resume_from: resume,
                ..RunOptions::default()
            };
            let out_dir = cfg.output_dir.clone();
            let mut session = Session::new(cfg)?;
            let outcome = session.train(&opts)?;
            println!(
                "trained: {} metric records, {} skipped, {} isolation violations",
                outcome.metrics.len(),
                outcome.skipped,
                outcome.isolation_violations
            );
            if let Some(acc) = outcome.dev_accuracy {
                println!("dev accuracy {acc:.4}");
            }
            println!("metrics: {}", out_dir.join("metrics.jsonl").display());
        }
        Command::Eval { common, checkpoint } => {
            let (_, cfg) = common.load()?;
            let checkpoint = checkpoint.unwrap_or_else(|| default_checkpoint(&cfg));
            if !checkpoint.exists() {
                return Err(Error::config(format!("checkpoint {} does not exist", checkpoint.display())).into());
            }
            let out_dir = cfg.output_dir.clone();
            let integration = cfg.trainer.integration;
            let mut session = Session::new(cfg)?;
            session.load_checkpoint(&checkpoint)?;
            let report = session.evaluate(None)?;
            write_eval(&out_dir, &report)?;
            write_json(
                &out_dir.join("eval_report.json"),
                &serde_json::json!({
                    "accuracy": report.accuracy,
                    "integration": integration,
                    "instances": report.records.len(),
                    "checkpoint": checkpoint,
                }),
            )?;
            println!(
                "accuracy {:.4} (integration: {integration}, {} instances)",
                report.accuracy,
                report.records.len()
            );
        }
        Command::Ablate { common, axis, seeds } => {
            let axis: AblationAxis = axis.parse()?;
            let (raw, cfg) = common.load()?;
            echo_config(&raw, &cfg)?;
            let rows = ablate(&cfg.resolved(), axis, seeds)?;
            let path = cfg.output_dir.join(format!("ablation_{}.jsonl", serde_json::to_value(axis)?.as_str().unwrap_or("axis")));
            let mut w = BufWriter::new(fs::File::create(&path)?);
            println!("{:<12} {:>8}", "setting", "accuracy");
            for row in &rows {
                println!("{:<12} {:>8.4}", row.setting, row.accuracy);
                serde_json::to_writer(&mut w, row)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        Command::ServeBackend(common) => {
            let (_, mut cfg) = common.load()?;
            cfg.backend.kind = BackendKind::Toy;
            let session = Session::in_memory(cfg)?;
            let (mut generator, mut predictor) = session.fresh_models()?;
            serve(io::stdin().lock(), io::stdout().lock(), generator.as_mut(), predictor.as_mut())?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Schema(_) | Error::Template(_) | Error::Line { .. }) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if let Some(Error::Resumable { checkpoint, .. }) = err.downcast_ref::<Error>() {
                eprintln!("resume with: --resume {}", checkpoint.display());
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
