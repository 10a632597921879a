//! `perishlab`: batch driver for the perishable-inventory experiments.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::commands::Args;
use crate::config::{PolicyKind, RunConfig};

#[derive(Parser)]
#[command(name = "perishlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic instances.
    Gen,
    /// Train the learned and predict-then-optimise policies.
    Train {
        /// Restrict to these policies (comma separated).
        #[arg(long, value_delimiter = ',')]
        policy: Vec<PolicyKind>,
    },
    /// Score policies out of sample.
    Eval {
        #[arg(long, value_delimiter = ',')]
        policy: Vec<PolicyKind>,
    },
    /// Gaps to the benchmark and paired t-tests across instances.
    Compare,
    /// Re-run gen, train and eval with one parameter varied.
    Sweep {
        /// K, R, Lbar, h, b or theta.
        #[arg(long)]
        vary: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Excess-risk curves of the newsvendor experiment.
    Theory,
    /// Run the invariant suites.
    Selftest,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut args = Args::new();
    if let Some(p) = &cli.config {
        args.insert("config".into(), p.display().to_string());
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
        args.insert("seed".into(), s.to_string());
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    cfg.validate()?;
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global()
            .context("configuring the worker pool")?;
        args.insert("workers".into(), w.to_string());
    }
    let list = |p: &[PolicyKind]| p.iter().map(|k| k.name()).collect::<Vec<_>>().join(",");
    match cli.command {
        Command::Gen => commands::gen(&cfg, &args),
        Command::Train { policy } => {
            if !policy.is_empty() {
                args.insert("policy".into(), list(&policy));
            }
            commands::train(&cfg, &policy, &args)
        }
        Command::Eval { policy } => {
            if !policy.is_empty() {
                args.insert("policy".into(), list(&policy));
            }
            commands::eval(&cfg, &policy, &args)
        }
        Command::Compare => commands::compare(&cfg, &args),
        Command::Sweep { vary, values } => {
            args.insert("vary".into(), vary.clone());
            let v: Vec<String> = values.iter().map(f64::to_string).collect();
            args.insert("values".into(), v.join(","));
            commands::sweep(&cfg, &vary, &values, &args)
        }
        Command::Theory => commands::theory(&cfg, &args),
        Command::Selftest => commands::selftest(&cfg, &args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
