//! Command-line front end: `run`, `sweep`, `baselines`, `gen-synth`.
//!
//! Exit status is 0 on success, 2 for configuration errors and 1 for any
//! other failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::data::SyntheticSuite;
use crate::error::{Error, Result};
use crate::experiment::{self, DataSource, ExperimentConfig, SweepAxis};

#[derive(Debug, Parser)]
#[command(name = "fedlwf", version, about = "Federated averaging with learning-without-forgetting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file (TOML, or JSON by extension). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dot-path override, e.g. `fed.n_clients=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Shorthand for `--set train.seed=<n>`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the configured event sequence and write metrics.
    Run(Common),
    /// One run per value of a single axis; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated depths, e.g. 3,5,10,15,25.
        #[arg(long, value_delimiter = ',', conflicts_with = "clients", required_unless_present = "clients")]
        depth: Vec<usize>,
        /// Comma-separated client counts, e.g. 3,5,7,9.
        #[arg(long, value_delimiter = ',')]
        clients: Vec<usize>,
    },
    /// Run all four modes on shared data and seed; writes baselines.csv.
    Baselines(Common),
    /// Write the configured synthetic events as embedding CSV files.
    GenSynth(Common),
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("train.seed={seed}"));
        }
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p, &overrides)?,
            None => {
                let c = ExperimentConfig::default().with_overrides(&overrides)?;
                c.validate()?;
                c
            }
        };
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        Ok(cfg)
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.load()?;
            let report = experiment::run(&cfg)?;
            let s = &report.outcome.summary;
            println!(
                "{}: cumulative test accuracy {:.4}, train {:.4}{}",
                s.mode,
                s.final_cumulative_test(),
                s.final_cumulative_train(),
                s.forgetting.map(|f| format!(", forgetting {f:.4}")).unwrap_or_default()
            );
            for f in &report.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Sweep { common, depth, clients } => {
            let cfg = common.load()?;
            let (axis, values) = if depth.is_empty() {
                (SweepAxis::Clients, clients)
            } else {
                (SweepAxis::Depth, depth)
            };
            println!("axis_value,train_accuracy,test_accuracy,test_loss");
            for r in experiment::sweep(&cfg, axis, &values)? {
                println!("{},{:.4},{:.4},{:.4}", r.axis_value, r.train_accuracy, r.test_accuracy, r.test_loss);
            }
            println!("wrote {}", cfg.output.dir.join("sweep.csv").display());
        }
        Command::Baselines(common) => {
            let cfg = common.load()?;
            println!("mode,train_accuracy,test_accuracy");
            for s in experiment::baselines(&cfg)? {
                println!("{},{:.4},{:.4}", s.mode, s.final_cumulative_train(), s.final_cumulative_test());
            }
            println!("wrote {}", cfg.output.dir.join("baselines.csv").display());
        }
        Command::GenSynth(common) => {
            let cfg = common.load()?;
            let suite = match &cfg.data {
                DataSource::Synthetic(s) => s.clone(),
                DataSource::Files(_) => SyntheticSuite::default(),
            };
            for f in experiment::gen_synth(&suite, &cfg.output.dir)? {
                println!("{}: {} {} {}", f.name, f.train.display(), f.valid.display(), f.test.display());
            }
        }
    }
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 2,
        _ => 1,
    }
}

/// Parses `args` (program name first) and runs; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
