// SPDX-License-Identifier: MIT OR Apache-2.0

//! `paramcpd` command-line driver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::SweepAxis;
use config::ExperimentConfig;
use paramcpd::pipeline::Method;
use paramcpd::ParamKind;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "paramcpd",
    version,
    about = "Changepoint detection on inferred Lorenz-63 parameters"
)]
struct Cli {
    /// JSON experiment configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `paths.workdir`.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Sigma,
    Rho,
    Beta,
    All,
}

impl KindArg {
    fn kinds(self) -> Vec<ParamKind> {
        match self {
            KindArg::Sigma => vec![ParamKind::Sigma],
            KindArg::Rho => vec![ParamKind::Rho],
            KindArg::Beta => vec![ParamKind::Beta],
            KindArg::All => ParamKind::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Param,
    Obs,
    Both,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Param => vec![Method::ParamCpd],
            MethodArg::Obs => vec![Method::ObsCpd],
            MethodArg::Both => vec![Method::ParamCpd, Method::ObsCpd],
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CorpusArg {
    Changepoint,
    Stationary,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labelled corpora.
    Simulate {
        #[arg(long, value_enum, default_value = "all")]
        kind: KindArg,
        #[arg(long, value_enum, default_value = "both")]
        corpus: CorpusArg,
    },
    /// Train the posterior estimator.
    Train,
    /// Run detectors over the changepoint corpora.
    Detect {
        #[arg(long, value_enum, default_value = "both")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "all")]
        kind: KindArg,
    },
    /// Score saved detections.
    Evaluate {
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Regress central estimates on the true parameters of stationary runs.
    Calibrate {
        #[arg(long, value_enum, default_value = "all")]
        kind: KindArg,
        /// Use the true parameter as the estimate.
        #[arg(long)]
        perfect: bool,
    },
    /// Metrics across values of one setting.
    Sweep {
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, value_enum, default_value = "all")]
        kind: KindArg,
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// simulate, train, detect, evaluate and calibrate in turn.
    Run,
}

enum Failure {
    Config(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Other(e) => {
                let numerical = e.chain().any(|c| {
                    c.downcast_ref::<paramcpd::Error>()
                        .is_some_and(paramcpd::Error::is_numerical)
                });
                if numerical {
                    EXIT_NUMERICAL
                } else {
                    EXIT_DATA
                }
            }
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Other(e) => e,
        }
    }
}

fn resolve_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = &cli.workdir {
        cfg.paths.workdir = w.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = resolve_config(&cli).map_err(Failure::Config)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| Failure::Config(e.into()))?;
    let force = cli.force;
    let all = ParamKind::ALL;
    match cli.command {
        Command::Simulate { kind, corpus } => {
            let (cp, st) = match corpus {
                CorpusArg::Changepoint => (true, false),
                CorpusArg::Stationary => (false, true),
                CorpusArg::Both => (true, true),
            };
            commands::simulate(&cfg, &kind.kinds(), cp, st, force)
        }
        Command::Train => commands::train(&cfg, force),
        Command::Detect { method, kind } => commands::detect(&cfg, &kind.kinds(), &method.methods(), force),
        Command::Evaluate { results } => commands::evaluate(&cfg, results, force),
        Command::Calibrate { kind, perfect } => commands::calibrate(&cfg, &kind.kinds(), perfect, force),
        Command::Sweep {
            axis,
            values,
            kind,
            results,
        } => commands::sweep(&cfg, axis, &values, &kind.kinds(), results, force),
        Command::Run => (|| {
            commands::simulate(&cfg, &all, true, true, force)?;
            commands::train(&cfg, force)?;
            commands::detect(&cfg, &all, &MethodArg::Both.methods(), force)?;
            commands::evaluate(&cfg, None, force)?;
            commands::calibrate(&cfg, &all, false, force)
        })(),
    }
    .map_err(Failure::Other)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
