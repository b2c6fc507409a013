//! The `attrflip` pipeline: synth, train, attack, report, plus the one-off
//! `pass` and `demo` commands. Every command reads the same experiment
//! config and writes below its `out` directory.

pub mod attack;
pub mod config;
pub mod demo;
pub mod layout;
pub mod report;
pub mod synth;
pub mod train;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use attrflip_core::attack::{Method, Mode};
pub use config::ExperimentConfig;
pub use layout::Layout;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] attrflip_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("missing outcome file {0}; run `attrflip attack` first")]
    MissingOutcomes(PathBuf),
    #[error("missing checkpoint {0}; run `attrflip train` first")]
    MissingCheckpoint(PathBuf),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "attrflip",
    version,
    about = "Adversarial attribute flipping on small image classifiers"
)]
pub struct Cli {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Attack worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic dataset.
    Synth,
    /// Train every configured network, one checkpoint per epoch.
    Train {
        /// Continue from the newest checkpoint instead of starting over.
        #[arg(long)]
        resume: bool,
    },
    /// Attack a sample of training images with every configured method.
    Attack,
    /// Aggregate outcome files into CSV reports.
    Report,
    /// synth, train, attack and report in sequence.
    Run,
    /// PASS between two images.
    Pass {
        original: PathBuf,
        perturbed: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Original / magnified perturbation / perturbed triptych for one image.
    Demo {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        attribute: String,
        #[arg(long, value_enum, default_value = "ffa")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "line-search")]
        mode: ModeArg,
        /// Output PPM; defaults to `<out>/demo.ppm`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum MethodArg {
    Fgs,
    Ffa,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ModeArg {
    LineSearch,
    Iterative,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Fgs => Method::Fgs,
            MethodArg::Ffa => Method::Ffa,
        }
    }
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::LineSearch => Mode::LineSearch,
            ModeArg::Iterative => Mode::Iterative,
        }
    }
}

impl Cli {
    /// Config file (or defaults) with command-line overrides applied.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        cfg.resolve()
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.experiment()?;
    match &cli.command {
        Command::Synth => synth::cmd_synth(&cfg),
        Command::Train { resume } => train::cmd_train(&cfg, *resume),
        Command::Attack => attack::cmd_attack(&cfg),
        Command::Report => report::cmd_report(&cfg),
        Command::Run => {
            synth::cmd_synth(&cfg)?;
            train::cmd_train(&cfg, false)?;
            attack::cmd_attack(&cfg)?;
            report::cmd_report(&cfg)
        }
        Command::Pass {
            original,
            perturbed,
            tau,
        } => demo::cmd_pass(&cfg, original, perturbed, *tau),
        Command::Demo {
            checkpoint,
            image,
            attribute,
            method,
            mode,
            output,
        } => demo::cmd_demo(
            &cfg,
            &demo::DemoArgs {
                checkpoint: checkpoint.clone(),
                image: image.clone(),
                attribute: attribute.clone(),
                method: (*method).into(),
                mode: (*mode).into(),
                output: output.clone(),
            },
        ),
    }
}

pub(crate) fn create_dir(path: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(path.to_path_buf(), e))
}
