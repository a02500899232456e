use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod output;

use growfrag::config::RunConfig;
use growfrag::ErrorKind;

#[derive(Debug, Parser)]
#[command(name = "growfrag", version, about = "Self-similar growth-fragmentation experiments")]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 means one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Roots of the cumulant, regime and a kappa grid.
    Kappa,
    /// One cell system; writes the tree export and a stats summary.
    Simulate,
    /// Samples of the exponential functional and its density.
    Spine,
    /// Area profile, fragment statistics and density estimates.
    Profile,
    /// Energies, correlation dimension, Fourier diagnostic and regime verdict.
    Dimension,
    /// The acceptance suite.
    CheckAll {
        /// Comma-separated subset of criteria, e.g. `1,2,12`.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] growfrag::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("{0} acceptance criteria failed")]
    Acceptance(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Model => 3,
                ErrorKind::Numerical => 4,
            },
            CliError::Io { .. } | CliError::Csv(_) | CliError::Pool(_) => 2,
            CliError::Acceptance(_) => 1,
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::Io { path: p.display().to_string(), source })?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.display().to_string());
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    let out = output::OutDir::create(cfg.out.as_deref().unwrap_or("out"))?;
    match &cli.command {
        Command::Kappa => commands::kappa(&cfg, &out),
        Command::Simulate => commands::simulate(&cfg, &out),
        Command::Spine => commands::spine(&cfg, &out),
        Command::Profile => commands::profile(&cfg, &out),
        Command::Dimension => commands::dimension(&cfg, &out),
        Command::CheckAll { only } => commands::check_all(&cfg, &out, only),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("growfrag: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
