//! Batch front end: reads a TOML run configuration, runs one experiment and
//! writes CSV tables.
//!
//! Exit codes: 0 success, 2 invalid input or IO failure, 3 numerical guard.

pub mod config;
pub mod executor;
pub mod experiments;
pub mod formula_io;
pub mod output;

use std::path::{Path, PathBuf};

use moving_frame_core::Error;

pub use executor::RayonExecutor;
pub use experiments::{run_experiment, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

/// Command-line options after flag parsing.
#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub overrides: Vec<String>,
}

/// Loads, runs and writes; artifacts are written only after the experiment
/// succeeded. Returns the summary lines and the output directory.
pub fn execute(args: &RunArgs) -> Result<(Vec<String>, PathBuf), CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| CliError::Io {
        context: format!("cannot read config {}", args.config.display()),
        source,
    })?;
    let mut cfg = config::parse_config(&text, &args.overrides)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.threads == Some(0) {
        return Err(CliError::Validation("--threads must be positive".into()));
    }
    let exec = RayonExecutor::new(args.threads).map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    let base = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| config::resolve(&base, o)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let outcome = run_experiment(&cfg, &base, &exec)?;
    output::write_all(&out, &outcome.artifacts, cfg.plots).map_err(|source| CliError::Io {
        context: format!("cannot write to {}", out.display()),
        source,
    })?;
    Ok((outcome.summary, out))
}

/// [`execute`] with reporting on stdout/stderr; returns the exit code.
pub fn run(args: &RunArgs) -> i32 {
    match execute(args) {
        Ok((summary, out)) => {
            for l in summary {
                println!("{l}");
            }
            println!("wrote {}", out.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
