use std::path::PathBuf;

use clap::Parser;
use moving_frame_cli::{run, RunArgs};

/// Simulate semilinear SPDEs in a moving frame and check convergence.
#[derive(Parser, Debug)]
#[command(name = "mframe", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key.path=value`, applied before validation. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = run(&RunArgs {
        config: cli.config,
        seed: cli.seed,
        threads: cli.threads,
        out: cli.out,
        overrides: cli.overrides,
    });
    std::process::exit(code);
}
