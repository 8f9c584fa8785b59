use std::path::PathBuf;
use std::process::ExitCode;

use banditlab_cli::{execute, load_config, Command, Format, Overrides, EXIT_FAILED};
use clap::Parser;

/// Monte Carlo experiments for adaptively weighted M-estimators.
#[derive(Debug, Parser)]
#[command(name = "banditlab", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed (overrides the file and BANDITLAB_SEED).
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Monte Carlo replications.
    #[arg(long, value_name = "N")]
    reps: Option<usize>,
    /// Worker threads, 0 for one per core.
    #[arg(long, value_name = "K")]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// 5000 replications unless --reps is given.
    #[arg(long)]
    full_scale: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        reps: args.reps,
        threads: args.threads,
        format: args.format,
        full_scale: args.full_scale,
    };
    let env_seed = std::env::var(banditlab_cli::config::SEED_ENV).ok();
    let cfg = match load_config(
        args.command,
        args.config.as_deref(),
        &overrides,
        env_seed.as_deref(),
    ) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(args.command, &cfg) {
        Ok(report) => {
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            for reason in &report.failures {
                eprintln!("FAILED {reason}");
            }
            ExitCode::from(report.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILED as u8)
        }
    }
}
