// NaN must fail validation, hence the negated comparisons
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;

mod commands;
mod config;

use config::{load_config, Command, ConfigError, RunConfig};

/// Fractional Neumann eigenvalues approximating the Steklov eigenvalue.
///
/// Settings come from the config file; only s and p can be overridden
/// on the command line. Set FRACSTEKLOV_LOG (e.g. `debug`) for more output.
#[derive(Parser, Debug)]
#[command(name = "fracsteklov", version)]
struct Args {
    /// Overrides the `command` key of the config.
    #[arg(value_enum)]
    command: Option<Command>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn setup(args: &Args) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(c) = args.command {
        cfg.command = Some(c);
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    cfg.with_overrides(args.p, args.s)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FRACSTEKLOV_LOG", "info")).init();
    let args = Args::parse();
    let cfg = match setup(&args) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
