//! `prodint <command> --config <path> [--out <path>] [--workers N]`
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 for numerical failures.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Command, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "prodint", version, about = "Product-integral experiments for parameter-dependent quantum systems")]
struct Args {
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file; overrides `output.path`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,
}

const CONFIG_ERROR: u8 = 2;
const NUMERICAL_ERROR: u8 = 3;

fn main() -> ExitCode {
    let args = Args::parse();
    let resolved = RunConfig::load(&args.config).and_then(|c| c.resolve(args.command, args.out.as_deref()));
    let config = match resolved {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let out = PathBuf::from(config.output.path.clone().expect("resolved output path"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        if !dir.is_dir() {
            eprintln!("config error at output.path: directory {} does not exist", dir.display());
            return ExitCode::from(CONFIG_ERROR);
        }
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.workers {
        pool = pool.num_threads(n as usize);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("config error at --workers: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let table = match pool.install(|| commands::run(&config)) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("numerical error: {e}");
            return ExitCode::from(NUMERICAL_ERROR);
        }
    };
    if let Err(e) = std::fs::write(&out, output::render(&config, &table)) {
        eprintln!("cannot write {}: {e}", out.display());
        return ExitCode::from(CONFIG_ERROR);
    }
    ExitCode::SUCCESS
}
