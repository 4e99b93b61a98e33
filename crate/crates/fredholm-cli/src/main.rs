//! `fredholm` — batch front-end for determinant scans, minor evaluation,
//! index detection, solves, and kernel validation.
//!
//! One invocation runs one command from a TOML config (see `docs/config.md`)
//! and writes machine-readable reports. Exit codes: 0 success, 2 for a
//! mathematically valid "not solvable" outcome, 1 for any error (the message
//! also lands in the report's `error` field).

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::RunConfig;
use report::{to_json_string, ErrorJson};

#[derive(Parser)]
#[command(name = "fredholm", version, about = "Fredholm determinant toolkit")]
struct Cli {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for report files (default: the config's `output`, else ".").
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker thread cap (default: FREDHOLM_THREADS, else all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Force single-threaded execution for bit-stable golden runs.
    #[arg(long)]
    reproducible: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return fail(&cli, None, format!("cannot read {}: {e}", cli.config.display())),
    };
    let cfg = match RunConfig::from_toml(&text) {
        Ok(c) => c,
        Err(e) => return fail(&cli, None, e.to_string()),
    };

    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("FREDHOLM_THREADS").ok().and_then(|v| v.parse().ok())
        })
        .or(if cli.reproducible || cfg.reproducible { Some(1) } else { None });
    if let Some(n) = threads {
        // Results are bit-identical at any thread count by design; the cap
        // is for resource control (and belt-and-braces in golden runs).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }

    let out_dir = out_dir(&cli, &cfg);
    match run::run(&cfg, &out_dir) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => fail(&cli, Some(&cfg), e.to_string()),
    }
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.output
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Reports the error on stderr and in a JSON file, then exits 1.
fn fail(cli: &Cli, cfg: Option<&RunConfig>, message: String) -> ExitCode {
    eprintln!("error: {message}");
    let dir = match cfg {
        Some(cfg) => out_dir(cli, cfg),
        None => cli.output.clone().unwrap_or_else(|| PathBuf::from(".")),
    };
    let stem = cfg.map(|c| c.command.stem()).unwrap_or("error");
    if std::fs::create_dir_all(&dir).is_ok() {
        if let Ok(json) = to_json_string(&ErrorJson { error: message }) {
            let _ = std::fs::write(dir.join(format!("{stem}.json")), json);
        }
    }
    ExitCode::FAILURE
}
