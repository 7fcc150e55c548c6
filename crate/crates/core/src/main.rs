use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::Value;

use simplicity_ood::config::parse_config;
use simplicity_ood::runner::{error_json, run, write_error};

/// Run one simplicity-regularization experiment from a config file.
#[derive(Parser)]
#[command(name = "simplicity-ood", version)]
struct Args {
    /// Flat `section.key = value` config file.
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// `SIMPLICITY_OOD_THREADS` caps the worker pool; unset or 0 means automatic.
fn init_threads() -> Result<(), String> {
    let threads = match std::env::var("SIMPLICITY_OOD_THREADS") {
        Ok(s) if !s.trim().is_empty() => s
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("SIMPLICITY_OOD_THREADS must be a nonnegative integer, got `{s}`"))?,
        _ => 0,
    };
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn fail(out_dir: Option<&PathBuf>, report: Value) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&report).expect("values serialize"));
    if let Some(dir) = out_dir {
        if let Err(e) = write_error(dir, &report) {
            eprintln!("could not write error.json: {e}");
        }
    }
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(msg) = init_threads() {
        return fail(args.out.as_ref(), error_json(None, "environment", &msg));
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            let msg = format!("reading {}: {e}", args.config.display());
            return fail(args.out.as_ref(), error_json(None, "io", &msg));
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => return fail(args.out.as_ref(), error_json(None, "config", &e.to_string())),
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    match run(&cfg) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(Some(&cfg.out_dir), error_json(Some(cfg.command), e.kind(), &e.to_string())),
    }
}
