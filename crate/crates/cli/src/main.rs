use std::path::PathBuf;
use std::process::ExitCode;

use chc_cli::{parse_config_for, run, Experiment, RunError};
use clap::Parser;

#[derive(Parser, Debug)]
#[command(name = "chc", version, about = "Spectral Cahn-Hilliard-Cook experiments")]
struct Cli {
    #[arg(value_enum)]
    experiment: Experiment,
    /// Run configuration (flat key = value).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config. Defaults to ./out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(1);
        }
    };
    let mut cfg = match parse_config_for(&text, Some(cli.experiment)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    let out = cli
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    match run(&cfg, &out, cli.threads) {
        Ok(done) => {
            println!("{}", done.summary_line);
            log::info!("wrote {} files to {}", done.files.len(), out.display());
            ExitCode::SUCCESS
        }
        Err(e @ RunError::Blowup { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
