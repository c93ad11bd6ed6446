mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

/// Numerical toolbox for degenerate parabolic analysis and control.
#[derive(Parser, Debug)]
#[command(name = "hypoctrl", version, disable_help_subcommand = true)]
struct Cli {
    /// One of: analyze, evolve, dissipation, spectral, cost, control, chain
    command: String,
    /// JSON configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing)
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seed for randomized diagnostics
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker thread cap
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }

    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("hypoctrl: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(4);
        }
    };
    let doc: serde_json::Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("hypoctrl: config is not valid JSON: {e}");
            return ExitCode::from(2);
        }
    };
    let cfg = match config::parse_config(&doc, &cli.command) {
        Ok(c) => c,
        Err(violations) => {
            eprint!("hypoctrl: {violations}");
            return ExitCode::from(2);
        }
    };

    match commands::dispatch(&cfg, &cli.out, cli.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hypoctrl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
