use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use aquarender::{build_config, run, Command};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aquarender", version, about = "Underwater image formation, fitting and restoration")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the config file.
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render underwater images from RGB-D input.
    Render(Common),
    /// Render a paired dataset from a manifest or synthetic scenes.
    GenDataset(Common),
    /// Estimate model parameters (mode = direct | adversarial).
    Fit(Common),
    /// Undo the model on underwater images (mode = monocular | known-depth).
    Restore(Common),
    /// Compute color accuracy, consistency and RMSE reports.
    Eval(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Render(a) => (Command::Render, a),
        Cmd::GenDataset(a) => (Command::GenDataset, a),
        Cmd::Fit(a) => (Command::Fit, a),
        Cmd::Restore(a) => (Command::Restore, a),
        Cmd::Eval(a) => (Command::Eval, a),
    };
    let result = build_config(
        command,
        args.config.as_deref(),
        args.seed,
        args.out.as_deref(),
        &args.overrides,
    )
    .and_then(|cfg| run(&cfg));
    match result {
        Ok(report) => {
            let mut out = std::io::stdout().lock();
            for (k, v) in &report.summary {
                if writeln!(out, "{k} = {v}").is_err() {
                    break;
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("aquarender: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
