use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ocscreen_cli::commands::{self, ConfigPreset, SweepArgs, TrainArgs};
use ocscreen_cli::CliError;
use ocscreen_core::{HyperParams, ResolutionTier};

#[derive(Debug, Parser)]
#[command(
    name = "ocscreen",
    version,
    about = "Oral-cavity image screening: train, evaluate, sweep resolutions, serve"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a procedural three-class corpus and its manifest.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        per_class: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Split, train, and save a checkpoint. Progress is JSON lines on stdout.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ConfigPreset::Default)]
        config: ConfigPreset,
        #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
        batch: u64,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        epochs: u64,
        #[arg(long, default_value_t = 0.01)]
        lr: f32,
        #[arg(long, default_value_t = 0.9)]
        momentum: f32,
        #[arg(long, default_value_t = 0.2)]
        eval_fraction: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Score a checkpoint on every manifest entry at native resolution.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Check that every manifest entry exists and decodes; report class counts.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Classify every image at each resolution tier; write JSON and CSV reports.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "144,360,720,1080,1440")]
        tiers: Vec<ResolutionTier>,
        /// Unix time recorded in the report (default: SOURCE_DATE_EPOCH, else 0).
        #[arg(long)]
        timestamp: Option<u64>,
    },
    /// Classify one image, optionally degraded to a tier first.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        tier: Option<ResolutionTier>,
    },
    /// Serve the HTTP API until SIGINT or SIGTERM.
    Serve {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Send permissive CORS headers (for a UI on another origin).
        #[arg(long)]
        cors: bool,
        /// Log request metadata (size, tier, status, latency) to stderr.
        #[arg(long)]
        log_requests: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut log = io::stderr();
    match cli.command {
        Command::GenSynthetic {
            out: dir,
            per_class,
            seed,
        } => {
            commands::gen_synthetic_cmd(&dir, per_class as usize, seed, &mut out)?;
        }
        Command::Train {
            manifest,
            out: ckpt,
            config,
            batch,
            epochs,
            lr,
            momentum,
            eval_fraction,
            seed,
        } => {
            let args = TrainArgs {
                manifest,
                out: ckpt,
                config,
                hp: HyperParams {
                    batch_size: batch as usize,
                    epochs: epochs as usize,
                    learning_rate: lr,
                    momentum,
                    eval_fraction,
                    seed,
                },
            };
            commands::train(&args, &mut out, &mut log)?;
        }
        Command::Evaluate { manifest, ckpt } => {
            commands::evaluate(&manifest, &ckpt, &mut out)?;
        }
        Command::Validate { manifest } => {
            commands::validate_cmd(&manifest, &mut out)?;
        }
        Command::Sweep {
            manifest,
            ckpt,
            out: report,
            tiers,
            timestamp,
        } => {
            let args = SweepArgs {
                manifest,
                ckpt,
                out: report,
                tiers,
                timestamp,
            };
            commands::sweep(&args, &mut out)?;
        }
        Command::Predict { ckpt, image, tier } => {
            commands::predict(&ckpt, &image, tier, &mut out)?;
        }
        Command::Serve {
            ckpt,
            addr,
            cors,
            log_requests,
        } => {
            drop(out);
            commands::serve(&ckpt, &addr, cors, log_requests, &mut io::stdout())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            io::stdout().flush().ok();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
