//! One binary exposing the full pipeline: dataset synthesis, record
//! filtering, training, evaluation, ablations, interpolation, gradient
//! checks and parameter accounting.
//!
//! Exit codes are stable: 0 success, 2 configuration error, 3 IO error,
//! 4 numeric fault. Logging is controlled by `LAMBDA_PRIOR_LOG`
//! (error|info|debug).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use lambda_prior::Error;

#[derive(Parser)]
#[command(
    name = "lambda-prior",
    version,
    about = "Embedding-space prior: synthesis, training, evaluation",
    propagate_version = true
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; every stochastic subsystem derives a substream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default "out", or the config's out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Run in 64-bit float mode (verification; training default is 32-bit).
    #[arg(long, global = true, default_value_t = false)]
    float64: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world plus train/eval manifests and caches.
    Synth,
    /// Filter annotation records into a manifest and a rejection report.
    Prep {
        /// JSON-lines annotation records.
        #[arg(long)]
        records: PathBuf,
    },
    /// Train the prior on the synthesized training manifest.
    Train {
        /// Resume from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override [train].total_steps.
        #[arg(long)]
        steps: Option<u64>,
        /// Override [train].batch_size.
        #[arg(long)]
        batch: Option<usize>,
        /// Override [loss].lambda.
        #[arg(long)]
        lambda: Option<f64>,
        /// Override [loss].tau.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Evaluate a checkpoint on the held-out split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run the standing four-variant ablation and emit its table.
    Ablate {
        /// Override [train].total_steps for every variant.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Predict four corner embeddings and write the interpolation grid.
    Interp {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
    },
    /// Verify full-objective gradients on the toy prior against finite
    /// differences.
    Gradcheck,
    /// Print the exact learnable-parameter count of [prior].
    Params,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Format { .. } | Error::Json(_) => 3,
        Error::NumericFault { .. } => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> lambda_prior::Result<u8> {
    let mut config = RunConfig::load(cli.config.as_deref())?
        .resolve(cli.seed, cli.out, cli.float64)?;

    match cli.command {
        Command::Synth => commands::cmd_synth(&config)?,
        Command::Prep { records } => commands::cmd_prep(&config, &records)?,
        Command::Train { resume, steps, batch, lambda, tau } => {
            if let Some(s) = steps {
                config.train.total_steps = s;
                config.train.warmup_steps = config.train.warmup_steps.min(s.saturating_sub(1));
            }
            if let Some(b) = batch {
                config.train.batch_size = b;
            }
            if let Some(l) = lambda {
                config.loss.lambda = l;
                config.train.loss.lambda = l;
            }
            if let Some(t) = tau {
                config.loss.tau = t;
                config.train.loss.tau = t;
            }
            config.train.validate()?;
            config.loss.validate()?;
            commands::cmd_train(&config, resume.as_deref())?;
        }
        Command::Eval { checkpoint } => commands::cmd_eval(&config, &checkpoint)?,
        Command::Ablate { steps } => {
            if let Some(s) = steps {
                config.train.total_steps = s;
                config.train.warmup_steps = config.train.warmup_steps.min(s.saturating_sub(1));
                config.train.validate()?;
            }
            commands::cmd_ablate(&config)?;
        }
        Command::Interp { checkpoint, rows, cols } => {
            let r = rows.unwrap_or(config.interp.rows);
            let c = cols.unwrap_or(config.interp.cols);
            commands::cmd_interp(&config, &checkpoint, r, c)?;
        }
        Command::Gradcheck => {
            if !commands::cmd_gradcheck(&config)? {
                return Ok(4);
            }
        }
        Command::Params => commands::cmd_params(&config)?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("LAMBDA_PRIOR_LOG", "error"),
    )
    .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
