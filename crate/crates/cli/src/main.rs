//! gaugekit: run JSON-configured studies or evaluate one-shot quantities.
//!
//! Exit codes: 0 success, 2 validation/config error, 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gaugekit::flow::FlowOptions;
use gaugekit::functionals::{gauge_divergence, hs_derivative, jacobian_log_det};
use gaugekit::measure::sample;
use gaugekit::{Measure, SpectralFn};
use gaugekit_cli::config::load_config;
use gaugekit_cli::studies::{run_study, RunError};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "gaugekit", version, about = "Spectral gauge-flow studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study from a JSON config (or a previously written manifest).
    Run {
        /// Path to the config or manifest JSON.
        config: PathBuf,
    },
    /// One-shot evaluations for debugging.
    Eval {
        #[command(subcommand)]
        what: EvalCommand,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Coefficient file: {"cutoff": N, "coeffs": [[re, im], ...]}.
    #[arg(long = "in")]
    input: PathBuf,
    /// Truncation level.
    #[arg(long, alias = "N")]
    n: usize,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Gauge potential I[P_N u] of a coefficient file.
    GaugePotential {
        #[command(flatten)]
        io: InputArgs,
    },
    /// Derivative of the squared Ḣˢ seminorm along the gauge flow at 0.
    #[command(name = "f-n")]
    FN {
        #[command(flatten)]
        io: InputArgs,
        #[arg(long)]
        s: f64,
    },
    /// Divergence of the truncated gauge field.
    Divergence {
        #[command(flatten)]
        io: InputArgs,
    },
    /// Jacobian log-determinant of the truncated flow over [0, α].
    Logdet {
        #[command(flatten)]
        io: InputArgs,
        #[arg(long)]
        alpha: f64,
        /// RK4 steps; default ceil(64·|α|·max(1, ‖u‖²)).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Draw measure samples (deterministic in --seed/--stream).
    Sample {
        #[arg(long)]
        s: f64,
        #[arg(long)]
        cutoff: usize,
        #[arg(long)]
        radius: Option<f64>,
        /// Master seed; defaults to $GAUGEKIT_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        stream: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                RunError::Numeric(_) => ExitCode::from(EXIT_NUMERIC),
                _ => ExitCode::from(EXIT_VALIDATION),
            }
        }
    }
}

fn dispatch() -> Result<(), RunError> {
    match Cli::parse().command {
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg = load_config(&text).map_err(RunError::Validation)?;
            let out_dir = cfg
                .output_dir
                .clone()
                .or_else(|| std::env::var("GAUGEKIT_OUT_DIR").ok())
                .unwrap_or_else(|| ".".into());
            match cfg.workers {
                Some(w) => {
                    let pool = rayon::ThreadPoolBuilder::new()
                        .num_threads(w)
                        .build()
                        .map_err(|e| RunError::Validation(e.to_string()))?;
                    pool.install(|| run_study(&cfg, std::path::Path::new(&out_dir)))?;
                }
                None => {
                    run_study(&cfg, std::path::Path::new(&out_dir))?;
                }
            }
            Ok(())
        }
        Command::Eval { what } => eval(what),
    }
}

fn eval(what: EvalCommand) -> Result<(), RunError> {
    match what {
        EvalCommand::GaugePotential { io } => {
            let u = read_function(&io.input)?;
            print_json(&u.gauge_potential(io.n));
        }
        EvalCommand::FN { io, s } => {
            let u = read_function(&io.input)?;
            print_json(&hs_derivative(&u, io.n, s)?);
        }
        EvalCommand::Divergence { io } => {
            let u = read_function(&io.input)?;
            print_json(&gauge_divergence(&u, io.n)?);
        }
        EvalCommand::Logdet { io, alpha, steps } => {
            let u = read_function(&io.input)?;
            let opts = match steps {
                Some(k) => FlowOptions::default().with_steps(k),
                None => FlowOptions::for_interval(alpha, u.l2_norm()),
            };
            print_json(&jacobian_log_det(&u, alpha, io.n, &opts)?);
        }
        EvalCommand::Sample {
            s,
            cutoff,
            radius,
            seed,
            stream,
            count,
        } => {
            let master_seed = seed
                .or_else(|| {
                    std::env::var("GAUGEKIT_SEED")
                        .ok()
                        .and_then(|v| v.parse().ok())
                })
                .unwrap_or(0);
            let spec = Measure {
                s,
                cutoff,
                radius,
                master_seed,
            };
            print_json(&sample(&spec, count, stream)?);
        }
    }
    Ok(())
}

fn read_function(path: &PathBuf) -> Result<SpectralFn, RunError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| RunError::Validation(format!("bad coefficient file: {e}")))
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string(value).expect("value serializes")
    );
}
