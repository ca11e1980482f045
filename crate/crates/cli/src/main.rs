//! `nslab`: spectral Navier-Stokes operator-learning laboratory.
//!
//! Every subcommand reads an optional JSON configuration file, applies
//! command-line overrides on top, runs, and writes its artifacts plus a
//! `run.json` provenance record into the output directory. Identical
//! configurations and seeds reproduce identical artifact bytes; the
//! elapsed-time field of `run.json` is the sole exception.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use commands::{
    distribution_from_name, load_config, optimizer_from_name, BasisCmdConfig, EvalConfig,
    GenDataConfig, SensorsConfig, SimulateConfig, TrainCmdConfig, VerifyConfig, VerifySuite,
};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "nslab",
    version,
    about = "Galerkin Navier-Stokes solves, operator-learning datasets, and verification suites"
)]
struct Cli {
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Master seed override; replaces the seed in the active config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the divergence-free eigenbasis and write its manifest.
    Basis(BasisArgs),
    /// Integrate one trajectory and export it with a JSON sidecar.
    Simulate(SimulateArgs),
    /// Solve many initial draws into a training dataset.
    GenData(GenDataArgs),
    /// Fit a clamped ReLU network to a dataset directory.
    Train(TrainArgs),
    /// Score a trained model on fresh draws from the dataset's spec.
    Eval(EvalArgs),
    /// Run verification suites: energy law, stability envelope, tails.
    Verify(VerifyArgs),
    /// Sensor-grid study: deviation sweep, sizing, depth-2 pipeline.
    Sensors(SensorsArgs),
}

#[derive(Args)]
struct BasisArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Spatial dimension, 2 or 3.
    #[arg(long)]
    dim: Option<usize>,
    /// Number of basis modes.
    #[arg(long)]
    modes: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Spatial dimension, 2 or 3.
    #[arg(long)]
    dim: Option<usize>,
    /// Number of basis modes.
    #[arg(long)]
    modes: Option<usize>,
    /// Viscosity.
    #[arg(long)]
    nu: Option<f64>,
    /// Integration step size.
    #[arg(long)]
    dt: Option<f64>,
    /// Integration horizon.
    #[arg(long)]
    t_final: Option<f64>,
    /// Steps between stored snapshots.
    #[arg(long)]
    snapshot_stride: Option<usize>,
    /// Disable the linear stability guard on dt.
    #[arg(long)]
    no_stability_guard: bool,
    /// Scale of the random initial coefficients.
    #[arg(long)]
    radius: Option<f64>,
    /// Leading modes the initial draw may excite.
    #[arg(long)]
    active_modes: Option<usize>,
    /// Initial-data distribution: "box" or "sphere".
    #[arg(long)]
    distribution: Option<String>,
    /// Record index within the seeded stream.
    #[arg(long)]
    record: Option<u64>,
}

#[derive(Args)]
struct GenDataArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Spatial dimension, 2 or 3.
    #[arg(long)]
    dim: Option<usize>,
    /// Number of basis modes in the solver.
    #[arg(long)]
    modes: Option<usize>,
    /// Number of records to solve.
    #[arg(long)]
    n: Option<usize>,
    /// Input code dimension.
    #[arg(long)]
    d_h: Option<usize>,
    /// Output code dimension.
    #[arg(long)]
    d_y: Option<usize>,
    /// Evaluation time of the solution operator.
    #[arg(long)]
    t_star: Option<f64>,
    /// Uniform output-noise half-width (0 disables).
    #[arg(long)]
    output_noise: Option<f64>,
    /// Viscosity.
    #[arg(long)]
    nu: Option<f64>,
    /// Integration step size.
    #[arg(long)]
    dt: Option<f64>,
    /// Integration horizon (at least t_star).
    #[arg(long)]
    t_final: Option<f64>,
    /// Scale of the random initial coefficients.
    #[arg(long)]
    radius: Option<f64>,
    /// Leading modes the initial draws may excite.
    #[arg(long)]
    active_modes: Option<usize>,
    /// Initial-data distribution: "box" or "sphere".
    #[arg(long)]
    distribution: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory (defaults to the output directory).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Output clamp bound (default: derived from the dataset radius).
    #[arg(long)]
    clamp: Option<f64>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Optimizer step size.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Optimizer: "sgd", "momentum", or "adam".
    #[arg(long)]
    optimizer: Option<String>,
    /// Fraction of records held out for validation.
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    patience: Option<usize>,
    /// Train only the final affine layer.
    #[arg(long)]
    freeze_hidden: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory (defaults to the output directory).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model directory (defaults to the output directory).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of fresh test draws.
    #[arg(long)]
    n_test: Option<usize>,
    /// Added to the dataset seed to decorrelate the test stream.
    #[arg(long)]
    seed_offset: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Which suite to run.
    #[arg(long, value_enum, default_value = "all")]
    suite: VerifySuite,
}

#[derive(Args)]
struct SensorsArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of basis modes in the 3D reference basis.
    #[arg(long)]
    modes: Option<usize>,
    /// Leading mode count the reconstruction must cover.
    #[arg(long)]
    d: Option<usize>,
    /// Sensor points per axis, comma separated, ascending.
    #[arg(long, value_delimiter = ',')]
    grids: Option<Vec<usize>>,
    /// Probe lattice resolution for sup-norm estimates.
    #[arg(long)]
    probe_n: Option<usize>,
    /// Target reconstruction accuracy for the sensor requirement.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Also train and score the depth-2 reconstruction pipeline.
    #[arg(long)]
    pipeline: bool,
}

/// Provenance record written beside every subcommand's artifacts.
#[derive(Serialize)]
struct RunRecord<'a, C: Serialize> {
    command: &'a str,
    config: &'a C,
    versions: Versions,
    artifacts: &'a [String],
    /// Wall-clock seconds; the only field not reproduced across runs.
    elapsed_seconds: f64,
}

#[derive(Serialize)]
struct Versions {
    nslab: &'static str,
    dataset_format: u32,
    model_format: u32,
}

impl Versions {
    fn current() -> Versions {
        Versions {
            nslab: env!("CARGO_PKG_VERSION"),
            dataset_format: nslab_core::dataset::FORMAT_VERSION,
            model_format: nslab_core::mlp::MODEL_FORMAT_VERSION,
        }
    }
}

fn write_run_record<C: Serialize>(
    out: &std::path::Path,
    command: &str,
    config: &C,
    artifacts: &[String],
    started: Instant,
) -> Result<(), CliError> {
    let record = RunRecord {
        command,
        config,
        versions: Versions::current(),
        artifacts,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    let mut text = serde_json::to_string_pretty(&record)
        .map_err(|e| CliError::Io(format!("serializing run.json: {e}")))?;
    text.push('\n');
    std::fs::write(out.join("run.json"), text)
        .map_err(|e| CliError::Io(format!("writing run.json: {e}")))?;
    Ok(())
}

fn apply<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }
    let out = cli.out;
    let started = Instant::now();

    match cli.command {
        Command::Basis(args) => {
            let mut cfg: BasisCmdConfig = load_config(args.config.as_deref())?;
            apply(&mut cfg.dim, args.dim);
            apply(&mut cfg.modes, args.modes);
            let artifacts = commands::run_basis(&cfg, &out)?;
            write_run_record(&out, "basis", &cfg, &artifacts, started)
        }
        Command::Simulate(args) => {
            let mut cfg: SimulateConfig = load_config(args.config.as_deref())?;
            apply(&mut cfg.dim, args.dim);
            apply(&mut cfg.modes, args.modes);
            apply(&mut cfg.nu, args.nu);
            apply(&mut cfg.dt, args.dt);
            apply(&mut cfg.t_final, args.t_final);
            apply(&mut cfg.snapshot_stride, args.snapshot_stride);
            if args.no_stability_guard {
                cfg.stability_guard = false;
            }
            apply(&mut cfg.radius, args.radius);
            apply(&mut cfg.active_modes, args.active_modes);
            if let Some(name) = &args.distribution {
                cfg.distribution = distribution_from_name(name)?;
            }
            apply(&mut cfg.seed, cli.seed);
            apply(&mut cfg.record, args.record);
            let artifacts = commands::run_simulate(&cfg, &out)?;
            write_run_record(&out, "simulate", &cfg, &artifacts, started)
        }
        Command::GenData(args) => {
            let mut cfg: GenDataConfig = load_config(args.config.as_deref())?;
            apply(&mut cfg.dim, args.dim);
            apply(&mut cfg.modes, args.modes);
            apply(&mut cfg.n, args.n);
            apply(&mut cfg.d_h, args.d_h);
            apply(&mut cfg.d_y, args.d_y);
            apply(&mut cfg.t_star, args.t_star);
            apply(&mut cfg.output_noise, args.output_noise);
            apply(&mut cfg.nu, args.nu);
            apply(&mut cfg.dt, args.dt);
            apply(&mut cfg.t_final, args.t_final);
            apply(&mut cfg.radius, args.radius);
            apply(&mut cfg.active_modes, args.active_modes);
            if let Some(name) = &args.distribution {
                cfg.distribution = distribution_from_name(name)?;
            }
            apply(&mut cfg.seed, cli.seed);
            let artifacts = commands::run_gen_data(&cfg, &out)?;
            write_run_record(&out, "gen-data", &cfg, &artifacts, started)
        }
        Command::Train(args) => {
            let mut cfg: TrainCmdConfig = load_config(args.config.as_deref())?;
            apply(&mut cfg.hidden, args.hidden);
            if args.clamp.is_some() {
                cfg.clamp = args.clamp;
            }
            apply(&mut cfg.epochs, args.epochs);
            apply(&mut cfg.batch_size, args.batch_size);
            apply(&mut cfg.learning_rate, args.learning_rate);
            if let Some(name) = &args.optimizer {
                cfg.optimizer = optimizer_from_name(name)?;
            }
            apply(&mut cfg.seed, cli.seed);
            apply(&mut cfg.validation_fraction, args.validation_fraction);
            if args.patience.is_some() {
                cfg.patience = args.patience;
            }
            if args.freeze_hidden {
                cfg.freeze_hidden = true;
            }
            let data_dir = args.data.unwrap_or_else(|| out.clone());
            let artifacts = commands::run_train(&cfg, &data_dir, &out)?;
            write_run_record(&out, "train", &cfg, &artifacts, started)
        }
        Command::Eval(args) => {
            let mut cfg: EvalConfig = load_config(args.config.as_deref())?;
            apply(&mut cfg.n_test, args.n_test);
            apply(&mut cfg.seed_offset, args.seed_offset);
            let data_dir = args.data.unwrap_or_else(|| out.clone());
            let model_dir = args.model.unwrap_or_else(|| out.clone());
            let artifacts = commands::run_eval(&cfg, &data_dir, &model_dir, &out)?;
            write_run_record(&out, "eval", &cfg, &artifacts, started)
        }
        Command::Verify(args) => {
            let mut cfg: VerifyConfig = load_config(args.config.as_deref())?;
            if let Some(seed) = cli.seed {
                cfg.energy.seed = seed;
                cfg.lipschitz.seed = seed;
                cfg.projection.seed = seed;
            }
            let artifacts = commands::run_verify(&cfg, args.suite, &out)?;
            write_run_record(&out, "verify", &cfg, &artifacts, started)
        }
        Command::Sensors(args) => {
            let mut cfg: SensorsConfig = load_config(args.config.as_deref())?;
            apply(&mut cfg.modes, args.modes);
            apply(&mut cfg.d, args.d);
            apply(&mut cfg.grids, args.grids);
            apply(&mut cfg.probe_n, args.probe_n);
            apply(&mut cfg.epsilon, args.epsilon);
            if let Some(seed) = cli.seed {
                cfg.pipeline.seed = seed;
            }
            let artifacts = commands::run_sensors(&cfg, args.pipeline, &out)?;
            write_run_record(&out, "sensors", &cfg, &artifacts, started)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nslab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
