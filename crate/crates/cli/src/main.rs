use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "propfault", version, about = "Propeller fault detection from multirotor IMU logs")]
pub struct Cli {
    /// TOML run configuration; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Master seed for every stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

/// Where labelled windows come from.
#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Flight manifest CSV. Without it (and without --features) the
    /// synthetic corpus described by the config is generated in memory.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Feature CSV written by `extract`.
    #[arg(long, conflicts_with = "manifest")]
    pub features: Option<PathBuf>,
    /// Window length in samples (default 500).
    #[arg(long)]
    pub window: Option<usize>,
    /// Window stride in samples (default 250).
    #[arg(long)]
    pub stride: Option<usize>,
}

/// A single unlabelled flight log.
#[derive(Args, Debug, Clone)]
pub struct FlightArgs {
    /// Flight CSV.
    #[arg(long)]
    pub flight: PathBuf,
    /// Column preset: canonical, ardupilot or arm_imu.
    #[arg(long, default_value = "canonical")]
    pub columns: String,
    /// Sample rate for logs without a timestamp column.
    #[arg(long)]
    pub sample_rate: Option<f64>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (flight CSVs plus manifest.csv).
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Total flights, split evenly between healthy and each severity.
        #[arg(long)]
        flights: Option<usize>,
        /// Motor count (default 6).
        #[arg(long)]
        motors: Option<usize>,
        /// Fault severities, comma separated.
        #[arg(long, value_delimiter = ',')]
        severity: Option<Vec<f64>>,
        /// Flight duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Window a corpus and write the feature CSV.
    Extract {
        #[command(flatten)]
        data: DataArgs,
        /// Feature CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the hypothesis bank and calibrate the alarm threshold.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// Model document path.
        #[arg(long)]
        out: PathBuf,
        /// EMA smoothing factor (default 0.3).
        #[arg(long)]
        alpha_ema: Option<f64>,
        /// Healthy-window false alarm rate that sets the alarm threshold (default 0.05).
        #[arg(long)]
        far_target: Option<f64>,
    },
    /// Attach a toy Monte Carlo ensemble to a fitted model.
    Cls {
        /// Model document written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Output path (default: overwrite the model).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Toys per hypothesis (default 10000).
        #[arg(long)]
        n_toys: Option<usize>,
    },
    /// Score one flight with a fitted model.
    Detect {
        /// Model document written by `fit`.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        flight: FlightArgs,
        /// Posterior model; alarm windows get a posterior summary.
        #[arg(long)]
        posterior: Option<PathBuf>,
        /// CLs detection level (default 0.05).
        #[arg(long)]
        alpha_det: Option<f64>,
        /// Skip the CLs columns.
        #[arg(long)]
        no_cls: bool,
        /// Report path (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the severity/motor posterior and report its calibration.
    SbiTrain {
        #[command(flatten)]
        data: DataArgs,
        /// Posterior document path.
        #[arg(long)]
        out: PathBuf,
        /// Calibration report path (default: <out>.calibration.json).
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Training epochs (default 150).
        #[arg(long)]
        epochs: Option<usize>,
        /// Train on every flight and report calibration on the training
        /// windows instead of held-out flights.
        #[arg(long)]
        in_sample: bool,
    },
    /// Posterior summaries for every window of one flight.
    SbiInfer {
        /// Posterior document written by `sbi-train`.
        #[arg(long)]
        posterior: PathBuf,
        #[command(flatten)]
        flight: FlightArgs,
        /// Posterior draws per window (default 5000).
        #[arg(long)]
        n_samples: Option<usize>,
        /// Credible level of the severity interval (default 0.9).
        #[arg(long)]
        level: Option<f64>,
        /// Report path (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-flight-out evaluation of the detector and baselines.
    EvalLofo {
        #[command(flatten)]
        data: DataArgs,
        /// Methods, comma separated (lrt, baselines, ablation, all or single names).
        #[arg(long)]
        methods: Option<String>,
        /// Output directory for report.json and the CSV exports (default: out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Bootstrap resamples for the AUC interval (default 1000).
        #[arg(long)]
        n_boot: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
