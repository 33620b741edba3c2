//! `nlswag` command-line front end.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Category, CliError};

#[derive(Debug, Parser)]
#[command(name = "nlswag", version, about = "Two-stage adaptive nonlocal InSAR phase filtering")]
struct Cli {
    /// Worker threads, 0 = all cores. Results do not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic scenes and SLC pairs.
    Simulate {
        #[command(subcommand)]
        scene: SceneCmd,
    },
    /// Filter an SLC pair.
    Filter(FilterArgs),
    /// Measure the stage-2 dissimilarity spread and write the xi table.
    Calibrate(CalibrateArgs),
    /// Run a Monte-Carlo experiment.
    Eval {
        #[command(subcommand)]
        experiment: EvalCmd,
    },
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Rows (and columns unless --cols is given).
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    /// Columns [default: same as --size].
    #[arg(long)]
    pub cols: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Variant {
    Plain,
    IntensityCoherence,
}

#[derive(Debug, Subcommand)]
pub enum SceneCmd {
    /// Linear phase ramp.
    Ramp {
        #[command(flatten)]
        grid: GridArgs,
        /// Range fringe frequency in rad/px.
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        f_range: f64,
        /// Azimuth fringe frequency in rad/px.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        f_azimuth: f64,
        #[arg(long, default_value_t = 0.7)]
        coherence: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the scene rasters only.
        #[arg(long)]
        scene_only: bool,
    },
    /// Vertical phase step from −π/3 to π/3.
    Step {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value_t = Variant::Plain)]
        variant: Variant,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        scene_only: bool,
    },
    /// Diamond-square terrain phase.
    Fractal {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0.7)]
        coherence: f64,
        /// Peak-to-peak unwrapped phase in radians [default: 4π].
        #[arg(long)]
        phase_span: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        scene_only: bool,
    },
    /// Draw an SLC pair from scene rasters written by another subcommand.
    Sample {
        /// Directory holding scene_phase, scene_amplitude, scene_coherence.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Filter parameters; each overrides the configuration file.
#[derive(Debug, Args, Default)]
pub struct ParamArgs {
    /// Search window half width [default: 10].
    #[arg(long)]
    pub search_half: Option<usize>,
    /// Stage-1 patch half width [default: 3].
    #[arg(long)]
    pub patch_half_stage1: Option<usize>,
    /// Stage-2 patch half width [default: 5].
    #[arg(long)]
    pub patch_half_stage2: Option<usize>,
    /// Stage-1 filtering strength [default: 4].
    #[arg(long)]
    pub h1: Option<f64>,
    /// Stage-2 filtering strength [default: 2].
    #[arg(long)]
    pub h2: Option<f64>,
    /// Fringe estimation block size [default: 32].
    #[arg(long)]
    pub fringe_block: Option<usize>,
    /// Fringe estimation FFT size [default: 64].
    #[arg(long)]
    pub fringe_fft: Option<usize>,
    /// Fringe smoothing width in pixels [default: 8].
    #[arg(long)]
    pub sigma_smooth: Option<f64>,
    /// Report the peak FFT bin without sub-bin refinement [default: refined].
    #[arg(long)]
    pub no_fringe_refine: bool,
    /// xi coefficients `c0,c1,c2`, or `auto` for the shipped table [default: auto].
    #[arg(long)]
    pub xi: Option<String>,
    /// Disable fringe compensation [default: enabled].
    #[arg(long)]
    pub no_fringe_compensation: bool,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Directory holding `master` and `slave` rasters.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// boxcar, stage1 or nlswag [default: nlswag].
    #[arg(long)]
    pub method: Option<String>,
    /// Boxcar window size [default: 5].
    #[arg(long)]
    pub k: Option<usize>,
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Also write the heterogeneity index.
    #[arg(long)]
    pub dump_eta: bool,
    /// Also write the fringe frequency field.
    #[arg(long)]
    pub dump_fringe: bool,
    /// Also write the stage-1 ENL map.
    #[arg(long)]
    pub dump_enl: bool,
    /// Also write PGM snapshots of the outputs.
    #[arg(long)]
    pub render: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Table path [default: <out>/xi_calibration.txt].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalCommon {
    /// Monte-Carlo trials [default: 200 fractal, 16 slope, 1000 step].
    #[arg(long, conflicts_with = "paper_scale")]
    pub trials: Option<usize>,
    /// Use 10,000 trials.
    #[arg(long)]
    pub paper_scale: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated methods: boxcar, stage1, nlswag, nlswag_nocomp.
    #[arg(long)]
    pub methods: Option<String>,
    /// Boxcar window size [default: 5].
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Phase ramps of increasing frequency.
    Slope {
        #[command(flatten)]
        common: EvalCommon,
        /// Comma-separated frequencies in rad/px [default: 0, 0.1, …, 1.5].
        #[arg(long)]
        frequencies: Option<String>,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0.7)]
        coherence: f64,
    },
    /// Phase step response profiles.
    Step {
        #[command(flatten)]
        common: EvalCommon,
        #[arg(long, value_enum, default_value_t = Variant::Plain)]
        variant: Variant,
        #[arg(long, default_value_t = 32)]
        rows: usize,
        #[arg(long, default_value_t = 64)]
        cols: usize,
    },
    /// Fractal terrain with repeated noise draws.
    Fractal {
        #[command(flatten)]
        common: EvalCommon,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 0.7)]
        coherence: f64,
        /// Peak-to-peak unwrapped terrain phase in radians [default: 4π].
        #[arg(long)]
        phase_span: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            let err = CliError { category: Category::Config, message: first };
            eprintln!("{err}");
            return err.exit_code();
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        log::warn!("thread pool already initialized: {e}");
    }
    let result = match cli.command {
        Command::Simulate { scene } => commands::simulate(&cli.out, scene),
        Command::Filter(args) => commands::filter(&cli.out, args),
        Command::Calibrate(args) => commands::calibrate(&cli.out, args),
        Command::Eval { experiment } => commands::eval(&cli.out, experiment),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
