use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ntg_core::harness::CostAxis;
use ntg_core::measure::DEFAULT_BINS;
use ntg_core::{DerivativeMode, Measure};

mod commands;

/// Multimodal and multispectral image registration with the normalized
/// total gradient.
///
/// Exit status: 0 on success, 2 on invalid input, 3 when optimization fails.
#[derive(Debug, Parser)]
#[command(name = "ntg", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register a floating image against a reference image.
    ///
    /// Writes transform.json, registered.<ext> and overlay.ppm (reference in
    /// red and blue, registered floating image in green).
    Register(RegisterArgs),
    /// Register every channel of a stack against one reference channel.
    ///
    /// The input directory holds ch00.<ext>, ch01.<ext>, ... Writes
    /// chNN.transform.json and chNN.<ext> per channel plus summary.json.
    RegisterStack(RegisterStackArgs),
    /// Evaluate a measure over a 2-D grid of similarity transforms.
    ///
    /// Writes costmap.f32 with its costmap.json sidecar, costmap_axes.json and
    /// the heat image costmap.pgm.
    Costmap(CostmapArgs),
    /// Compare gradient sparsity of aligned and misaligned difference images.
    Sparsity(SparsityArgs),
    /// Control-point RMSE of estimated transforms against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic pair or stack with known misalignment.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Pgm,
    F32,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Pgm => "pgm",
            Self::F32 => "f32",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RegisterOpts {
    /// Pyramid layers.
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    /// Differential evolution population size.
    #[arg(long, default_value_t = 30)]
    pub de_pop: usize,
    /// Differential evolution generations.
    #[arg(long, default_value_t = 200)]
    pub de_gens: usize,
    /// Differential evolution weight F.
    #[arg(long, default_value_t = 0.8)]
    pub de_f: f64,
    /// Differential evolution crossover rate.
    #[arg(long, default_value_t = 0.9)]
    pub de_cr: f64,
    #[arg(long, default_value_t = 0)]
    pub de_seed: u64,
    /// Search box as lo1..lo6,hi1..hi6. Translation limits are in pixels of
    /// the coarsest layer.
    /// [default: 0.95,-0.05,-10,-0.05,0.95,-10,1.05,0.05,10,0.05,1.05,10]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub bounds: Option<Vec<f64>>,
    /// Newton iterations per layer.
    #[arg(long, default_value_t = 6)]
    pub newton_iters: usize,
    /// Cost measure: ntg, mi, cr or ssd. Only ntg uses Newton refinement.
    #[arg(long, default_value = "ntg")]
    pub measure: Measure,
    /// Sharpness c of the smooth absolute value.
    #[arg(long, default_value_t = 10.0)]
    pub smooth_c: f64,
    /// Floating-image derivatives: spline or stencil.
    #[arg(long, default_value = "spline")]
    pub mode: DerivativeMode,
    /// Maximum histogram bins for mi and cr.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Floating image (.pgm or .f32).
    pub floating: PathBuf,
    /// Reference image (.pgm or .f32).
    pub reference: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Image format of registered.<ext>. Defaults to the floating image's.
    #[arg(long)]
    pub format: Option<OutputFormat>,
    #[command(flatten)]
    pub opts: RegisterOpts,
}

#[derive(Debug, Args)]
pub struct RegisterStackArgs {
    /// Directory of chNN.pgm or chNN.f32 files.
    pub input: PathBuf,
    /// Reference channel number. Defaults to the middle channel.
    #[arg(long)]
    pub reference: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub format: Option<OutputFormat>,
    #[command(flatten)]
    pub opts: RegisterOpts,
}

#[derive(Debug, Args)]
pub struct CostmapArgs {
    pub floating: PathBuf,
    pub reference: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// ntg, mi, cr or ssd.
    #[arg(long, default_value = "ntg")]
    pub measure: Measure,
    /// Two swept axes out of tx, ty, rot, scale.
    #[arg(long, value_delimiter = ',', default_values = ["tx", "ty"])]
    pub axes: Vec<CostAxis>,
    /// First axis as lo,hi,steps. Rotation is in degrees.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values = ["-10", "10", "21"])]
    pub range1: Vec<f64>,
    /// Second axis as lo,hi,steps.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values = ["-10", "10", "21"])]
    pub range2: Vec<f64>,
    /// Values of the unswept components as tx,ty,rot,scale.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values = ["0", "0", "0", "1"])]
    pub at: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct SparsityArgs {
    /// Aligned stack directory. A synthetic stack is generated when omitted.
    pub input: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub reference: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Misalignment box as lo1..lo6,hi1..hi6 in image pixels.
    /// [default: 0.95,-0.05,-10,-0.05,0.95,-10,1.05,0.05,10,0.05,1.05,10]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub bounds: Option<Vec<f64>>,
    /// Redraw misalignments whose mean control-point displacement is below
    /// this many pixels.
    #[arg(long)]
    pub min_misalignment: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Synthetic stack width.
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    /// Synthetic stack height.
    #[arg(long, default_value_t = 96)]
    pub height: usize,
    /// Synthetic stack channel count.
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// truth.json as written by `ntg synth`.
    pub truth: PathBuf,
    /// A transform.json from `ntg register` or a `ntg register-stack` output
    /// directory.
    pub estimates: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    /// Write a stack with this many channels instead of a pair.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Box the ground-truth transforms are drawn from, in image pixels.
    /// [default: 0.95,-0.05,-10,-0.05,0.95,-10,1.05,0.05,10,0.05,1.05,10]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub bounds: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gaussian noise sigma on the floating image (pair only).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Invert the floating image (pair only).
    #[arg(long)]
    pub invert: bool,
    /// Contrast-erased disks in the floating image (pair only).
    #[arg(long, default_value_t = 0)]
    pub erasures: usize,
    /// Tone gamma of the floating image (pair only).
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Pgm)]
    pub format: OutputFormat,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("ntg: {err}");
            ExitCode::from(err.code())
        }
    }
}
