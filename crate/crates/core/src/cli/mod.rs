//! The `viewsynth` command line.
//!
//! Every failure ends in one line on stderr of the form
//! `error: kind=<kind> message=<text>` and a process exit code:
//! 0 success, 1 runtime error, 2 usage error, 3 verification failure.

mod commands;

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Environment variable naming the default dataset root.
pub const DATA_ENV: &str = "VIEWSYNTH_DATA";

#[derive(Debug, Parser)]
#[command(
    name = "viewsynth",
    version,
    about = "Single-view RGB-D novel view synthesis: render data, train, generate, evaluate"
)]
pub struct Cli {
    /// Worker threads for rendering, convolution and evaluation. `1` makes
    /// every run bitwise reproducible; the default uses all cores.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a multi-view RGB-D dataset with its manifest.
    RenderDataset(RenderDatasetArgs),
    /// Train one class generator on a rendered dataset.
    Train(TrainArgs),
    /// Generate novel views of the object in an image.
    Generate(GenerateArgs),
    /// Score trained generators and write report, rotation curves and continuity.
    Evaluate(EvaluateArgs),
    /// Finite-difference check of the generator gradients.
    Gradcheck(GradcheckArgs),
    /// Print the metadata and tensors of a checkpoint.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
pub struct RenderDatasetArgs {
    /// Comma-separated classes (can, mug, bottle, box, table-like).
    #[arg(long, value_delimiter = ',', required = true)]
    pub classes: Vec<String>,
    /// Instances per class.
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Output directory; defaults to $VIEWSYNTH_DATA.
    #[arg(long, env = DATA_ENV)]
    pub out: PathBuf,
    /// Side of each square view in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Seed of the first instance; instances use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
    /// Pose grid: `training`, `evaluation` or `pitch=lo:hi:step yaw=lo:hi:step`.
    #[arg(long, default_value = "training")]
    pub grid: String,
    /// Replace an existing dataset in a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Class to train.
    #[arg(long)]
    pub class: String,
    /// Dataset root holding manifest.txt; defaults to $VIEWSYNTH_DATA.
    #[arg(long, env = DATA_ENV)]
    pub data: PathBuf,
    /// Run directory for the config echo, loss trace and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    /// Config file with `train.*` and `viewnet.*` keys; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Architecture preset: micro, desk or full.
    #[arg(long)]
    pub model: Option<String>,
    /// Number of batch updates.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Seed for initialization and pair sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pairs per batch.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Fraction of instances held out from training.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Save a checkpoint every N iterations (0 disables).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Print the loss every N iterations.
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
    /// Write into a non-empty run directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("segmentation").required(true).args(["mask", "auto_segment"])))]
#[command(group(ArgGroup::new("rotations").required(true).args(["angles", "sweep"])))]
pub struct GenerateArgs {
    /// RGB image (PNG) containing the object.
    #[arg(long)]
    pub input: PathBuf,
    /// Object mask (PNG, nonzero = object), same size as the input.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Segment the object from the uniform background instead of a mask;
    /// the largest connected region is used.
    #[arg(long)]
    pub auto_segment: bool,
    /// Background difference above which a pixel counts as object.
    #[arg(long, default_value_t = 0.02)]
    pub tolerance: f32,
    /// Class of the object in the image.
    #[arg(long)]
    pub class: String,
    /// Use this class's generator instead (class conversion).
    #[arg(long)]
    pub override_class: Option<String>,
    /// Relative rotations `yaw` or `yaw/pitch` in degrees, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub angles: Vec<String>,
    /// Yaw sweep `start:end:step`, end exclusive, at zero relative pitch.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Registry file of `class = checkpoint` lines.
    #[arg(long)]
    pub registry: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Registry file of `class = checkpoint` lines. Not needed with --oracle.
    #[arg(long, required_unless_present = "oracle")]
    pub registry: Option<PathBuf>,
    /// Dataset root the models were trained on; defaults to $VIEWSYNTH_DATA.
    #[arg(long, env = DATA_ENV)]
    pub data: PathBuf,
    /// Output directory for the reports.
    #[arg(long)]
    pub out: PathBuf,
    /// Reference pose grid: `evaluation`, `training` or `pitch=lo:hi:step yaw=lo:hi:step`.
    #[arg(long, default_value = "evaluation")]
    pub grid: String,
    /// Input views per held-out instance, spread over the dataset grid.
    #[arg(long, default_value_t = 2)]
    pub inputs_per_instance: usize,
    /// Fraction of instances that were held out in training.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    /// Yaw step of the continuity sweep in degrees.
    #[arg(long, default_value_t = 6.0)]
    pub continuity_step: f64,
    /// Score the ground truth against itself (pipeline self-test).
    #[arg(long)]
    pub oracle: bool,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Architecture preset: micro, desk or full.
    #[arg(long, default_value = "micro")]
    pub model: String,
    /// Arithmetic precision of the check; only f64 is supported.
    #[arg(long, default_value = "f64", value_parser = ["f64"])]
    pub precision: String,
    /// Number of seeds to check.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    /// Checkpoint file.
    pub checkpoint: PathBuf,
}

/// Outcome of a subcommand that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    VerificationFailed,
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn report_error(kind: &str, message: &str) {
    eprintln!("error: kind={kind} message={}", one_line(message));
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            let text = e.to_string();
            let detail: Vec<&str> = text
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(|l| l.trim().trim_start_matches("error: "))
                .filter(|l| !l.is_empty())
                .collect();
            report_error("usage", &detail.join(" "));
            return EXIT_USAGE;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(Error::InvalidArgument(
            "--threads must be at least 1".into(),
        )),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| commands::dispatch(&cli.command)),
            Err(e) => Err(Error::InvalidArgument(format!("thread pool: {e}"))),
        },
        None => commands::dispatch(&cli.command),
    };
    match result {
        Ok(Status::Ok) => EXIT_OK,
        Ok(Status::VerificationFailed) => EXIT_VERIFY,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            EXIT_RUNTIME
        }
    }
}
