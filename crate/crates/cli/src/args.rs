//! Command-line grammar.

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use vtrack::Vec3;

#[derive(Parser, Debug, Clone)]
#[command(
    name = "vtrack",
    version,
    about = "Vessel centerline tracking with a dilated 3D CNN"
)]
pub struct Cli {
    /// Worker threads; defaults to the number of cores. `1` is bit-reproducible.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print training progress and per-phantom timings to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Generate phantom volumes with reference centerlines.
    Phantom(PhantomArgs),
    /// Train a tracker or proximity network on a phantom directory.
    Train(TrainArgs),
    /// Track one centerline from a seed point.
    Track(TrackArgs),
    /// Track every reference vessel of a phantom directory from its midpoint.
    TrackAll(TrackAllArgs),
    /// Detect ostia and seeds, then assemble a centerline tree.
    Autotrack(AutotrackArgs),
    /// Score extracted centerlines (and trees) against the references.
    Eval(EvalArgs),
    /// Bland–Altman agreement of extracted and reference radii.
    RadiusEval(RadiusEvalArgs),
    /// Repeat a previous run from its `run.cfg` echo.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone)]
#[group(skip)]
#[command(group(ArgGroup::new("source").required(true).args(["suite", "spec", "desk_split", "all"])))]
pub struct PhantomArgs {
    /// One of: straight, curved, branching, degraded, loop.
    #[arg(long)]
    pub suite: Option<String>,
    /// A phantom spec file; the phantom is named after the file stem.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Write the desk training and held-out sets to `<out>/train` and `<out>/held`.
    #[arg(long)]
    pub desk_split: bool,
    /// Every standard suite.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Tracker,
    ProximitySeeds,
    ProximityOstia,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub head: HeadKind,
    #[arg(long)]
    pub out: PathBuf,
    /// Small network and short schedule.
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning-rate factor applied every `--lr-interval` iterations.
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub lr_interval: Option<usize>,
    /// Direction codebook size.
    #[arg(long)]
    pub ndirs: Option<usize>,
    /// Patch width (= receptive field) in voxels.
    #[arg(long)]
    pub width: Option<usize>,
    /// Patch voxel size in mm.
    #[arg(long)]
    pub voxel: Option<f64>,
    #[arg(long)]
    pub no_rot_aug: bool,
    #[arg(long)]
    pub no_trans_aug: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated suite names to train on (phantom name prefixes).
    /// Ostium networks default to `branching`.
    #[arg(long, value_delimiter = ',')]
    pub suites: Option<Vec<String>>,
}

/// Tracker settings shared by every tracking command.
#[derive(Args, Debug, Clone)]
pub struct TrackerFlags {
    /// Normalized-entropy threshold that ends a track.
    #[arg(long, default_value_t = 0.9)]
    pub theta_h: f64,
    /// Step limit per direction.
    #[arg(long, default_value_t = 2000)]
    pub max_steps: usize,
}

#[derive(Args, Debug, Clone)]
pub struct TrackArgs {
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// World position `x,y,z` in mm.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub seed_point: Vec3,
    #[arg(long)]
    pub out: PathBuf,
    /// Expected codebook size; fails if the weights were trained with another.
    #[arg(long)]
    pub ndirs: Option<usize>,
    #[command(flatten)]
    pub tracker: TrackerFlags,
}

#[derive(Args, Debug, Clone)]
pub struct TrackAllArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed displacement perpendicular to the vessel, as a fraction of its radius.
    #[arg(long, default_value_t = 0.0)]
    pub seed_offset: f64,
    /// Seeds the random displacement directions.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',')]
    pub suites: Option<Vec<String>>,
    #[command(flatten)]
    pub tracker: TrackerFlags,
}

#[derive(Args, Debug, Clone)]
pub struct AutotrackArgs {
    #[arg(long)]
    pub volume: PathBuf,
    /// Tracker network.
    #[arg(long)]
    pub tracker_weights: PathBuf,
    /// Seed proximity network.
    #[arg(long)]
    pub seed_weights: PathBuf,
    /// Ostium proximity network.
    #[arg(long)]
    pub ostia_weights: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub num_seeds: usize,
    #[command(flatten)]
    pub tracker: TrackerFlags,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub ref_dir: PathBuf,
    #[arg(long)]
    pub extracted_dir: PathBuf,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct RadiusEvalArgs {
    #[arg(long)]
    pub ref_dir: PathBuf,
    #[arg(long)]
    pub extracted_dir: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct RerunArgs {
    pub config: PathBuf,
}

pub fn parse_point(s: &str) -> Result<Vec3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Vec3::new(x, y, z)),
        _ => Err(format!("expected three finite numbers `x,y,z`, got `{s}`")),
    }
}
