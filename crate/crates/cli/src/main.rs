mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridscreen::train::{Architecture, Supervision};

use crate::error::CliError;
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "gridscreen", version, about = "Cryo-EM grid-square extraction and quality scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Assemble MRC tiles into a montage from a stage-position manifest.
    Stitch(StitchArgs),
    /// Locate grid squares in a montage and crop them to PNGs.
    Extract(ExtractArgs),
    /// Compute brightness and squareness scores for cropped squares.
    Autolabel(AutolabelArgs),
    /// Generate a synthetic labeled corpus.
    Synth(SynthArgs),
    /// Train a scoring network.
    Train(TrainArgs),
    /// Score squares with a checkpoint and export attention overlays.
    Score(ScoreArgs),
    /// Mean absolute error of a checkpoint against labels.
    Eval(EvalArgs),
    /// Re-run the command recorded in a run manifest.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    /// JSON array of {"tile", "x_um", "y_um"} records.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub rows: usize,
    #[arg(long, default_value_t = 5)]
    pub cols: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Montage MRC file.
    #[arg(long)]
    pub montage: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    pub threshold: f32,
    #[arg(long, default_value_t = 250)]
    pub max_count: usize,
    #[arg(long, default_value_t = 640)]
    pub side: usize,
    #[arg(long)]
    pub template_side: Option<usize>,
    #[arg(long)]
    pub min_separation: Option<usize>,
    /// Prefix for square ids; defaults to the montage file stem.
    #[arg(long)]
    pub grid_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct AutolabelArgs {
    /// Directory of square PNGs.
    #[arg(long)]
    pub squares: PathBuf,
    /// Label manifest supplying cracking, contamination and overall scores.
    #[arg(long)]
    pub manual: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.4)]
    pub sigma: f32,
    #[arg(long, default_value_t = 0.1)]
    pub low: f32,
    #[arg(long, default_value_t = 0.3)]
    pub high: f32,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub label_fraction: f64,
    #[arg(long, default_value_t = 8)]
    pub max_crack_count: usize,
    #[arg(long, default_value_t = 3)]
    pub max_crack_width: usize,
    #[arg(long, default_value_t = 0.6)]
    pub max_coverage: f64,
    #[arg(long, default_value_t = 0.05)]
    pub max_noise: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Full,
    Primary,
}

impl From<ArchArg> for Architecture {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Full => Architecture::Full,
            ArchArg::Primary => Architecture::PrimaryOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Semi-supervised: labeled plus unlabeled samples.
    Ss,
    /// Fully supervised: labeled samples only.
    Fs,
}

impl From<ModeArg> for Supervision {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ss => Supervision::SemiSupervised,
            ModeArg::Fs => Supervision::FullySupervised,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of square PNGs named `<id>.png`.
    #[arg(long)]
    pub data: PathBuf,
    /// Label manifest; defaults to `<data>/labels.csv`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub run_dir: PathBuf,
    /// JSON with optional `model` and `train` sections; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub arch: Option<ArchArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub labeled: Option<usize>,
    #[arg(long)]
    pub unlabeled: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Feature channels per branch (multiple of 4).
    #[arg(long)]
    pub channels: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub squares: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ArchArg::Full)]
    pub arch: ArchArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ArchArg::Full)]
    pub arch: ArchArg,
}

fn run(cli: Cli, args: &[String]) -> Result<(), CliError> {
    match cli.command {
        Command::Stitch(a) => commands::stitch(&a, RunManifest::new("stitch", args)),
        Command::Extract(a) => commands::extract(&a, RunManifest::new("extract", args)),
        Command::Autolabel(a) => commands::autolabel(&a, RunManifest::new("autolabel", args)),
        Command::Synth(a) => commands::synth(&a, RunManifest::new("synth", args)),
        Command::Train(a) => commands::train(&a, RunManifest::new("train", args)),
        Command::Score(a) => commands::score(&a, RunManifest::new("score", args)),
        Command::Eval(a) => commands::eval(&a, RunManifest::new("eval", args)),
        Command::Replay { manifest } => {
            let recorded = RunManifest::read(&manifest)?;
            let mut argv = vec!["gridscreen".to_string()];
            argv.extend(recorded.args.iter().cloned());
            let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::Usage(e.to_string()))?;
            if matches!(cli.command, Command::Replay { .. }) {
                return Err(CliError::Usage("a replay manifest cannot itself be a replay".into()));
            }
            run(cli, &recorded.args)
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli, &argv[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
