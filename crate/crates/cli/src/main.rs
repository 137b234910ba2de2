mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use streamgnn_core::model::BuiltinKind;
use streamgnn_core::DirectionMode;

#[derive(Parser)]
#[command(name = "streamgnn", version, about = "Incremental min/max GNN inference on streaming graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Direction {
    Directed,
    Symmetrized,
}

impl From<Direction> for DirectionMode {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Directed => DirectionMode::Directed,
            Direction::Symmetrized => DirectionMode::Symmetrized,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VerifyMode {
    Off,
    EveryRound,
    Final,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModelKind {
    Gcn,
    Sage,
    Gin,
}

impl From<ModelKind> for BuiltinKind {
    fn from(k: ModelKind) -> Self {
        match k {
            ModelKind::Gcn => BuiltinKind::Gcn,
            ModelKind::Sage => BuiltinKind::Sage,
            ModelKind::Gin => BuiltinKind::Gin,
        }
    }
}

#[derive(clap::Args, Clone, Debug)]
pub struct ModelArgs {
    /// Model description file.
    #[arg(long)]
    pub model: PathBuf,
    /// Weight manifest (`<name> <tensor file>` lines).
    #[arg(long)]
    pub weights: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic graph, features, update stream, and optionally a
    /// built-in model with random weights.
    Gen(GenArgs),
    /// Run full inference and write the initial checkpoint directory.
    Init(InitArgs),
    /// Apply an update stream to a checkpoint, one stats record per round.
    Stream(StreamArgs),
    /// Summarize stats files.
    Report(ReportArgs),
    /// Compare a checkpoint directory against full inference.
    Verify(VerifyArgs),
}

#[derive(clap::Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub nodes: usize,
    #[arg(long, default_value_t = 8)]
    pub avg_degree: usize,
    #[arg(long, default_value_t = 16)]
    pub feature_len: usize,
    #[arg(long, default_value_t = 200)]
    pub stream_len: usize,
    #[arg(long, default_value_t = 0.6)]
    pub insert_fraction: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Also write `model.txt` and `weights/` for a built-in model.
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// GIN only.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f32,
}

#[derive(clap::Args)]
pub struct InitArgs {
    /// Edge list (`src dst` per line).
    #[arg(long)]
    pub graph: PathBuf,
    /// Feature tensor, one row per node.
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = Direction::Directed)]
    pub direction: Direction,
    /// Checkpoint directory to create.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args)]
pub struct StreamArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Update stream (`+ src dst` or `- src dst` per line).
    #[arg(long)]
    pub stream: PathBuf,
    /// Updates per round.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub num_updates: u64,
    #[arg(long, value_enum, default_value_t = Direction::Directed)]
    pub direction: Direction,
    #[arg(long, value_enum, default_value_t = VerifyMode::Off)]
    pub verify: VerifyMode,
    /// Needed for verification and baseline comparison.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Also run the affected-area baseline and record its fetch count.
    #[arg(long)]
    pub compare_baseline: bool,
    /// Write stats records here instead of stdout.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
    /// Write the final checkpoint directory here.
    #[arg(long)]
    pub save: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct ReportArgs {
    /// Stats files written by `stream`.
    #[arg(required = true)]
    pub stats: Vec<PathBuf>,
}

#[derive(clap::Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Init(a) => commands::init(&a),
        Command::Stream(a) => commands::stream(&a),
        Command::Report(a) => commands::report(&a),
        Command::Verify(a) => commands::verify(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<commands::Mismatch>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
