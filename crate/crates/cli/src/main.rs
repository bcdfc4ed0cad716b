//! `vreid`: generate synthetic data, train the toy network, and score
//! retrieval and keypoint predictions.

mod commands;
mod config;
mod error;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vreid::posegeom::PoseChannels;
use vreid::synthgen::Preset;

use commands::{Ablation, DataArgs, EvalArgs, PckArgs, RankArgs, TrainArgs};
use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "vreid", version, about = "Pose-aware vehicle re-identification toolkit")]
struct Cli {
    /// JSON or TOML run configuration; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed, recorded in every output file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataFlags {
    /// Directory with manifest.jsonl and embeddings.bin.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Feature matrix to use instead of the data directory's embeddings.
    #[arg(long, alias = "features")]
    embeddings: Option<PathBuf>,
}

impl From<DataFlags> for DataArgs {
    fn from(f: DataFlags) -> Self {
        DataArgs { data: f.data, manifest: f.manifest, embeddings: f.embeddings }
    }
}

fn parse_channels(s: &str) -> Result<PoseChannels, String> {
    match s {
        "none" => Ok(PoseChannels::None),
        "heatmap" => Ok(PoseChannels::Heatmap),
        "segment" => Ok(PoseChannels::Segment),
        _ => Err(format!("expected none, heatmap or segment, got {s:?}")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset: manifest, embeddings and pose vectors.
    Gen {
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score query/gallery retrieval on a feature matrix.
    Eval {
        #[command(flatten)]
        data: DataFlags,
        /// K of the rank-K mAP.
        #[arg(long)]
        rank_k: Option<usize>,
        /// Also report the intra/inter distance ratio.
        #[arg(long)]
        variability: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted keypoints against ground truth by body part.
    Pck {
        /// Manifest with predicted keypoints.
        #[arg(long)]
        pred: PathBuf,
        /// Manifest with ground-truth keypoints and boxes.
        #[arg(long)]
        gt: PathBuf,
        /// Segment/group/flip-pair tables (JSON).
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        threshold_multiplier: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the toy multi-task network and evaluate it on the held-out split.
    Train {
        #[command(flatten)]
        data: DataFlags,
        #[arg(long)]
        layout: Option<PathBuf>,
        /// Switch off a component; repeatable.
        #[arg(long, value_enum)]
        ablate: Vec<Ablation>,
        /// Pose maps pooled into the descriptor.
        #[arg(long, value_parser = parse_channels)]
        pose_channels: Option<PoseChannels>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the nearest gallery images for one query.
    Rank {
        #[command(flatten)]
        data: DataFlags,
        /// image_id of a query record.
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 30)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    if let Some(n) = cli.threads.map(usize::from).or(cfg.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let seed = cli.seed.or(cfg.seed);
    match cli.command {
        Command::Gen { preset, out } => commands::gen(&cfg, preset, seed, &out),
        Command::Eval { data, rank_k, variability, out } => {
            commands::eval(&cfg, &EvalArgs { data: data.into(), rank_k, variability }, seed, &out)
        }
        Command::Pck { pred, gt, layout, threshold_multiplier, out } => {
            commands::pck(&cfg, &PckArgs { pred, gt, layout, threshold_multiplier }, seed, &out)
        }
        Command::Train { data, layout, ablate, pose_channels, epochs, out } => commands::train_cmd(
            &cfg,
            &TrainArgs { data: data.into(), layout, ablate, pose_channels, epochs },
            seed,
            &out,
        ),
        Command::Rank { data, query, top, out } => {
            commands::rank(&cfg, &RankArgs { data: data.into(), query, top, out }, seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
