//! `crowd`: command-line front end for the crowd dynamics pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "crowd", version, about = "Group detection and crowd activity analysis from trajectories")]
struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random choice (forest training, scenario noise).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect groups and classify activities at every evaluation instant (JSON Lines).
    Analyze {
        /// Track file (`.json` for JSON, CSV otherwise).
        tracks: PathBuf,
    },
    /// Predict the crowd class of feature rows or track files.
    Classify {
        /// Trained forest (JSON).
        #[arg(long)]
        forest: PathBuf,
        /// Feature CSV with 15 feature columns and an optional `class` column.
        #[arg(long, conflicts_with = "tracks", required_unless_present = "tracks")]
        features: Option<PathBuf>,
        /// Track files, one scene each.
        #[arg(long, num_args = 1..)]
        tracks: Vec<PathBuf>,
    },
    /// Train a random forest on a labeled feature CSV.
    TrainForest {
        dataset: PathBuf,
    },
    /// Generate a synthetic scene from a scenario (JSON); writes the tracks and `<out>.truth.json`.
    Synth {
        scenario: PathBuf,
        /// Track output format.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Score detected groups and activities against a ground-truth file.
    Eval {
        tracks: PathBuf,
        /// Ground truth written by `synth`.
        #[arg(long)]
        truth: PathBuf,
    },
    /// Average k-step prediction error as CSV `k,mean_abs_error`.
    Validate {
        tracks: PathBuf,
        #[arg(long, default_value_t = 30)]
        k_max: usize,
        #[arg(long, value_enum, default_value_t = AxisArg::Combined)]
        axis: AxisArg,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxisArg {
    X,
    Y,
    Combined,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
