//! `remix`: synthesise mixture datasets, train and evaluate separators.

mod commands;
mod grid;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use remix_core::Error;

#[derive(Parser, Debug)]
#[command(name = "remix", version, about = "Unsupervised image source separation by unmix-and-remix")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a mixture dataset and print its hash.
    Synth(SynthArgs),
    /// Train a separator on a synthesised dataset.
    Train(TrainArgs),
    /// Separate individual image files with a trained masker.
    Separate(SeparateArgs),
    /// Score a checkpoint on a dataset's validation split.
    Eval(EvalArgs),
    /// Render a Mix | x | b | GT-x | GT-b comparison grid.
    Grid(GridArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Flat `key = value` manifest file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// mnist, shoes_bags or custom.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// `key=value` manifest overrides.
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Flat `key = value` training config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory written by `synth`.
    #[arg(long)]
    data: PathBuf,
    /// Run directory for checkpoints and the metrics log.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    mask_steps: Option<usize>,
    /// unsupervised or supervised.
    #[arg(long)]
    mode: Option<String>,
    /// Resume from a training-state checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Also write a training-state checkpoint every N steps (0: per epoch only).
    #[arg(long, default_value_t = 0)]
    save_every: u64,
    /// `key=value` training overrides.
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct SeparateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory for `<stem>_x.png`, `<stem>_b.png`, `<stem>_mask.png`.
    #[arg(long)]
    out: PathBuf,
    /// Map intensities to `(255 - v)/255` before separating.
    #[arg(long)]
    invert: bool,
    /// Image files to separate; resized to the model's input shape.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Directory for `report.txt` and `report.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output PNG path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 1,
        Error::Config(_) => 2,
        Error::Data(_) | Error::Format(_) | Error::Length(_) | Error::Dimension { .. } | Error::Incompatible(_) => 3,
        Error::Divergence { .. } => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Separate(a) => commands::separate(a),
        Command::Eval(a) => commands::eval(a),
        Command::Grid(a) => commands::grid(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
