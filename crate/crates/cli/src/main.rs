mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Few-shot property prediction for acrylate elastomers.
#[derive(Debug, Parser)]
#[command(name = "elastokit", version)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a dataset CSV and print every issue found.
    ValidateData {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Self-supervised pretraining of the graph encoder on a SMILES corpus.
    Pretrain(PretrainArgs),
    /// Encode every valid dataset record with a pretrained graph encoder.
    EmbedGraph {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write Morgan fingerprint bit vectors as an embedding table.
    Fingerprint {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = elastokit::chem::DEFAULT_RADIUS)]
        radius: u32,
        #[arg(long, default_value_t = elastokit::chem::DEFAULT_NBITS)]
        nbits: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-out evaluation of one strategy; writes metrics, predictions and plots.
    Evaluate(EvaluateArgs),
    /// Fit on every valid record and predict dataset ids or new SMILES.
    Predict(PredictArgs),
    /// Redraw plots and the comparison table from existing metrics and predictions.
    Report {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct PretrainArgs {
    /// One SMILES per line; `#` starts a comment.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 128)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 0.15)]
    mask_ratio: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Defaults to ELASTOKIT_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Per-epoch loss curve.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's pipeline.
    #[arg(long)]
    pipeline: Option<String>,
    /// Worker threads for folds (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Select the late-fusion weight inside each training fold.
    #[arg(long)]
    nested_alpha: bool,
    /// Fixed late-fusion weight.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated seeds; overrides the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Dataset id (repeatable).
    #[arg(long = "id")]
    ids: Vec<String>,
    /// New SMILES (repeatable).
    #[arg(long = "smiles")]
    smiles: Vec<String>,
    /// Defaults to the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
