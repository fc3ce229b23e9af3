mod commands;
mod config;
mod models;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use interaction_core::concvae::Direction;
use interaction_core::corpus::Split;
use interaction_core::interaction::DEFAULT_K;
use interaction_core::{Error, ModelKind};

use commands::{EvalArgs, InferArgs};
use config::Profile;

#[derive(Parser)]
#[command(name = "interaction", version, about = "Explanation generation and label prediction for NLI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(clap::Args)]
struct Infer {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// JSONL with `premise` and `hypothesis`; stdin when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    max_len: usize,
}

impl From<Infer> for InferArgs {
    fn from(a: Infer) -> Self {
        InferArgs {
            checkpoint: a.checkpoint,
            vocab: a.vocab,
            input: a.input,
            max_len: a.max_len,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Emit a synthetic corpus as JSONL.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        seed: u64,
        #[arg(long, default_value = "train", value_parser = parse_split)]
        split: Split,
        /// Probability that a hypothesis carries its label's cue word.
        #[arg(long, default_value_t = 0.0)]
        artifacts: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model per seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        model: ModelKind,
        #[arg(long)]
        run_dir: PathBuf,
        /// Overrides the configured seeds and RUN_SEED.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Evaluate checkpoints and print a JSON report.
    Eval {
        #[arg(long, num_args = 1.., required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Human judgements for Correct@k.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy MAP explanation per input.
    Generate(Infer),
    /// Latent sweep: one explanation per k per input.
    Interpolate {
        #[command(flatten)]
        infer: Infer,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = DEFAULT_K)]
        k_values: Vec<f64>,
        /// `diagonal` or a latent dimension index.
        #[arg(long, default_value = "diagonal", value_parser = commands::parse_direction)]
        direction: Direction,
        /// Drop repeated explanations within an input.
        #[arg(long)]
        dedupe: bool,
    },
    /// Predict labels.
    Classify(Infer),
    /// Trainable parameter counts.
    Params {
        #[arg(long = "model", value_parser = parse_kind, required = true)]
        models: Vec<ModelKind>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        profile: Option<Profile>,
        #[arg(long)]
        vocab_size: Option<usize>,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth {
            n,
            seed,
            split,
            artifacts,
            out,
        } => commands::synth(n, seed, split, artifacts, out.as_deref()),
        Command::Train {
            config,
            model,
            run_dir,
            seeds,
        } => commands::train_cmd(&config, model, &run_dir, seeds),
        Command::Eval {
            checkpoints,
            vocab,
            data,
            split,
            config,
            annotations,
            out,
        } => commands::eval_cmd(EvalArgs {
            checkpoints,
            vocab,
            data,
            split,
            config,
            annotations,
            out,
        }),
        Command::Generate(a) => commands::generate(a.into()),
        Command::Interpolate {
            infer,
            k_values,
            direction,
            dedupe,
        } => commands::interpolate(infer.into(), &k_values, direction, dedupe),
        Command::Classify(a) => commands::classify(a.into()),
        Command::Params {
            models,
            config,
            profile,
            vocab_size,
            vocab,
        } => commands::params(&models, config.as_deref(), profile, vocab_size, vocab.as_deref()),
    }
}

/// 3 for checkpoint problems, 2 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    let checkpoint = e.chain().any(|c| {
        matches!(
            c.downcast_ref::<Error>(),
            Some(Error::Checkpoint(_) | Error::VocabMismatch { .. })
        )
    });
    if checkpoint {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
