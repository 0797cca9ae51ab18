//! `dsi`: command-line driver for corpus synthesis, indexing, query
//! generation, retrieval and evaluation.
//!
//! Every stage runs against `runs/<run-id>/` and leaves a
//! `manifest.<command>.json` beside its outputs.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dsi", version, about = "Generative retrieval workbench", propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Directory holding all runs.
    #[arg(long, global = true, default_value = "runs")]
    pub runs_dir: PathBuf,
    /// Run identifier; outputs go to <runs-dir>/<run-id>/.
    #[arg(long, global = true, default_value = "default")]
    pub run_id: String,
    /// TOML config layered over the reference settings. Defaults to the
    /// run's config.toml when one exists.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override any config key, e.g. `--set train_dsi.lr=5e-4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Master seed (config key `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Corpus directory or documents file. Defaults to the run's corpus/.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Corpus file format.
    #[arg(long, global = true, default_value = "jsonl", value_parser = ["jsonl", "tsv"])]
    pub format: String,
}

/// Flags mirroring the keys of one `[train_*]` config section.
#[derive(Debug, Args, Clone, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub total_steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub warmup_steps: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    #[arg(long)]
    pub early_stop_patience: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus into the run directory.
    Synth {
        #[arg(long)]
        num_docs: Option<usize>,
        #[arg(long)]
        mismatch_strength: Option<f64>,
        /// Comma-separated query language tags; empty for mono-lingual.
        #[arg(long, value_delimiter = ',')]
        languages: Option<Vec<String>>,
        /// Seed of the corpus itself (config key `synth.seed`).
        #[arg(long)]
        synth_seed: Option<u64>,
    },
    /// Index documents: document text to docid.
    TrainDsi(TrainFlags),
    /// Index documents plus labelled training queries.
    TrainDsiS(TrainFlags),
    /// Train the document-to-query generator.
    TrainQg(TrainFlags),
    /// Sample queries for every document with the trained generator.
    Genq {
        /// Queries per document and language.
        #[arg(long)]
        n: Option<usize>,
        /// Top-k sampling cutoff.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Index documents through their generated queries.
    TrainDsiQg {
        #[command(flatten)]
        train: TrainFlags,
        /// Which generated set to use (datasets/generated_n<N>.jsonl).
        #[arg(long)]
        n: Option<usize>,
        /// Explicit generated-query file instead of the run's.
        #[arg(long)]
        queries: Option<PathBuf>,
    },
    /// Rank docids for ad-hoc queries.
    Retrieve {
        /// Checkpoint name in the run (dsi, dsi-s, dsi-qg-n10, ...) or a path.
        #[arg(long)]
        model: String,
        /// Query text. Repeatable.
        #[arg(long = "query", required_unless_present = "queries")]
        query: Vec<String>,
        /// File with one query per line.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        beam_width: Option<usize>,
    },
    /// Evaluate a checkpoint on the dev queries (or a query file).
    Eval {
        #[arg(long)]
        model: String,
        /// Labelled queries (jsonl/tsv) instead of the corpus dev split.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        beam_width: Option<usize>,
    },
    /// Train and evaluate one generated-query index per n.
    SweepN {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        ns: Vec<usize>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// BM25 and docTquery baselines on the dev queries.
    BenchBm25 {
        #[arg(long)]
        k1: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        /// Generated set used for docTquery expansion, if present.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Summarize every report and trace in the run.
    Report,
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
