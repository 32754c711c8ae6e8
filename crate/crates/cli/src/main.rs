//! `factadapt`: build counterfactual evaluation and augmentation sets, and
//! score factual adaptiveness.
//!
//! Exit status: 0 on success, 1 on a fatal error, 2 on a configuration or
//! usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use env_logger::Env;

use factadapt_core::model::{Group, Scenario};
use factadapt_core::pool::PoolFields;

#[derive(Debug, Parser)]
#[command(
    name = "factadapt",
    version,
    about = "Entity-level knowledge-conflict sets and factual-adaptiveness metrics"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Flags that override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML configuration file
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub scenario: Option<ScenarioArg>,

    #[arg(long, global = true, value_enum)]
    pub group: Option<GroupArg>,

    /// Validation threshold τ
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub threshold: Option<f64>,

    /// Augmentation ratio ρ
    #[arg(long, global = true)]
    pub ratio: Option<f64>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Scorer spec (JSON: a table, or {"kind": "hash" | "table" | "remote", ...})
    #[arg(long, global = true, value_name = "FILE")]
    pub scorer: Option<PathBuf>,

    /// NER config (JSON: {"patterns": {..}, "gazetteer": {..}})
    #[arg(long, global = true, value_name = "FILE")]
    pub ner: Option<PathBuf>,

    /// Likelihood cache file (defaults to $FACTADAPT_CACHE)
    #[arg(long, global = true, value_name = "FILE")]
    pub cache: Option<PathBuf>,

    /// Disable the likelihood cache even if $FACTADAPT_CACHE is set
    #[arg(long, global = true)]
    pub no_cache: bool,

    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    S1,
    #[value(name = "s1-masked", alias = "s1_masked")]
    S1Masked,
    S2,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::S1 => Scenario::S1,
            ScenarioArg::S1Masked => Scenario::S1Masked,
            ScenarioArg::S2 => Scenario::S2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupArg {
    Top,
    Mid,
    Bot,
}

impl From<GroupArg> for Group {
    fn from(g: GroupArg) -> Self {
        match g {
            GroupArg::Top => Group::Top,
            GroupArg::Mid => Group::Mid,
            GroupArg::Bot => Group::Bot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldsArg {
    Doc,
    Summary,
    Both,
}

impl From<FieldsArg> for PoolFields {
    fn from(f: FieldsArg) -> Self {
        match f {
            FieldsArg::Doc => PoolFields::Doc,
            FieldsArg::Summary => PoolFields::Summary,
            FieldsArg::Both => PoolFields::Both,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count same-category entity candidates in a training corpus
    BuildPool {
        #[arg(long, value_name = "JSONL")]
        corpus: PathBuf,
        #[arg(long, value_name = "JSONL")]
        output: PathBuf,
        #[arg(long, value_enum)]
        fields: Option<FieldsArg>,
        #[arg(long, value_name = "N")]
        min_frequency: Option<u64>,
    },
    /// Construct a counterfactual evaluation set
    BuildEvalSet {
        #[arg(long, value_name = "JSONL")]
        data: PathBuf,
        #[arg(long, value_name = "JSONL")]
        pool: PathBuf,
        #[arg(long, value_name = "JSONL")]
        output: PathBuf,
        /// Reason-code log (defaults to <output>.skipped.jsonl)
        #[arg(long, value_name = "JSONL")]
        skip_log: Option<PathBuf>,
        #[arg(long, value_name = "N")]
        max_per_sample: Option<usize>,
        /// Eval-set dataset label (defaults to the data file stem)
        #[arg(long)]
        dataset_name: Option<String>,
    },
    /// Find τ that extracts a target fraction of a validation set
    SearchThreshold {
        #[arg(long, value_name = "JSONL")]
        data: PathBuf,
        #[arg(long, value_name = "JSONL")]
        pool: PathBuf,
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        /// Also write the result as JSON
        #[arg(long, value_name = "JSON")]
        output: Option<PathBuf>,
    },
    /// Conditional-likelihood adaptiveness of a scorer on an evaluation set
    ScoreMcl {
        #[arg(long, value_name = "JSONL")]
        originals: PathBuf,
        #[arg(long, value_name = "JSONL")]
        counterfactuals: PathBuf,
        #[arg(long, value_name = "JSON")]
        output: PathBuf,
        /// Also write aggregate rows as CSV
        #[arg(long, value_name = "CSV")]
        csv: Option<PathBuf>,
    },
    /// Factual-consistency adaptiveness from precomputed generations
    ScoreMfc {
        #[arg(long, value_name = "JSONL")]
        originals: PathBuf,
        #[arg(long, value_name = "JSONL")]
        counterfactuals: PathBuf,
        /// Generated summaries: {"document": .., "summary": ..} per line
        #[arg(long, value_name = "JSONL")]
        generations: PathBuf,
        #[arg(long, default_value = "generator")]
        generator_id: String,
        #[arg(long, value_name = "JSON")]
        output: PathBuf,
        #[arg(long, value_name = "CSV")]
        csv: Option<PathBuf>,
    },
    /// Share of generated summaries that adopt the counterfactual entity
    ReplacementRate {
        #[arg(long, value_name = "JSONL")]
        counterfactuals: PathBuf,
        #[arg(long, value_name = "JSONL")]
        generations: PathBuf,
        #[arg(long, default_value = "generator")]
        generator_id: String,
        #[arg(long, value_name = "JSON")]
        output: PathBuf,
        /// Only a full original surface counts as leakage
        #[arg(long)]
        full_surface_only: bool,
    },
    /// Mean and standard deviation of metric reports across seeds
    Aggregate {
        #[arg(long, value_name = "JSON", num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, value_name = "JSON")]
        output: PathBuf,
        #[arg(long, value_name = "CSV")]
        csv: Option<PathBuf>,
    },
    /// Construct counterfactual training data at ratio ρ
    BuildAugmentation {
        #[arg(long, value_name = "JSONL")]
        train: PathBuf,
        #[arg(long, value_name = "JSONL")]
        pool: PathBuf,
        #[arg(long, value_name = "JSONL")]
        output: PathBuf,
        /// Also write contrastive records with synthesized negatives
        #[arg(long, value_name = "JSONL")]
        contrastive: Option<PathBuf>,
        #[arg(long, value_name = "N")]
        negatives: Option<usize>,
    },
    /// Carry contrastive positives/negatives over to counterfactual documents
    MapContrastive {
        #[arg(long, value_name = "JSONL")]
        records: PathBuf,
        #[arg(long, value_name = "JSONL")]
        counterfactuals: PathBuf,
        #[arg(long, value_name = "JSONL")]
        output: PathBuf,
        /// Per-text replacement failures
        #[arg(long, value_name = "JSONL")]
        errors: Option<PathBuf>,
    },
    /// Drop samples whose summaries name entities missing from the document
    Filter {
        #[arg(long, value_name = "JSONL")]
        data: PathBuf,
        #[arg(long, value_name = "JSONL")]
        output: PathBuf,
        #[arg(long, value_name = "JSONL")]
        dropped: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command, &cli.overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if commands::is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
