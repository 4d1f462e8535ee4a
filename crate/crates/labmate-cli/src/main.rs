//! `labmate` command-line front end.
//!
//! Subcommands: `gen` (seeded datasets), `label` (rule-oracle labels),
//! `decide` (single-scene judgment, optionally interactive), `episode`
//! (policy simulation), `eval` (k-fold evaluation) and `report`
//! (render/delta an evaluation report).
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use labmate_core::perception::Scenario;
use labmate_core::reasoning::{BackendKind, PromptVariant};

#[derive(Debug, Parser)]
#[command(
    name = "labmate",
    version,
    about = "Human-aware decision pipeline for a mobile lab robot",
    propagate_version = true
)]
struct Cli {
    /// Path to a TOML config file (also via the LABMATE_CONFIG env var).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Emit machine-readable JSON on stdout instead of human tables.
    #[arg(long, global = true)]
    json: bool,

    /// Reject records with unknown keys instead of warning.
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioArg {
    S1,
    S2,
    S3,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Scenario {
        match s {
            ScenarioArg::S1 => Scenario::S1,
            ScenarioArg::S2 => Scenario::S2,
            ScenarioArg::S3 => Scenario::S3,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Proactive,
    Passive,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> BackendKind {
        match b {
            BackendArg::Mock => BackendKind::Mock,
            BackendArg::Http => BackendKind::Http,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Vision,
    #[value(name = "vision+depth", alias = "vision-depth")]
    VisionPlusDepth,
    Both,
}

impl VariantArg {
    fn to_variants(self) -> Vec<PromptVariant> {
        match self {
            VariantArg::Vision => vec![PromptVariant::VisionOnly],
            VariantArg::VisionPlusDepth => vec![PromptVariant::VisionPlusDepth],
            VariantArg::Both => {
                vec![PromptVariant::VisionOnly, PromptVariant::VisionPlusDepth]
            }
        }
    }
}

/// Backend flags shared by `decide`, `episode` and `eval`.
#[derive(Debug, Clone, Args)]
struct BackendArgs {
    /// Judgment backend.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,

    /// Mock flip probability per label.
    #[arg(long)]
    epsilon: Option<f64>,

    /// Mock seed (independent of the dataset seed).
    #[arg(long = "backend-seed")]
    backend_seed: Option<u64>,

    /// Chat-completions endpoint URL (http backend).
    #[arg(long)]
    endpoint: Option<String>,

    /// Model name sent to the endpoint.
    #[arg(long)]
    model: Option<String>,

    /// Per-request timeout in milliseconds.
    #[arg(long)]
    timeout_ms: Option<u64>,

    /// Transport retries before giving up.
    #[arg(long)]
    max_retries: Option<u32>,

    /// Accept bare yes/no answers when the structured grammar fails.
    #[arg(long)]
    lenient_parse: bool,
}

impl BackendArgs {
    fn apply(&self, base: &mut labmate_core::reasoning::BackendConfig) {
        if let Some(kind) = self.backend {
            base.kind = kind.into();
        }
        if let Some(e) = self.epsilon {
            base.epsilon = e;
        }
        if let Some(s) = self.backend_seed {
            base.seed = s;
        }
        if let Some(u) = &self.endpoint {
            base.endpoint_url = u.clone();
        }
        if let Some(m) = &self.model {
            base.model_name = m.clone();
        }
        if let Some(t) = self.timeout_ms {
            base.timeout_ms = t;
        }
        if let Some(r) = self.max_retries {
            base.max_retries = r;
        }
        if self.lenient_parse {
            base.lenient_parse = true;
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded JSONL dataset with oracle truth labels.
    Gen {
        /// Interaction scenario to generate.
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        /// Number of records.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Dataset seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; `-` writes to stdout.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Class mixture over obstruct_interact,neither,obstruct_only.
        #[arg(long, value_parser = config::parse_class_mix)]
        class_mix: Option<[f64; 3]>,
        /// Position jitter std-dev in meters.
        #[arg(long)]
        pos_sigma: Option<f64>,
        /// Depth noise std-dev in meters.
        #[arg(long)]
        depth_sigma: Option<f64>,
        /// Detection dropout probability.
        #[arg(long)]
        dropout: Option<f64>,
    },

    /// Apply the rule oracle to a dataset and write truth labels.
    Label {
        /// Input JSONL dataset.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Output JSONL path; `-` writes to stdout.
        #[arg(long, value_name = "PATH")]
        output: PathBuf,
    },

    /// Judge a single scene and print the decision.
    Decide {
        /// Scene record (JSON object, same schema as dataset lines).
        #[arg(long, value_name = "PATH")]
        scene: PathBuf,
        /// Prompt variant used for the backend query.
        #[arg(long, value_enum, default_value = "vision+depth")]
        variant: VariantArg,
        /// Print the robot's message and read one reply from stdin.
        #[arg(long)]
        interactive: bool,
        #[command(flatten)]
        backend: BackendArgs,
    },

    /// Run seeded episodes and account idle time per policy.
    Episode {
        /// Interaction scenario (required unless --spec provides one).
        #[arg(long, value_enum)]
        scenario: Option<ScenarioArg>,
        /// Episode spec JSON file with `scenario` and `episode` sections.
        #[arg(long, value_name = "PATH")]
        spec: Option<PathBuf>,
        /// Episode seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of matched episodes.
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Policy to run; `both` compares matched pairs.
        #[arg(long, value_enum, default_value = "both")]
        policy: PolicyArg,
        /// Seconds the busy human stays at the equipment.
        #[arg(long)]
        occupancy: Option<u64>,
        /// Class mixture over obstruct_interact,neither,obstruct_only.
        #[arg(long, value_parser = config::parse_class_mix)]
        class_mix: Option<[f64; 3]>,
        /// Scripted replies as a JSON array of strings.
        #[arg(long, value_name = "JSON")]
        replies: Option<String>,
        /// Write the summary/trace JSON here instead of stdout.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        backend: BackendArgs,
    },

    /// Evaluate a dataset end-to-end with k-fold cross-validation.
    Eval {
        /// Input JSONL dataset with truth labels.
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
        /// Prompt variants to evaluate.
        #[arg(long, value_enum, default_value = "both")]
        variant: VariantArg,
        /// Number of folds.
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Split seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the report JSON here.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        backend: BackendArgs,
    },

    /// Render an evaluation report or a cell table's deltas.
    Report {
        /// Evaluation report JSON produced by `eval`.
        #[arg(long, value_name = "PATH", conflicts_with = "cells")]
        input: Option<PathBuf>,
        /// Accuracy-cell table JSON; prints its delta table.
        #[arg(long, value_name = "PATH")]
        cells: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
