//! `backchannel` command-line pipeline: synthetic corpus generation,
//! annotation merging, negative sampling, featurization, self-trained
//! identification, sweeps, prediction evaluation and persona tools.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
//! error. Failures print one JSON record to stderr.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use backchannel_core::corpus::Task;
use backchannel_core::evaluation::Paradigm;
use backchannel_core::features::FeatureSet;
use backchannel_core::persona::Extraversion;

use crate::commands::Ctx;
use crate::config::{parse_task, PipelineConfig};
use crate::error::{CliError, Result};

#[derive(Parser, Debug)]
#[command(name = "backchannel", version, about = "Listener backchannel identification and prediction pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct Global {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Corpus directory.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Accept inputs produced under different configurations.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SetArg {
    Visual,
    Prosodic,
    Multimodal,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ParadigmArg {
    Human,
    Pseudo,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PersonaArg {
    Introvert,
    Extrovert,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus with planted backchannels.
    SynthGen {
        #[arg(long)]
        conversations: Option<usize>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        detectability: Option<f64>,
    },
    /// Cluster coder annotations into consensus instances; report agreement.
    Merge {
        /// Time-grid bin width for kappa, seconds.
        #[arg(long)]
        grid: Option<f64>,
    },
    /// Sample negative (no backchannel) intervals.
    SampleNeg {
        /// Keep every sampled negative instead of matching positive counts.
        #[arg(long)]
        no_balance: bool,
    },
    /// Cut windows and aggregate features for every instance.
    Featurize {
        #[arg(long, value_enum)]
        set: Option<SetArg>,
        /// Also store per-frame series for sequence classifiers.
        #[arg(long)]
        series: bool,
    },
    /// Self-train identification models and write pseudo-label ledgers.
    Identify {
        /// Repeatable; defaults to both identification tasks.
        #[arg(long)]
        task: Vec<String>,
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        classifier: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Seed-fraction sensitivity sweep with elbow selection.
    Sweep {
        #[arg(long)]
        task: Option<String>,
        /// Repeatable; replaces the configured list.
        #[arg(long)]
        classifier: Vec<String>,
        /// Comma-separated seed fractions.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long)]
        simulations: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Train a prediction model on human or pseudo labels.
    PredictTrain {
        #[arg(long)]
        task: String,
        #[arg(long, value_enum)]
        paradigm: ParadigmArg,
        #[arg(long)]
        classifier: Option<String>,
        #[arg(long, conflicts_with = "no_smote")]
        smote: bool,
        #[arg(long)]
        no_smote: bool,
    },
    /// Leave-one-group-out comparison of human and pseudo labels.
    Evaluate {
        #[arg(long)]
        classifier: Option<String>,
        #[arg(long)]
        groups: Option<usize>,
    },
    /// Multimodality ratio per subject, K-S test by extraversion and an
    /// optional Wilcoxon test on paired ratings.
    Stats {
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        ratings: Option<Vec<PathBuf>>,
        /// Extrovert iff score > threshold; median split otherwise.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Draw persona responses for a log of backchannel opportunities.
    PersonaSample {
        /// CSV with columns t_s,category.
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum, default_value = "introvert")]
        persona: PersonaArg,
        /// Profile TOML replacing the built-in tables.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
}

/// Effective configuration: file, then flags.
pub fn resolve_config(g: &Global, cmd: &Command) -> Result<PipelineConfig> {
    let mut cfg = match (&g.config, g.seed) {
        (Some(path), _) => PipelineConfig::load(path)?,
        (None, Some(seed)) => PipelineConfig::from_seed(seed),
        (None, None) => return Err(CliError::config("a seed is required: pass --seed or --config with `seed = N`")),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(p) = &g.corpus {
        cfg.paths.corpus = p.clone();
    }
    if let Some(p) = &g.out {
        cfg.paths.out = p.clone();
    }
    match cmd {
        Command::SynthGen { conversations, duration, detectability } => {
            if let Some(v) = conversations {
                cfg.synth.n_conversations = *v;
            }
            if let Some(v) = duration {
                cfg.synth.duration_s = *v;
            }
            if let Some(v) = detectability {
                cfg.synth.detectability = *v;
            }
        }
        Command::Merge { grid } => {
            if let Some(v) = grid {
                cfg.merge.kappa_grid_s = *v;
            }
        }
        Command::SampleNeg { no_balance } => {
            if *no_balance {
                cfg.features.balance = false;
            }
        }
        Command::Featurize { set, series } => {
            if let Some(s) = set {
                cfg.features.set = match s {
                    SetArg::Visual => FeatureSet::Visual,
                    SetArg::Prosodic => FeatureSet::Prosodic,
                    SetArg::Multimodal => FeatureSet::Multimodal,
                };
            }
            if *series {
                cfg.features.series = true;
            }
        }
        Command::Identify { x, classifier, threshold, .. } => {
            if let Some(v) = x {
                cfg.selftrain.x = *v;
            }
            if let Some(v) = classifier {
                cfg.selftrain.classifier = v.clone();
            }
            if let Some(v) = threshold {
                cfg.selftrain.threshold = *v;
            }
        }
        Command::Sweep { task, classifier, grid, simulations, folds } => {
            if let Some(v) = task {
                cfg.sweep.task = v.clone();
            }
            if !classifier.is_empty() {
                cfg.sweep.classifiers = classifier.clone();
            }
            if !grid.is_empty() {
                cfg.sweep.grid = grid.clone();
            }
            if let Some(v) = simulations {
                cfg.sweep.simulations = *v;
            }
            if let Some(v) = folds {
                cfg.sweep.folds = *v;
            }
        }
        Command::PredictTrain { classifier, .. } => {
            if let Some(v) = classifier {
                cfg.predict.classifier = v.clone();
            }
        }
        Command::Evaluate { classifier, groups } => {
            if let Some(v) = classifier {
                cfg.predict.classifier = v.clone();
            }
            if let Some(v) = groups {
                cfg.predict.groups = *v;
            }
        }
        Command::Stats { threshold, .. } => {
            if threshold.is_some() {
                cfg.persona.threshold = *threshold;
            }
        }
        Command::PersonaSample { .. } => {}
    }
    Ok(cfg)
}

/// Runs one command and returns its summary line(s).
pub fn run(cli: Cli) -> Result<String> {
    if cli.global.workers == 0 {
        return Err(CliError::config("--workers must be >= 1"));
    }
    let cfg = resolve_config(&cli.global, &cli.command)?;
    let ctx = Ctx::new(cfg, cli.global.workers, cli.global.force)?;
    match cli.command {
        Command::SynthGen { .. } => commands::synth_gen(&ctx),
        Command::Merge { .. } => commands::merge(&ctx),
        Command::SampleNeg { .. } => commands::sample_neg(&ctx),
        Command::Featurize { .. } => commands::featurize(&ctx),
        Command::Identify { task, .. } => {
            let tasks = if task.is_empty() {
                vec![Task::IdentifyOpportunity, Task::IdentifySignal]
            } else {
                task.iter().map(|t| parse_task(t)).collect::<Result<Vec<_>>>()?
            };
            commands::identify(&ctx, &tasks)
        }
        Command::Sweep { .. } => commands::sweep(&ctx),
        Command::PredictTrain { task, paradigm, smote, no_smote, .. } => {
            let paradigm = match paradigm {
                ParadigmArg::Human => Paradigm::Human,
                ParadigmArg::Pseudo => Paradigm::Pseudo,
            };
            let use_smote = if smote {
                Some(true)
            } else if no_smote {
                Some(false)
            } else {
                None
            };
            commands::predict_train(&ctx, parse_task(&task)?, paradigm, use_smote)
        }
        Command::Evaluate { .. } => commands::evaluate(&ctx),
        Command::Stats { ratings, .. } => {
            let pair = ratings.map(|v| (v[0].clone(), v[1].clone()));
            commands::stats(&ctx, pair)
        }
        Command::PersonaSample { log, persona, profile } => {
            let persona = match persona {
                PersonaArg::Introvert => Extraversion::Introvert,
                PersonaArg::Extrovert => Extraversion::Extrovert,
            };
            commands::persona_sample(&ctx, &log, persona, profile.as_deref())
        }
    }
}
