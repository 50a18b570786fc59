//! Pipeline configuration: one TOML file, overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use backchannel_core::corpus::{CorpusOptions, Task};
use backchannel_core::evaluation::{default_grid, DEFAULT_ELBOW_TOL};
use backchannel_core::features::{FeatureSet, CANONICAL_RATE_HZ};
use backchannel_core::learners::{ClassifierKind, ClassifierSpec, Hyperparameters};
use backchannel_core::persona::SplitRule;
use backchannel_core::selftrain::{DEFAULT_MAX_ITERATIONS, DEFAULT_THRESHOLD};
use backchannel_core::synth::SynthConfig;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub merge: MergeSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub selftrain: SelfTrainSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub predict: PredictSection,
    #[serde(default)]
    pub persona: PersonaSection,
    /// Hyperparameter overrides keyed by classifier kind, e.g.
    /// `[classifiers.random_forest] n_trees = 50`.
    #[serde(default)]
    pub classifiers: BTreeMap<String, toml::Table>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Corpus directory: annotations, voice activity, features, subjects.
    pub corpus: PathBuf,
    /// Output directory for derived artifacts.
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { corpus: "corpus".into(), out: "out".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_conversations: usize,
    pub duration_s: f64,
    pub rate_per_min: f64,
    pub miss_prob: f64,
    pub jitter_s: f64,
    pub confusion_prob: f64,
    pub extrovert_fraction: f64,
    pub detectability: f64,
    pub category_mix: [f64; 3],
    pub eyebrow_prob: f64,
    pub turn_min_s: f64,
    pub turn_max_s: f64,
    pub n_coders: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            n_conversations: d.n_conversations,
            duration_s: d.duration_s,
            rate_per_min: d.rate_per_min,
            miss_prob: d.miss_prob,
            jitter_s: d.jitter_s,
            confusion_prob: d.confusion_prob,
            extrovert_fraction: d.extrovert_fraction,
            detectability: d.detectability,
            category_mix: d.category_mix,
            eyebrow_prob: d.eyebrow_prob,
            turn_min_s: d.turn_min_s,
            turn_max_s: d.turn_max_s,
            n_coders: d.n_coders,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MergeSection {
    /// Bin width of the time-grid agreement table.
    pub kappa_grid_s: f64,
}

impl Default for MergeSection {
    fn default() -> Self {
        Self { kappa_grid_s: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    pub set: FeatureSet,
    /// Cache per-frame series for sequence classifiers.
    pub series: bool,
    /// Subsample negatives to each listener's positive count.
    pub balance: bool,
    pub frame_rate_hz: f64,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self { set: FeatureSet::Multimodal, series: false, balance: true, frame_rate_hz: CANONICAL_RATE_HZ }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelfTrainSection {
    pub classifier: String,
    /// Seed fraction of human labels.
    pub x: f64,
    pub threshold: f64,
    pub max_iterations: usize,
}

impl Default for SelfTrainSection {
    fn default() -> Self {
        Self {
            classifier: "random_forest".into(),
            x: 0.25,
            threshold: DEFAULT_THRESHOLD,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub task: String,
    pub classifiers: Vec<String>,
    pub grid: Vec<f64>,
    pub simulations: usize,
    pub folds: usize,
    pub elbow_tol: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            task: Task::IdentifyOpportunity.as_str().into(),
            classifiers: ["knn", "random_forest", "adaboost", "mlp", "label_spreading"].map(String::from).to_vec(),
            grid: default_grid(),
            simulations: 10,
            folds: 5,
            elbow_tol: DEFAULT_ELBOW_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictSection {
    pub classifier: String,
    /// Subject groups for leave-one-group-out evaluation.
    pub groups: usize,
    pub smote_opportunity: bool,
    pub smote_signal: bool,
    pub smote_k: usize,
    /// Duplicate singleton classes instead of failing SMOTE.
    pub smote_duplicate_singletons: bool,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            classifier: "adaboost".into(),
            groups: 6,
            smote_opportunity: false,
            smote_signal: true,
            smote_k: 5,
            smote_duplicate_singletons: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PersonaSection {
    /// Extrovert iff score > threshold; median split when unset.
    pub threshold: Option<f64>,
    pub introvert_profile: Option<PathBuf>,
    pub extrovert_profile: Option<PathBuf>,
    /// Utterance token frequencies replacing the profiles' tables.
    pub tokens: Option<BTreeMap<String, f64>>,
}

pub fn parse_kind(s: &str) -> Result<ClassifierKind> {
    s.parse::<ClassifierKind>().map_err(CliError::config)
}

pub fn parse_task(s: &str) -> Result<Task> {
    Task::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Task::ALL.iter().map(|t| t.as_str()).collect();
        CliError::config(format!("unknown task `{s}` (expected one of {})", names.join(", ")))
    })
}

fn merge_json(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl PipelineConfig {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            seed,
            paths: Paths::default(),
            synth: SynthSection::default(),
            merge: MergeSection::default(),
            features: FeaturesSection::default(),
            selftrain: SelfTrainSection::default(),
            sweep: SweepSection::default(),
            predict: PredictSection::default(),
            persona: PersonaSection::default(),
            classifiers: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// Hex digest of everything that shapes results. Paths are excluded so
    /// the same experiment hashes equally wherever it runs.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let serde_json::Value::Object(m) = &mut v {
            m.remove("paths");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.synth_config().validate()?;
        if !(self.merge.kappa_grid_s > 0.0 && self.merge.kappa_grid_s.is_finite()) {
            return Err(CliError::config("merge.kappa_grid_s must be positive"));
        }
        if !(self.features.frame_rate_hz > 0.0 && self.features.frame_rate_hz.is_finite()) {
            return Err(CliError::config("features.frame_rate_hz must be positive"));
        }
        if !(self.selftrain.x > 0.0 && self.selftrain.x <= 1.0) {
            return Err(CliError::config("selftrain.x must lie in (0, 1]"));
        }
        if !(self.selftrain.threshold > 0.0 && self.selftrain.threshold <= 1.0) {
            return Err(CliError::config("selftrain.threshold must lie in (0, 1]"));
        }
        self.spec(&self.selftrain.classifier, 0)?;
        self.spec(&self.predict.classifier, 0)?;
        parse_task(&self.sweep.task)?;
        if self.sweep.classifiers.is_empty() || self.sweep.grid.is_empty() {
            return Err(CliError::config("sweep needs at least one classifier and one grid point"));
        }
        for c in &self.sweep.classifiers {
            self.spec(c, 0)?;
        }
        if self.sweep.grid.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
            return Err(CliError::config("sweep.grid values must lie in (0, 1]"));
        }
        if self.sweep.simulations == 0 || self.sweep.folds < 2 {
            return Err(CliError::config("sweep needs simulations >= 1 and folds >= 2"));
        }
        if self.predict.groups < 2 {
            return Err(CliError::config("predict.groups must be >= 2"));
        }
        if self.predict.smote_k == 0 {
            return Err(CliError::config("predict.smote_k must be >= 1"));
        }
        for name in self.classifiers.keys() {
            parse_kind(name)?;
        }
        if let Some(t) = &self.persona.tokens {
            if t.is_empty() || t.values().any(|p| !(p.is_finite() && *p >= 0.0)) || t.values().sum::<f64>() <= 0.0 {
                return Err(CliError::config("persona.tokens must hold non-negative frequencies"));
            }
        }
        Ok(())
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            n_conversations: s.n_conversations,
            duration_s: s.duration_s,
            rate_per_min: s.rate_per_min,
            miss_prob: s.miss_prob,
            jitter_s: s.jitter_s,
            confusion_prob: s.confusion_prob,
            extrovert_fraction: s.extrovert_fraction,
            detectability: s.detectability,
            category_mix: s.category_mix,
            eyebrow_prob: s.eyebrow_prob,
            turn_min_s: s.turn_min_s,
            turn_max_s: s.turn_max_s,
            n_coders: s.n_coders,
            frame_rate_hz: self.features.frame_rate_hz,
            seed: self.seed,
        }
    }

    pub fn corpus_options(&self) -> CorpusOptions {
        CorpusOptions {
            set: self.features.set,
            series: self.features.series,
            balance: self.features.balance,
            seed: self.seed,
        }
    }

    /// Spec of classifier `name` with the configured hyperparameter overrides.
    pub fn spec(&self, name: &str, seed: u64) -> Result<ClassifierSpec> {
        let kind = parse_kind(name)?;
        let mut hyper = Hyperparameters::default_for(kind);
        if let Some(table) = self.classifiers.get(kind.as_str()) {
            let mut v = serde_json::to_value(&hyper).expect("hyperparameters serialize");
            let patch = serde_json::to_value(table).map_err(CliError::config)?;
            if let serde_json::Value::Object(m) = &mut v {
                let inner = m.values_mut().next().expect("externally tagged");
                merge_json(inner, patch);
            }
            hyper = serde_json::from_value(v)
                .map_err(|e| CliError::config(format!("classifiers.{}: {e}", kind.as_str())))?;
        }
        ClassifierSpec::new(hyper, seed).map_err(CliError::config)
    }

    pub fn split_rule(&self) -> SplitRule {
        self.persona.threshold.map_or(SplitRule::Median, SplitRule::Threshold)
    }
}
