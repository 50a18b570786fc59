//! Classifier zoo behind one probabilistic interface, plus SMOTE.
//!
//! Every learner is single-threaded and a pure function of its inputs and
//! the seed in its [`ClassifierSpec`]. `resnet_ts` consumes variable-length
//! [`Series`]; all other kinds consume fixed-length aggregate vectors.

mod adaboost;
mod forest;
mod knn;
pub mod mlp;
mod numeric;
pub mod resnet;
mod smote;
mod spreading;
mod tree;

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use numeric::{argmax, softmax};
pub use smote::{smote, SmoteOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("invalid hyperparameters: {0}")]
    Hyper(String),
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{kind} expects {expected} inputs")]
    Modality { kind: ClassifierKind, expected: &'static str },
    #[error("training data holds fewer than two classes")]
    SingleClass,
    #[error("label {label} out of range for {n_classes} classes")]
    LabelRange { label: usize, n_classes: usize },
    #[error("{0} requires every training row to be labeled")]
    Unlabeled(ClassifierKind),
    #[error("empty training set")]
    Empty,
    #[error("class {class} has {count} sample(s); SMOTE needs at least 2 (enable duplication fallback)")]
    SmoteClassTooSmall { class: usize, count: usize },
    #[error("unknown classifier kind `{0}`")]
    UnknownKind(String),
}

/// Variable-length multichannel series, time-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    channels: usize,
    data: Vec<f64>,
}

impl Series {
    pub fn new(channels: usize, data: Vec<f64>) -> Self {
        assert!(channels > 0 && data.len().is_multiple_of(channels), "series shape");
        Self { channels, data }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn step(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }
}

/// A borrowed design matrix of either modality.
#[derive(Clone, Copy, Debug)]
pub enum Inputs<'a> {
    Vectors(&'a [Vec<f64>]),
    Series(&'a [Series]),
}

#[derive(Clone, Copy, Debug)]
pub enum Sample<'a> {
    Vector(&'a [f64]),
    Series(&'a Series),
}

impl<'a> Inputs<'a> {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Vectors(v) => v.len(),
            Inputs::Series(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Sample<'a> {
        match *self {
            Inputs::Vectors(v) => Sample::Vector(&v[i]),
            Inputs::Series(s) => Sample::Series(&s[i]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    Knn,
    RandomForest,
    AdaBoost,
    Mlp,
    ResNetTs,
    LabelSpreading,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 6] = [
        ClassifierKind::Knn,
        ClassifierKind::RandomForest,
        ClassifierKind::AdaBoost,
        ClassifierKind::Mlp,
        ClassifierKind::ResNetTs,
        ClassifierKind::LabelSpreading,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassifierKind::Knn => "knn",
            ClassifierKind::RandomForest => "random_forest",
            ClassifierKind::AdaBoost => "adaboost",
            ClassifierKind::Mlp => "mlp",
            ClassifierKind::ResNetTs => "resnet_ts",
            ClassifierKind::LabelSpreading => "label_spreading",
        }
    }

    pub fn uses_series(&self) -> bool {
        *self == ClassifierKind::ResNetTs
    }

    /// Accepts unlabeled rows during fitting.
    pub fn is_transductive(&self) -> bool {
        *self == ClassifierKind::LabelSpreading
    }

    fn index(&self) -> u64 {
        ClassifierKind::ALL.iter().position(|k| k == self).unwrap() as u64
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassifierKind::ALL.iter().copied().find(|k| k.as_str() == s).ok_or_else(|| LearnError::UnknownKind(s.into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub rounds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResNetParams {
    pub blocks: usize,
    pub filters: usize,
    pub kernel_sizes: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadingParams {
    pub alpha: f64,
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
}

/// Typed hyperparameters; the variant fixes the classifier kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Hyperparameters {
    Knn(KnnParams),
    RandomForest(ForestParams),
    AdaBoost(AdaBoostParams),
    Mlp(MlpParams),
    ResNetTs(ResNetParams),
    LabelSpreading(SpreadingParams),
}

impl Hyperparameters {
    pub fn default_for(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::Knn => Hyperparameters::Knn(KnnParams { k: 5 }),
            ClassifierKind::RandomForest => Hyperparameters::RandomForest(ForestParams {
                n_trees: 100,
                max_depth: None,
                min_samples_split: 2,
                bootstrap: true,
            }),
            ClassifierKind::AdaBoost => Hyperparameters::AdaBoost(AdaBoostParams { rounds: 100 }),
            ClassifierKind::Mlp => Hyperparameters::Mlp(MlpParams {
                hidden: vec![64, 32],
                learning_rate: 0.01,
                momentum: 0.9,
                epochs: 200,
                batch_size: 32,
            }),
            ClassifierKind::ResNetTs => Hyperparameters::ResNetTs(ResNetParams {
                blocks: 3,
                filters: 64,
                kernel_sizes: vec![8, 5, 3],
                epochs: 100,
                batch_size: 16,
                learning_rate: 1e-3,
            }),
            ClassifierKind::LabelSpreading => {
                Hyperparameters::LabelSpreading(SpreadingParams { alpha: 0.2, k: 7, max_iter: 1000, tol: 1e-3 })
            }
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            Hyperparameters::Knn(_) => ClassifierKind::Knn,
            Hyperparameters::RandomForest(_) => ClassifierKind::RandomForest,
            Hyperparameters::AdaBoost(_) => ClassifierKind::AdaBoost,
            Hyperparameters::Mlp(_) => ClassifierKind::Mlp,
            Hyperparameters::ResNetTs(_) => ClassifierKind::ResNetTs,
            Hyperparameters::LabelSpreading(_) => ClassifierKind::LabelSpreading,
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Hyper(m.into()));
        match self {
            Hyperparameters::Knn(p) if p.k == 0 => bad("knn: k must be >= 1"),
            Hyperparameters::RandomForest(p) if p.n_trees == 0 => bad("random_forest: trees must be >= 1"),
            Hyperparameters::RandomForest(p) if p.max_depth == Some(0) => bad("random_forest: max_depth must be >= 1"),
            Hyperparameters::AdaBoost(p) if p.rounds == 0 => bad("adaboost: rounds must be >= 1"),
            Hyperparameters::Mlp(p) => {
                if p.hidden.contains(&0) {
                    bad("mlp: layer sizes must be >= 1")
                } else if p.epochs == 0 || p.batch_size == 0 {
                    bad("mlp: epochs and batch size must be >= 1")
                } else if !(p.learning_rate > 0.0) || !(0.0..1.0).contains(&p.momentum) {
                    bad("mlp: need learning_rate > 0 and momentum in [0, 1)")
                } else {
                    Ok(())
                }
            }
            Hyperparameters::ResNetTs(p) => {
                if p.blocks == 0 || p.filters == 0 {
                    bad("resnet_ts: blocks and filters must be >= 1")
                } else if p.kernel_sizes.is_empty() || p.kernel_sizes.contains(&0) {
                    bad("resnet_ts: kernel sizes must be >= 1")
                } else if p.epochs == 0 || p.batch_size == 0 || !(p.learning_rate > 0.0) {
                    bad("resnet_ts: epochs, batch size and learning rate must be positive")
                } else {
                    Ok(())
                }
            }
            Hyperparameters::LabelSpreading(p) => {
                if !(p.alpha > 0.0 && p.alpha < 1.0) {
                    bad("label_spreading: need 0 < alpha < 1")
                } else if p.k == 0 || p.max_iter == 0 {
                    bad("label_spreading: k and max_iter must be >= 1")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub hyper: Hyperparameters,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(hyper: Hyperparameters, seed: u64) -> Result<Self, LearnError> {
        hyper.validate()?;
        Ok(Self { hyper, seed })
    }

    pub fn default_for(kind: ClassifierKind, seed: u64) -> Self {
        Self { hyper: Hyperparameters::default_for(kind), seed }
    }

    pub fn kind(&self) -> ClassifierKind {
        self.hyper.kind()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { hyper: self.hyper.clone(), seed }
    }

    /// Stable label for seed derivation and reports.
    pub fn seed_label(&self) -> u64 {
        self.kind().index()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Knn(knn::KnnModel),
    RandomForest(forest::Forest),
    AdaBoost(adaboost::AdaBoostModel),
    Mlp(mlp::Mlp),
    ResNetTs(resnet::ResNet),
    LabelSpreading(spreading::Spreading),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub train_size: usize,
    /// Epochs, boosting rounds or propagation iterations actually run.
    pub iterations: usize,
}

/// A trained classifier. Immutable; safe to share across threads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ClassifierSpec,
    pub n_classes: usize,
    /// Vector length or series channel count.
    pub input_dim: usize,
    pub params: ModelParams,
    pub meta: TrainingMeta,
}

/// Class probabilities with their argmax (lowest index on ties).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbPrediction {
    pub probs: Vec<f64>,
    pub class: usize,
    pub confidence: f64,
}

impl ProbPrediction {
    pub fn from_scores(mut probs: Vec<f64>) -> Self {
        let total: f64 = probs.iter().sum();
        if total > 0.0 && total.is_finite() {
            probs.iter_mut().for_each(|p| *p /= total);
        } else {
            let u = 1.0 / probs.len() as f64;
            probs.iter_mut().for_each(|p| *p = u);
        }
        let class = argmax(&probs);
        let confidence = probs[class];
        Self { probs, class, confidence }
    }
}

fn sample_dim(s: Sample<'_>) -> usize {
    match s {
        Sample::Vector(v) => v.len(),
        Sample::Series(s) => s.channels(),
    }
}

fn check_modality(kind: ClassifierKind, inputs: Inputs<'_>) -> Result<(), LearnError> {
    match (kind.uses_series(), inputs) {
        (true, Inputs::Series(_)) | (false, Inputs::Vectors(_)) => Ok(()),
        (true, _) => Err(LearnError::Modality { kind, expected: "series" }),
        (false, _) => Err(LearnError::Modality { kind, expected: "vector" }),
    }
}

/// Fits a classifier on `rows` of `inputs`. `labels[i]` belongs to
/// `rows[i]`; `None` marks an unlabeled row, which only transductive kinds
/// accept.
pub fn fit(
    spec: &ClassifierSpec,
    inputs: Inputs<'_>,
    rows: &[usize],
    labels: &[Option<usize>],
    n_classes: usize,
) -> Result<FittedModel, LearnError> {
    spec.hyper.validate()?;
    let kind = spec.kind();
    check_modality(kind, inputs)?;
    if rows.len() != labels.len() {
        return Err(LearnError::LengthMismatch { rows: rows.len(), labels: labels.len() });
    }
    if rows.is_empty() {
        return Err(LearnError::Empty);
    }
    let dim = sample_dim(inputs.get(rows[0]));
    for &r in rows {
        let d = sample_dim(inputs.get(r));
        if d != dim {
            return Err(LearnError::Dimension { expected: dim, got: d });
        }
        if let Sample::Series(s) = inputs.get(r) {
            if s.is_empty() {
                return Err(LearnError::Dimension { expected: 1, got: 0 });
            }
        }
    }
    let mut present = BTreeSet::new();
    for l in labels {
        match l {
            Some(c) if *c >= n_classes => return Err(LearnError::LabelRange { label: *c, n_classes }),
            Some(c) => {
                present.insert(*c);
            }
            None if !kind.is_transductive() => return Err(LearnError::Unlabeled(kind)),
            None => {}
        }
    }
    if present.len() < 2 {
        return Err(LearnError::SingleClass);
    }

    let (params, iterations) = match &spec.hyper {
        Hyperparameters::Knn(p) => {
            let y: Vec<usize> = labels.iter().map(|l| l.unwrap()).collect();
            (ModelParams::Knn(knn::KnnModel::fit(p, vectors(inputs, rows), y)), 0)
        }
        Hyperparameters::RandomForest(p) => {
            let y: Vec<usize> = labels.iter().map(|l| l.unwrap()).collect();
            let forest = forest::Forest::fit(p, &vectors(inputs, rows), &y, n_classes, spec.seed);
            (ModelParams::RandomForest(forest), p.n_trees)
        }
        Hyperparameters::AdaBoost(p) => {
            let y: Vec<usize> = labels.iter().map(|l| l.unwrap()).collect();
            let m = adaboost::AdaBoostModel::fit(p, &vectors(inputs, rows), &y, n_classes);
            let rounds = m.rounds();
            (ModelParams::AdaBoost(m), rounds)
        }
        Hyperparameters::Mlp(p) => {
            let y: Vec<usize> = labels.iter().map(|l| l.unwrap()).collect();
            let m = mlp::Mlp::fit(p, &vectors(inputs, rows), &y, n_classes, spec.seed);
            (ModelParams::Mlp(m), p.epochs)
        }
        Hyperparameters::ResNetTs(p) => {
            let y: Vec<usize> = labels.iter().map(|l| l.unwrap()).collect();
            let Inputs::Series(all) = inputs else { unreachable!() };
            let xs: Vec<&Series> = rows.iter().map(|&r| &all[r]).collect();
            let m = resnet::ResNet::fit(p, &xs, &y, n_classes, spec.seed);
            (ModelParams::ResNetTs(m), p.epochs)
        }
        Hyperparameters::LabelSpreading(p) => {
            let m = spreading::Spreading::fit(p, vectors(inputs, rows), labels, n_classes);
            let it = m.deltas.len();
            (ModelParams::LabelSpreading(m), it)
        }
    };
    Ok(FittedModel {
        spec: spec.clone(),
        n_classes,
        input_dim: dim,
        params,
        meta: TrainingMeta { seed: spec.seed, train_size: rows.len(), iterations },
    })
}

/// [`fit`] with every row labeled.
pub fn fit_supervised(
    spec: &ClassifierSpec,
    inputs: Inputs<'_>,
    rows: &[usize],
    labels: &[usize],
    n_classes: usize,
) -> Result<FittedModel, LearnError> {
    let l: Vec<Option<usize>> = labels.iter().map(|&c| Some(c)).collect();
    fit(spec, inputs, rows, &l, n_classes)
}

fn vectors(inputs: Inputs<'_>, rows: &[usize]) -> Vec<Vec<f64>> {
    let Inputs::Vectors(v) = inputs else { unreachable!("checked modality") };
    rows.iter().map(|&r| v[r].clone()).collect()
}

pub fn predict_proba(model: &FittedModel, x: Sample<'_>) -> Result<ProbPrediction, LearnError> {
    let kind = model.spec.kind();
    let d = sample_dim(x);
    if d != model.input_dim {
        return Err(LearnError::Dimension { expected: model.input_dim, got: d });
    }
    let scores = match (&model.params, x) {
        (ModelParams::Knn(m), Sample::Vector(v)) => m.predict(v, model.n_classes),
        (ModelParams::RandomForest(m), Sample::Vector(v)) => m.predict(v),
        (ModelParams::AdaBoost(m), Sample::Vector(v)) => m.predict(v),
        (ModelParams::Mlp(m), Sample::Vector(v)) => m.predict(v),
        (ModelParams::LabelSpreading(m), Sample::Vector(v)) => m.predict(v),
        (ModelParams::ResNetTs(m), Sample::Series(s)) => {
            if s.is_empty() {
                return Err(LearnError::Dimension { expected: 1, got: 0 });
            }
            m.predict(s)
        }
        (_, Sample::Series(_)) => return Err(LearnError::Modality { kind, expected: "vector" }),
        (_, Sample::Vector(_)) => return Err(LearnError::Modality { kind, expected: "series" }),
    };
    Ok(ProbPrediction::from_scores(scores))
}

pub fn predict_rows(
    model: &FittedModel,
    inputs: Inputs<'_>,
    rows: &[usize],
) -> Result<Vec<ProbPrediction>, LearnError> {
    rows.iter().map(|&r| predict_proba(model, inputs.get(r))).collect()
}

/// Human-readable one-liner for reports.
pub fn describe(spec: &ClassifierSpec) -> String {
    match &spec.hyper {
        Hyperparameters::Knn(p) => format!("knn(k={})", p.k),
        Hyperparameters::RandomForest(p) => format!(
            "random_forest(trees={}, depth={})",
            p.n_trees,
            p.max_depth.map_or("none".into(), |d| format!("{d}"))
        ),
        Hyperparameters::AdaBoost(p) => format!("adaboost(rounds={})", p.rounds),
        Hyperparameters::Mlp(p) => format!("mlp(hidden={:?}, epochs={})", p.hidden, p.epochs),
        Hyperparameters::ResNetTs(p) => {
            format!("resnet_ts(blocks={}, filters={}, epochs={})", p.blocks, p.filters, p.epochs)
        }
        Hyperparameters::LabelSpreading(p) => format!("label_spreading(alpha={}, k={})", p.alpha, p.k),
    }
}
