//! Self-training: grow a small labeled seed set with confident predictions
//! on unlabeled rows, refitting from scratch each round.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{self, ClassifierSpec, FittedModel, Inputs, LearnError};
use crate::seed;

pub const DEFAULT_THRESHOLD: f64 = 0.90;
pub const DEFAULT_MAX_ITERATIONS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelfTrainError {
    #[error("invalid self-training config: {0}")]
    Config(String),
    #[error("labeled set must contain at least two classes")]
    SingleClass,
    #[error("seed fraction {x} keeps {target} of {n} rows, fewer than the {classes} classes present")]
    SeedTooSmall { x: f64, target: usize, n: usize, classes: usize },
    #[error(transparent)]
    Learn(#[from] LearnError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainConfig {
    pub base: ClassifierSpec,
    /// Minimum predicted-class probability for a pseudo-label.
    pub threshold: f64,
    pub max_iterations: usize,
    /// Share of the training rows used as the labeled seed.
    pub seed_fraction: f64,
}

impl SelfTrainConfig {
    pub fn new(base: ClassifierSpec, seed_fraction: f64) -> Self {
        Self { base, threshold: DEFAULT_THRESHOLD, max_iterations: DEFAULT_MAX_ITERATIONS, seed_fraction }
    }

    pub fn validate(&self) -> Result<(), SelfTrainError> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(SelfTrainError::Config(alloc::format!("threshold {} outside (0, 1]", self.threshold)));
        }
        check_fraction(self.seed_fraction)?;
        self.base.hyper.validate()?;
        Ok(())
    }
}

fn check_fraction(x: f64) -> Result<(), SelfTrainError> {
    if x > 0.0 && x <= 1.0 {
        Ok(())
    } else {
        Err(SelfTrainError::Config(alloc::format!("seed fraction {x} outside (0, 1]")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Seed,
    /// Added in selection round `k` (1-based).
    Pseudo(usize),
    FallbackFinalPass,
}

impl core::fmt::Display for Provenance {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Provenance::Seed => f.write_str("seed"),
            Provenance::Pseudo(k) => write!(f, "pseudo_iteration_{k}"),
            Provenance::FallbackFinalPass => f.write_str("fallback_final_pass"),
        }
    }
}

impl core::str::FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seed" => Ok(Provenance::Seed),
            "fallback_final_pass" => Ok(Provenance::FallbackFinalPass),
            _ => s
                .strip_prefix("pseudo_iteration_")
                .and_then(|k| k.parse().ok())
                .map(Provenance::Pseudo)
                .ok_or_else(|| alloc::format!("unknown provenance `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub row: usize,
    pub label: usize,
    pub provenance: Provenance,
    /// Predicted-class probability at assignment; 1 for seed rows.
    pub confidence: f64,
}

/// Final label of every input row, sorted by row.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelLedger {
    entries: Vec<LedgerEntry>,
}

impl PseudoLabelLedger {
    pub fn from_entries(mut entries: Vec<LedgerEntry>) -> Self {
        entries.sort_by_key(|e| e.row);
        Self { entries }
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, row: usize) -> Option<&LedgerEntry> {
        self.entries.binary_search_by_key(&row, |e| e.row).ok().map(|i| &self.entries[i])
    }

    /// `(seed, pseudo, fallback)` entry counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        self.entries.iter().fold((0, 0, 0), |(s, p, f), e| match e.provenance {
            Provenance::Seed => (s + 1, p, f),
            Provenance::Pseudo(_) => (s, p + 1, f),
            Provenance::FallbackFinalPass => (s, p, f + 1),
        })
    }

    /// Share of non-seed entries labeled in the final pass.
    pub fn fallback_fraction(&self) -> f64 {
        let (_, p, f) = self.counts();
        if p + f == 0 {
            0.0
        } else {
            f as f64 / (p + f) as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfTrainOutcome {
    pub model: FittedModel,
    pub ledger: PseudoLabelLedger,
    /// Selection rounds that added at least one row.
    pub rounds: usize,
}

/// Seed for the fit of round `k`: the base seed itself for the first fit.
pub fn round_seed(base: u64, k: usize) -> u64 {
    if k == 0 {
        base
    } else {
        seed::derive(base, &[k as u64])
    }
}

/// Runs the self-training loop. `labeled` pairs rows of `inputs` with their
/// labels; `unlabeled` lists the remaining rows. Rows that never clear the
/// threshold are labeled by the final model in a closing pass.
pub fn self_train(
    cfg: &SelfTrainConfig,
    inputs: Inputs<'_>,
    labeled: &[(usize, usize)],
    unlabeled: &[usize],
    n_classes: usize,
) -> Result<SelfTrainOutcome, SelfTrainError> {
    cfg.validate()?;
    let mut classes: Vec<usize> = labeled.iter().map(|&(_, c)| c).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(SelfTrainError::SingleClass);
    }
    let transductive = cfg.base.kind().is_transductive();
    let mut entries: Vec<LedgerEntry> = labeled
        .iter()
        .map(|&(row, label)| LedgerEntry { row, label, provenance: Provenance::Seed, confidence: 1.0 })
        .collect();
    let mut train_rows: Vec<usize> = labeled.iter().map(|&(r, _)| r).collect();
    let mut train_labels: Vec<Option<usize>> = labeled.iter().map(|&(_, c)| Some(c)).collect();
    let mut remaining: Vec<usize> = unlabeled.to_vec();
    let mut round = 0usize;
    let model = loop {
        let spec = cfg.base.with_seed(round_seed(cfg.base.seed, round));
        let model = if transductive && !remaining.is_empty() {
            let rows: Vec<usize> = train_rows.iter().chain(&remaining).copied().collect();
            let mut labels = train_labels.clone();
            labels.resize(rows.len(), None);
            learners::fit(&spec, inputs, &rows, &labels, n_classes)?
        } else {
            learners::fit(&spec, inputs, &train_rows, &train_labels, n_classes)?
        };
        if remaining.is_empty() || round == cfg.max_iterations {
            break model;
        }
        let preds = learners::predict_rows(&model, inputs, &remaining)?;
        let mut keep = Vec::with_capacity(remaining.len());
        let mut added = 0;
        for (&row, p) in remaining.iter().zip(&preds) {
            if p.confidence >= cfg.threshold {
                train_rows.push(row);
                train_labels.push(Some(p.class));
                entries.push(LedgerEntry {
                    row,
                    label: p.class,
                    provenance: Provenance::Pseudo(round + 1),
                    confidence: p.confidence,
                });
                added += 1;
            } else {
                keep.push(row);
            }
        }
        if added == 0 {
            break model;
        }
        remaining = keep;
        round += 1;
    };
    for (&row, p) in remaining.iter().zip(&learners::predict_rows(&model, inputs, &remaining)?) {
        entries.push(LedgerEntry {
            row,
            label: p.class,
            provenance: Provenance::FallbackFinalPass,
            confidence: p.confidence,
        });
    }
    Ok(SelfTrainOutcome { model, ledger: PseudoLabelLedger::from_entries(entries), rounds: round })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedSplit {
    /// `(row, label)` pairs, sorted by row.
    pub labeled: Vec<(usize, usize)>,
    /// Rows whose labels are withheld, sorted.
    pub unlabeled: Vec<usize>,
}

/// Stratified random split of `rows` into a labeled seed of `round(x N)`
/// rows and an unlabeled remainder. Per-class quotas use largest remainders
/// and every class present gets at least one seed row.
pub fn split_seed(rows: &[usize], labels: &[usize], x: f64, rng_seed: u64) -> Result<SeedSplit, SelfTrainError> {
    check_fraction(x)?;
    if rows.len() != labels.len() {
        return Err(LearnError::LengthMismatch { rows: rows.len(), labels: labels.len() }.into());
    }
    let n = rows.len();
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    let present: Vec<usize> = (0..n_classes).filter(|&c| !members[c].is_empty()).collect();
    let target = (libm::round(x * n as f64) as usize).min(n);
    if target < present.len() {
        return Err(SelfTrainError::SeedTooSmall { x, target, n, classes: present.len() });
    }
    let mut quota = vec![0usize; n_classes];
    let mut rema: Vec<(u64, usize)> = Vec::new();
    for &c in &present {
        // exact integer arithmetic: target * size / n
        let num = (target * members[c].len()) as u64;
        quota[c] = (num / n as u64) as usize;
        rema.push((num % n as u64, c));
    }
    let assigned: usize = quota.iter().sum();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, c) in rema.iter().take(target - assigned) {
        quota[c] += 1;
    }
    for &c in &present {
        if quota[c] == 0 {
            let donor = present
                .iter()
                .copied()
                .filter(|&d| quota[d] > 1)
                .max_by(|&a, &b| quota[a].cmp(&quota[b]).then(b.cmp(&a)))
                .expect("target >= classes leaves a donor");
            quota[donor] -= 1;
            quota[c] = 1;
        }
    }
    let mut rng = seed::rng(rng_seed);
    let mut labeled = Vec::with_capacity(target);
    let mut unlabeled = Vec::with_capacity(n - target);
    for &c in &present {
        let mut m = members[c].clone();
        m.shuffle(&mut rng);
        labeled.extend(m[..quota[c]].iter().map(|&i| (rows[i], c)));
        unlabeled.extend(m[quota[c]..].iter().map(|&i| rows[i]));
    }
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    Ok(SeedSplit { labeled, unlabeled })
}
