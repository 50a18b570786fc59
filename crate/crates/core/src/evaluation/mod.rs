//! Splitting schemes, metrics, sensitivity sweeps, the human-vs-pseudo label
//! comparison and the statistical tests.

mod metrics;
mod paradigm;
mod split;
mod stats;
mod sweep;

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub use metrics::{compute_metrics, row_normalize, worst_case_confusion, ClassMetrics, MetricsReport};
pub use paradigm::{
    compare_paradigms, FoldPredictions, MetricRatios, Paradigm, ParadigmConfig, ParadigmData, ParadigmReport,
};
pub use split::{group_kfold, kfold, GroupAssignment};
pub use stats::{
    doubled_ranks, kolmogorov_sf, ks_two_sample, wilcoxon_signed_rank, KsResult, WilcoxonResult, WILCOXON_EXACT_MAX_N,
};
pub use sweep::{
    default_grid, elbow_select, sensitivity_sweep, RunKey, RunOutcome, SweepCell, SweepPlan, SweepResult,
    DEFAULT_ELBOW_TOL,
};

use crate::features::Scaler;
use crate::learners::{LearnError, Series};
use crate::selftrain::SelfTrainError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("label {label} out of range for {n_classes} classes")]
    LabelRange { label: usize, n_classes: usize },
    #[error("matrices differ in shape")]
    Shape,
    #[error("cannot make {k} folds from {n} rows")]
    TooFewForFolds { n: usize, k: usize },
    #[error("need at least two non-empty groups, got {0}")]
    TooFewGroups(usize),
    #[error("subject {subject} assigned to group {group} of {n_groups}")]
    GroupRange { subject: String, group: usize, n_groups: usize },
    #[error("subject {0} has no group")]
    UnassignedSubject(String),
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error(transparent)]
    SelfTrain(#[from] SelfTrainError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

/// One labeled classification task: aggregate vectors for every row, optional
/// series for sequence models, and ground-truth labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub vectors: Vec<Vec<f64>>,
    pub series: Option<Vec<Series>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Aggregate dimensions that are occupancy fractions and bypass scaling.
    pub occupancy: Vec<bool>,
    pub positive_class: Option<usize>,
}

impl TaskData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.vectors.len() != self.labels.len() {
            return Err(EvalError::LengthMismatch { left: self.vectors.len(), right: self.labels.len() });
        }
        if let Some(s) = &self.series {
            if s.len() != self.labels.len() {
                return Err(EvalError::LengthMismatch { left: s.len(), right: self.labels.len() });
            }
        }
        if let Some(&c) = self.labels.iter().find(|&&c| c >= self.n_classes) {
            return Err(EvalError::LabelRange { label: c, n_classes: self.n_classes });
        }
        Ok(())
    }

    /// Vectors standardized with statistics of the `train` rows.
    pub fn scaled(&self, train: &[usize]) -> Vec<Vec<f64>> {
        let rows: Vec<Vec<f64>> = train.iter().map(|&r| self.vectors[r].clone()).collect();
        let scaler = Scaler::fit(&rows, &self.occupancy);
        self.vectors.iter().map(|v| scaler.apply(v)).collect()
    }
}

/// Rows of every fold except `held_out`, sorted.
pub fn training_rows(folds: &[Vec<usize>], held_out: usize) -> Vec<usize> {
    let mut rows: Vec<usize> =
        folds.iter().enumerate().filter(|(i, _)| *i != held_out).flat_map(|(_, f)| f.iter().copied()).collect();
    rows.sort_unstable();
    rows
}
