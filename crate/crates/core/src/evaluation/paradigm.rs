//! Human labels versus pseudo-labels as training targets for the same
//! prediction model, both scored on true labels of held-out subject groups.

use alloc::vec::Vec;

use super::{compute_metrics, group_kfold, training_rows, worst_case_confusion};
use super::{EvalError, GroupAssignment, MetricsReport};
use crate::learners::{self, smote, ClassifierSpec, Inputs, SmoteOptions};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Paradigm {
    /// Trained on human (consensus) labels.
    Human,
    /// Trained on labels from the identification ledger.
    Pseudo,
}

impl Paradigm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Paradigm::Human => "human",
            Paradigm::Pseudo => "pseudo",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParadigmConfig {
    pub spec: ClassifierSpec,
    /// Oversample the training portion of each fold.
    pub smote: Option<SmoteOptions>,
    pub assignment: GroupAssignment,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct ParadigmData<'a, S> {
    pub vectors: &'a [Vec<f64>],
    pub true_labels: &'a [usize],
    pub pseudo_labels: &'a [usize],
    pub subjects: &'a [S],
    pub n_classes: usize,
    pub occupancy: &'a [bool],
    pub positive_class: Option<usize>,
}

/// Held-out predictions of one fold under one paradigm.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldPredictions {
    pub fold: usize,
    pub paradigm: Paradigm,
    pub rows: Vec<usize>,
    pub predicted: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRatios {
    pub accuracy: Option<f64>,
    pub precision_w: Option<f64>,
    pub recall_w: Option<f64>,
    pub f1_w: Option<f64>,
    pub positive_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParadigmReport {
    /// Metrics over the pooled held-out predictions.
    pub human: MetricsReport,
    pub pseudo: MetricsReport,
    pub human_worst_case: Vec<Vec<f64>>,
    pub pseudo_worst_case: Vec<Vec<f64>>,
    /// Pseudo over human; `None` where the human value is 0.
    pub ratios: MetricRatios,
}

fn ratio(b: f64, a: f64) -> Option<f64> {
    (a != 0.0).then(|| b / a)
}

impl ParadigmConfig {
    pub fn folds<S: AsRef<str>>(&self, data: &ParadigmData<'_, S>) -> Result<Vec<Vec<usize>>, EvalError> {
        group_kfold(data.subjects, &self.assignment)
    }

    /// Trains on every other fold under `paradigm` and predicts fold `fold`.
    pub fn run_fold<S: AsRef<str>>(
        &self,
        data: &ParadigmData<'_, S>,
        folds: &[Vec<usize>],
        fold: usize,
        paradigm: Paradigm,
    ) -> Result<FoldPredictions, EvalError> {
        let test = folds[fold].clone();
        let train = training_rows(folds, fold);
        let labels = match paradigm {
            Paradigm::Human => data.true_labels,
            Paradigm::Pseudo => data.pseudo_labels,
        };
        let rows: Vec<Vec<f64>> = train.iter().map(|&r| data.vectors[r].clone()).collect();
        let scaler = crate::features::Scaler::fit(&rows, data.occupancy);
        let mut train_x: Vec<Vec<f64>> = rows.iter().map(|v| scaler.apply(v)).collect();
        let mut train_y: Vec<usize> = train.iter().map(|&r| labels[r]).collect();
        if let Some(opts) = &self.smote {
            let s = seed::derive(self.seed, &[fold as u64]);
            (train_x, train_y) = smote(&train_x, &train_y, data.n_classes, opts, s)?;
        }
        let spec = self.spec.with_seed(seed::derive(self.spec.seed, &[fold as u64]));
        let idx: Vec<usize> = (0..train_x.len()).collect();
        let model = learners::fit_supervised(&spec, Inputs::Vectors(&train_x), &idx, &train_y, data.n_classes)?;
        let predicted = test
            .iter()
            .map(|&r| {
                let v = scaler.apply(&data.vectors[r]);
                learners::predict_proba(&model, learners::Sample::Vector(&v)).map(|p| p.class)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FoldPredictions { fold, paradigm, rows: test, predicted })
    }

    /// Pools fold predictions into the paired report.
    pub fn combine<S: AsRef<str>>(
        &self,
        data: &ParadigmData<'_, S>,
        mut results: Vec<FoldPredictions>,
    ) -> Result<ParadigmReport, EvalError> {
        results.sort_by_key(|r| (r.paradigm, r.fold));
        let mut reports = Vec::new();
        let mut worst = Vec::new();
        for paradigm in [Paradigm::Human, Paradigm::Pseudo] {
            let mut truth = Vec::new();
            let mut pred = Vec::new();
            let mut per_fold = Vec::new();
            for r in results.iter().filter(|r| r.paradigm == paradigm) {
                let t: Vec<usize> = r.rows.iter().map(|&i| data.true_labels[i]).collect();
                let m = compute_metrics(&t, &r.predicted, data.n_classes, data.positive_class)?;
                per_fold.push(m.row_normalized());
                truth.extend(t);
                pred.extend(r.predicted.iter().copied());
            }
            reports.push(compute_metrics(&truth, &pred, data.n_classes, data.positive_class)?);
            worst.push(worst_case_confusion(&per_fold)?);
        }
        let pseudo = reports.pop().expect("two paradigms");
        let human = reports.pop().expect("two paradigms");
        let ratios = MetricRatios {
            accuracy: ratio(pseudo.accuracy, human.accuracy),
            precision_w: ratio(pseudo.weighted.precision, human.weighted.precision),
            recall_w: ratio(pseudo.weighted.recall, human.weighted.recall),
            f1_w: ratio(pseudo.weighted.f1, human.weighted.f1),
            positive_f1: match (pseudo.positive(), human.positive()) {
                (Some(b), Some(a)) => ratio(b.f1, a.f1),
                _ => None,
            },
        };
        let pseudo_worst_case = worst.pop().expect("two paradigms");
        let human_worst_case = worst.pop().expect("two paradigms");
        Ok(ParadigmReport { human, pseudo, human_worst_case, pseudo_worst_case, ratios })
    }
}

/// Leave-one-group-out comparison of the two training paradigms.
pub fn compare_paradigms<S: AsRef<str>>(
    cfg: &ParadigmConfig,
    data: &ParadigmData<'_, S>,
) -> Result<ParadigmReport, EvalError> {
    let n = data.vectors.len();
    for len in [data.true_labels.len(), data.pseudo_labels.len(), data.subjects.len()] {
        if len != n {
            return Err(EvalError::LengthMismatch { left: n, right: len });
        }
    }
    let folds = cfg.folds(data)?;
    let mut results = Vec::new();
    for paradigm in [Paradigm::Human, Paradigm::Pseudo] {
        for (i, f) in folds.iter().enumerate() {
            if !f.is_empty() {
                results.push(cfg.run_fold(data, &folds, i, paradigm)?);
            }
        }
    }
    cfg.combine(data, results)
}
