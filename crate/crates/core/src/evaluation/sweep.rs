//! Seed-fraction sensitivity sweep over self-trained classifiers.

use alloc::string::String;
use alloc::vec::Vec;

use super::{compute_metrics, kfold, training_rows, EvalError, TaskData};
use crate::learners::{self, ClassifierSpec, Inputs};
use crate::seed;
use crate::selftrain::{self_train, split_seed, SelfTrainConfig, DEFAULT_MAX_ITERATIONS, DEFAULT_THRESHOLD};

pub const DEFAULT_ELBOW_TOL: f64 = 0.02;
const TAG_FOLDS: u64 = 1;
const TAG_SPLIT: u64 = 2;

/// `{0.05, 0.10, ..., 1.00}`.
pub fn default_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 20.0).collect()
}

/// Smallest `x` whose accuracy is within `tol` of the best accuracy.
pub fn elbow_select(curve: &[(f64, f64)], tol: f64) -> Option<f64> {
    let best = curve.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    curve.iter().filter(|p| p.1 >= best - tol).map(|p| p.0).min_by(f64::total_cmp)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub specs: Vec<ClassifierSpec>,
    pub grid: Vec<f64>,
    pub simulations: usize,
    pub folds: usize,
    pub threshold: f64,
    pub max_iterations: usize,
    pub master_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunKey {
    pub spec: usize,
    pub x: usize,
    pub simulation: usize,
    pub fold: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub key: RunKey,
    pub accuracy: f64,
    pub precision_w: f64,
    pub recall_w: f64,
    pub f1_w: f64,
    /// Share of pseudo-labeled training rows whose label matches the truth.
    pub ledger_agreement: Option<f64>,
    pub fallback_fraction: f64,
    pub rounds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub spec: usize,
    pub classifier: String,
    pub x: f64,
    pub runs: usize,
    pub mean_accuracy: f64,
    /// Population standard deviation over runs.
    pub std_accuracy: f64,
    pub mean_precision_w: f64,
    pub mean_recall_w: f64,
    pub mean_f1_w: f64,
    pub mean_ledger_agreement: Option<f64>,
    pub mean_fallback_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    /// Ordered by spec, then grid position.
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// `(x, mean accuracy)` points of one classifier.
    pub fn curve(&self, spec: usize) -> Vec<(f64, f64)> {
        self.cells.iter().filter(|c| c.spec == spec).map(|c| (c.x, c.mean_accuracy)).collect()
    }

    /// Classifier with the highest mean accuracy over its whole curve.
    pub fn best_spec(&self) -> Option<usize> {
        let mut specs: Vec<usize> = self.cells.iter().map(|c| c.spec).collect();
        specs.dedup();
        let score = |s: usize| {
            let c = self.curve(s);
            c.iter().map(|p| p.1).sum::<f64>() / c.len() as f64
        };
        specs.into_iter().fold(None, |best: Option<usize>, s| match best {
            Some(b) if score(b) >= score(s) => Some(b),
            _ => Some(s),
        })
    }

    pub fn cell(&self, spec: usize, x: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.spec == spec && c.x == x)
    }
}

fn x_label(x: f64) -> u64 {
    libm::round(x * 1e6) as u64
}

impl SweepPlan {
    pub fn new(specs: Vec<ClassifierSpec>, grid: Vec<f64>, simulations: usize, master_seed: u64) -> Self {
        Self {
            specs,
            grid,
            simulations,
            folds: 5,
            threshold: DEFAULT_THRESHOLD,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.specs.is_empty() || self.grid.is_empty() || self.simulations == 0 || self.folds == 0 {
            return Err(EvalError::Config("sweep needs specs, grid points, simulations and folds".into()));
        }
        if let Some(x) = self.grid.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
            return Err(EvalError::Config(alloc::format!("grid value {x} outside (0, 1]")));
        }
        Ok(())
    }

    /// Every run, in canonical order.
    pub fn keys(&self) -> Vec<RunKey> {
        let mut out = Vec::new();
        for spec in 0..self.specs.len() {
            for x in 0..self.grid.len() {
                for simulation in 0..self.simulations {
                    for fold in 0..self.folds {
                        out.push(RunKey { spec, x, simulation, fold });
                    }
                }
            }
        }
        out
    }

    /// Folds of one simulation; shared by every classifier and seed fraction.
    pub fn folds_for(&self, n: usize, simulation: usize) -> Result<Vec<Vec<usize>>, EvalError> {
        kfold(n, self.folds, seed::derive(self.master_seed, &[TAG_FOLDS, simulation as u64]))
    }

    /// Model seed of a run. It does not depend on the seed fraction, so the
    /// `x = 1` run fits exactly the supervised baseline model.
    pub fn model_seed(&self, key: RunKey) -> u64 {
        seed::derive(self.specs[key.spec].seed, &[key.simulation as u64, key.fold as u64])
    }

    pub fn split_seed(&self, key: RunKey) -> u64 {
        seed::derive(self.master_seed, &[TAG_SPLIT, key.simulation as u64, key.fold as u64, x_label(self.grid[key.x])])
    }

    /// Self-trains on the training folds with seed fraction `grid[key.x]` and
    /// scores the held-out fold.
    pub fn run(&self, data: &TaskData, key: RunKey) -> Result<RunOutcome, EvalError> {
        let folds = self.folds_for(data.len(), key.simulation)?;
        let train = training_rows(&folds, key.fold);
        let test = &folds[key.fold];
        let scaled = data.scaled(&train);
        let inputs = self.inputs(data, &scaled, key)?;
        let train_labels: Vec<usize> = train.iter().map(|&r| data.labels[r]).collect();
        let split = split_seed(&train, &train_labels, self.grid[key.x], self.split_seed(key))?;
        let cfg = SelfTrainConfig {
            base: self.specs[key.spec].with_seed(self.model_seed(key)),
            threshold: self.threshold,
            max_iterations: self.max_iterations,
            seed_fraction: self.grid[key.x],
        };
        let out = self_train(&cfg, inputs, &split.labeled, &split.unlabeled, data.n_classes)?;
        let agreement = (!split.unlabeled.is_empty()).then(|| {
            let hits = split
                .unlabeled
                .iter()
                .filter(|&&r| out.ledger.get(r).is_some_and(|e| e.label == data.labels[r]))
                .count();
            hits as f64 / split.unlabeled.len() as f64
        });
        self.score(data, inputs, &out.model, test, key, agreement, out.ledger.fallback_fraction(), out.rounds)
    }

    /// Plain supervised fit on all training rows of the run's fold.
    pub fn supervised_baseline(&self, data: &TaskData, key: RunKey) -> Result<RunOutcome, EvalError> {
        let folds = self.folds_for(data.len(), key.simulation)?;
        let train = training_rows(&folds, key.fold);
        let scaled = data.scaled(&train);
        let inputs = self.inputs(data, &scaled, key)?;
        let labels: Vec<usize> = train.iter().map(|&r| data.labels[r]).collect();
        let spec = self.specs[key.spec].with_seed(self.model_seed(key));
        let model = learners::fit_supervised(&spec, inputs, &train, &labels, data.n_classes)?;
        self.score(data, inputs, &model, &folds[key.fold], key, None, 0.0, 0)
    }

    fn inputs<'a>(&self, data: &'a TaskData, scaled: &'a [Vec<f64>], key: RunKey) -> Result<Inputs<'a>, EvalError> {
        if self.specs[key.spec].kind().uses_series() {
            let s = data
                .series
                .as_deref()
                .ok_or_else(|| EvalError::Config("series classifier requested but task has no series".into()))?;
            Ok(Inputs::Series(s))
        } else {
            Ok(Inputs::Vectors(scaled))
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn score(
        &self,
        data: &TaskData,
        inputs: Inputs<'_>,
        model: &learners::FittedModel,
        test: &[usize],
        key: RunKey,
        ledger_agreement: Option<f64>,
        fallback_fraction: f64,
        rounds: usize,
    ) -> Result<RunOutcome, EvalError> {
        let preds: Vec<usize> = learners::predict_rows(model, inputs, test)?.into_iter().map(|p| p.class).collect();
        let truth: Vec<usize> = test.iter().map(|&r| data.labels[r]).collect();
        let m = compute_metrics(&truth, &preds, data.n_classes, data.positive_class)?;
        Ok(RunOutcome {
            key,
            accuracy: m.accuracy,
            precision_w: m.weighted.precision,
            recall_w: m.weighted.recall,
            f1_w: m.weighted.f1,
            ledger_agreement,
            fallback_fraction,
            rounds,
        })
    }

    /// Averages run outcomes into cells. Outcomes may arrive in any order.
    pub fn assemble(&self, mut outcomes: Vec<RunOutcome>) -> SweepResult {
        outcomes.sort_by_key(|o| o.key);
        let mut cells = Vec::new();
        for spec in 0..self.specs.len() {
            for (xi, &x) in self.grid.iter().enumerate() {
                let runs: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.key.spec == spec && o.key.x == xi).collect();
                if runs.is_empty() {
                    continue;
                }
                let n = runs.len() as f64;
                let mean = |f: fn(&RunOutcome) -> f64| runs.iter().map(|o| f(o)).sum::<f64>() / n;
                let mean_accuracy = mean(|o| o.accuracy);
                let var =
                    runs.iter().map(|o| (o.accuracy - mean_accuracy) * (o.accuracy - mean_accuracy)).sum::<f64>() / n;
                let agreements: Vec<f64> = runs.iter().filter_map(|o| o.ledger_agreement).collect();
                cells.push(SweepCell {
                    spec,
                    classifier: learners::describe(&self.specs[spec]),
                    x,
                    runs: runs.len(),
                    mean_accuracy,
                    std_accuracy: libm::sqrt(var),
                    mean_precision_w: mean(|o| o.precision_w),
                    mean_recall_w: mean(|o| o.recall_w),
                    mean_f1_w: mean(|o| o.f1_w),
                    mean_ledger_agreement: (!agreements.is_empty())
                        .then(|| agreements.iter().sum::<f64>() / agreements.len() as f64),
                    mean_fallback_fraction: mean(|o| o.fallback_fraction),
                });
            }
        }
        SweepResult { cells }
    }
}

/// Runs every cell of the plan sequentially.
pub fn sensitivity_sweep(plan: &SweepPlan, data: &TaskData) -> Result<SweepResult, EvalError> {
    plan.validate()?;
    data.validate()?;
    let outcomes = plan.keys().into_iter().map(|k| plan.run(data, k)).collect::<Result<Vec<_>, _>>()?;
    Ok(plan.assemble(outcomes))
}
