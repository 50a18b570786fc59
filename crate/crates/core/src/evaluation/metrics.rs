//! Classification metrics and confusion-matrix aggregation.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    pub weighted: ClassMetrics,
    pub positive_class: Option<usize>,
    pub accuracy: f64,
    /// Classes with no true instances; their precision and recall are 0.
    pub absent_classes: Vec<usize>,
}

impl MetricsReport {
    pub fn n_classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn positive(&self) -> Option<&ClassMetrics> {
        self.positive_class.map(|c| &self.per_class[c])
    }

    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        row_normalize(&counts_to_f64(&self.confusion))
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Precision, recall and F1 per class and support-weighted, plus accuracy.
/// Undefined ratios (zero denominators) are reported as 0.
pub fn compute_metrics(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
    positive_class: Option<usize>,
) -> Result<MetricsReport, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch { left: y_true.len(), right: y_pred.len() });
    }
    if y_true.is_empty() {
        return Err(EvalError::EmptySample);
    }
    for &c in y_true.iter().chain(y_pred).chain(positive_class.iter()) {
        if c >= n_classes {
            return Err(EvalError::LabelRange { label: c, n_classes });
        }
    }
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t][p] += 1;
    }
    let total = y_true.len() as u64;
    let mut per_class = Vec::with_capacity(n_classes);
    let mut absent_classes = Vec::new();
    for c in 0..n_classes {
        let tp = confusion[c][c];
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
        if support == 0 {
            absent_classes.push(c);
        }
        let (precision, recall) = if support == 0 { (0.0, 0.0) } else { (ratio(tp, predicted), ratio(tp, support)) };
        per_class.push(ClassMetrics { precision, recall, f1: f1(precision, recall), support });
    }
    let weigh =
        |f: fn(&ClassMetrics) -> f64| per_class.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / total as f64;
    let weighted = ClassMetrics {
        precision: weigh(|m| m.precision),
        recall: weigh(|m| m.recall),
        f1: weigh(|m| m.f1),
        support: total,
    };
    let trace: u64 = (0..n_classes).map(|c| confusion[c][c]).sum();
    Ok(MetricsReport { confusion, per_class, weighted, positive_class, accuracy: ratio(trace, total), absent_classes })
}

/// Each row divided by its sum; all-zero rows stay zero.
pub fn row_normalize(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    m.iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            row.iter().map(|&v| if s > 0.0 { v / s } else { 0.0 }).collect()
        })
        .collect()
}

pub(crate) fn counts_to_f64(m: &[Vec<u64>]) -> Vec<Vec<f64>> {
    m.iter().map(|row| row.iter().map(|&v| v as f64).collect()).collect()
}

/// Pessimistic aggregate of row-normalized fold matrices: the minimum of each
/// diagonal cell and the maximum of each off-diagonal cell across folds, with
/// rows renormalized to sum to 1.
pub fn worst_case_confusion(matrices: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>, EvalError> {
    let first = matrices.first().ok_or(EvalError::EmptySample)?;
    let k = first.len();
    for m in matrices {
        if m.len() != k || m.iter().any(|row| row.len() != k) {
            return Err(EvalError::Shape);
        }
    }
    let mut out = vec![vec![0.0; k]; k];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let vals = matrices.iter().map(|m| m[i][j]);
            *cell = if i == j { vals.fold(f64::INFINITY, f64::min) } else { vals.fold(f64::NEG_INFINITY, f64::max) };
        }
    }
    Ok(row_normalize(&out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_binary_case() {
        let r = compute_metrics(&[1, 1, 0], &[1, 0, 0], 2, Some(1)).unwrap();
        let p = r.positive().unwrap();
        assert_eq!((p.precision, p.recall), (1.0, 0.5));
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.confusion, vec![vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn perfect_and_all_wrong() {
        let r = compute_metrics(&[0, 1, 2, 1], &[0, 1, 2, 1], 3, None).unwrap();
        assert_eq!((r.accuracy, r.weighted.f1, r.weighted.precision, r.weighted.recall), (1.0, 1.0, 1.0, 1.0));
        let w = compute_metrics(&[0, 1, 0], &[1, 0, 1], 2, Some(1)).unwrap();
        assert_eq!(w.accuracy, 0.0);
    }

    #[test]
    fn absent_class_is_flagged() {
        let r = compute_metrics(&[0, 0], &[0, 1], 3, None).unwrap();
        assert_eq!(r.absent_classes, vec![1, 2]);
        assert_eq!(r.per_class[1].precision, 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(compute_metrics(&[0], &[0, 1], 2, None).is_err());
    }

    #[test]
    fn worst_case_hand_example() {
        let a = vec![vec![0.8, 0.2], vec![0.2, 0.8]];
        let b = vec![vec![0.6, 0.4], vec![0.4, 0.6]];
        let w = worst_case_confusion(&[a.clone(), b]).unwrap();
        assert!((w[0][0] - 0.6).abs() < 1e-12 && (w[0][1] - 0.4).abs() < 1e-12);
        assert_eq!(worst_case_confusion(core::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(worst_case_confusion(&[a.clone(), a.clone()]).unwrap(), a);
        assert!(worst_case_confusion(&[a, vec![vec![1.0]]]).is_err());
    }
}
