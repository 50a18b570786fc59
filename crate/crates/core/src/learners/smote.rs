//! Synthetic minority oversampling.

use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::numeric::nearest;
use super::LearnError;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoteOptions {
    /// Neighbours to interpolate towards; capped at class size minus one.
    pub k: usize,
    /// Upsample single-sample classes by duplication instead of failing.
    pub duplicate_singletons: bool,
}

impl Default for SmoteOptions {
    fn default() -> Self {
        Self { k: 5, duplicate_singletons: false }
    }
}

/// Upsamples every class to the majority count. Original rows come first and
/// unchanged; each synthetic row is `x_i + lambda (x_nn - x_i)` for a random
/// class member `x_i`, one of its `k` nearest same-class neighbours `x_nn`
/// and `lambda ~ U[0, 1)`. Absent classes stay absent.
pub fn smote(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    opts: &SmoteOptions,
    rng_seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<usize>), LearnError> {
    if x.len() != y.len() {
        return Err(LearnError::LengthMismatch { rows: x.len(), labels: y.len() });
    }
    if opts.k == 0 {
        return Err(LearnError::Hyper("smote: k must be >= 1".into()));
    }
    if let Some(&c) = y.iter().find(|&&c| c >= n_classes) {
        return Err(LearnError::LabelRange { label: c, n_classes });
    }
    let members: Vec<Vec<usize>> = (0..n_classes).map(|c| (0..y.len()).filter(|&i| y[i] == c).collect()).collect();
    let target = members.iter().map(Vec::len).max().unwrap_or(0);
    for (c, m) in members.iter().enumerate() {
        if m.len() == 1 && target > 1 && !opts.duplicate_singletons {
            return Err(LearnError::SmoteClassTooSmall { class: c, count: 1 });
        }
    }
    let mut out_x = x.to_vec();
    let mut out_y = y.to_vec();
    for (c, m) in members.iter().enumerate() {
        if m.is_empty() || m.len() == target {
            continue;
        }
        let mut rng = seed::rng(seed::derive(rng_seed, &[c as u64]));
        let pts: Vec<Vec<f64>> = m.iter().map(|&i| x[i].clone()).collect();
        let k = opts.k.min(pts.len() - 1);
        let neighbours: Vec<Vec<usize>> = (0..pts.len()).map(|i| nearest(&pts, &pts[i], k, Some(i))).collect();
        for _ in m.len()..target {
            let i = rng.gen_range(0..pts.len());
            if neighbours[i].is_empty() {
                out_x.push(pts[i].clone());
            } else {
                let j = neighbours[i][rng.gen_range(0..neighbours[i].len())];
                let lambda: f64 = rng.gen();
                out_x.push(pts[i].iter().zip(&pts[j]).map(|(a, b)| a + lambda * (b - a)).collect());
            }
            out_y.push(c);
        }
    }
    Ok((out_x, out_y))
}
