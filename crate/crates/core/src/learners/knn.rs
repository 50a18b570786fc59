use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::numeric::nearest;
use super::KnnParams;

/// Euclidean k-nearest-neighbour vote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl KnnModel {
    pub fn fit(p: &KnnParams, points: Vec<Vec<f64>>, labels: Vec<usize>) -> Self {
        Self { k: p.k, points, labels }
    }

    /// Vote fractions among the `k` nearest training points.
    pub fn predict(&self, x: &[f64], n_classes: usize) -> Vec<f64> {
        let nn = nearest(&self.points, x, self.k, None);
        let mut votes = vec![0.0; n_classes];
        for &i in &nn {
            votes[self.labels[i]] += 1.0;
        }
        let n = nn.len() as f64;
        votes.iter_mut().for_each(|v| *v /= n);
        votes
    }
}
