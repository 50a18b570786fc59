//! Graph-based label spreading over a symmetric k-nearest-neighbour graph.
//!
//! The affinity is made row-stochastic (`S = D^-1 W`) so each update
//! `F <- alpha S F + (1 - alpha) Y0` is a max-norm contraction with factor
//! `alpha`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::numeric::{nearest, sq_dist};
use super::SpreadingParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spreading {
    k: usize,
    n_classes: usize,
    points: Vec<Vec<f64>>,
    /// Row-normalized propagated label matrix, one row per training point.
    dist: Vec<Vec<f64>>,
    /// Max-norm change of `F` at each iteration.
    pub deltas: Vec<f64>,
}

impl Spreading {
    pub fn fit(p: &SpreadingParams, points: Vec<Vec<f64>>, labels: &[Option<usize>], n_classes: usize) -> Self {
        let n = points.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            for j in nearest(&points, &points[i], p.k, Some(i)) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        let y0: Vec<Vec<f64>> = labels
            .iter()
            .map(|l| {
                let mut row = vec![0.0; n_classes];
                if let Some(c) = l {
                    row[*c] = 1.0;
                }
                row
            })
            .collect();
        let mut f = y0.clone();
        let mut deltas = Vec::new();
        for _ in 0..p.max_iter {
            let mut next = vec![vec![0.0; n_classes]; n];
            let mut delta: f64 = 0.0;
            for i in 0..n {
                let deg = adj[i].len() as f64;
                for c in 0..n_classes {
                    let s: f64 = adj[i].iter().map(|&j| f[j][c]).sum::<f64>();
                    let s = if deg > 0.0 { s / deg } else { 0.0 };
                    next[i][c] = p.alpha * s + (1.0 - p.alpha) * y0[i][c];
                    delta = delta.max((next[i][c] - f[i][c]).abs());
                }
            }
            f = next;
            deltas.push(delta);
            if delta < p.tol {
                break;
            }
        }
        let dist = f.iter().map(|row| normalize(row)).collect();
        Self { k: p.k, n_classes, points, dist, deltas }
    }

    /// Propagated distribution of a training point matching `x` exactly,
    /// otherwise the mean over its `k` nearest training points.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let nn = nearest(&self.points, x, self.k, None);
        if sq_dist(&self.points[nn[0]], x) == 0.0 {
            return self.dist[nn[0]].clone();
        }
        let mut out = vec![0.0; self.n_classes];
        for &i in &nn {
            for (o, v) in out.iter_mut().zip(&self.dist[i]) {
                *o += v;
            }
        }
        normalize(&out)
    }
}

fn normalize(row: &[f64]) -> Vec<f64> {
    let z: f64 = row.iter().sum();
    if z > 0.0 {
        row.iter().map(|v| v / z).collect()
    } else {
        vec![1.0 / row.len() as f64; row.len()]
    }
}
