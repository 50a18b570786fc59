//! Weighted CART classification tree with Gini impurity.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::seed::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { dist: Vec<f64> },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Copy, Debug)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Non-constant features examined per split.
    pub max_features: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

struct Best {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Tree {
    /// Grows a tree on the rows in `idx`, each carrying `weights[row]`.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        weights: &[f64],
        idx: Vec<usize>,
        n_classes: usize,
        cfg: TreeConfig,
        rng: &mut Rng,
    ) -> Self {
        let d = x.first().map_or(0, |r| r.len());
        let mut nodes: Vec<Node> = vec![Node::Leaf { dist: Vec::new() }];
        let mut work = vec![(0usize, idx, 0usize)];
        let mut order: Vec<(f64, usize)> = Vec::new();
        let mut features: Vec<usize> = (0..d).collect();

        while let Some((slot, idx, depth)) = work.pop() {
            let mut counts = vec![0.0; n_classes];
            for &i in &idx {
                counts[y[i]] += weights[i];
            }
            let total: f64 = counts.iter().sum();
            let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
            let stop = pure || idx.len() < cfg.min_samples_split || cfg.max_depth.is_some_and(|m| depth >= m);
            let split = if stop {
                None
            } else {
                // Random feature order; stop after `max_features` usable ones.
                for i in 0..d {
                    let j = rng.gen_range(i..d);
                    features.swap(i, j);
                }
                let mut best: Option<Best> = None;
                let mut examined = 0;
                for &f in &features {
                    if examined >= cfg.max_features {
                        break;
                    }
                    order.clear();
                    order.extend(idx.iter().map(|&i| (x[i][f], i)));
                    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    if order[0].0 == order[order.len() - 1].0 {
                        continue;
                    }
                    examined += 1;
                    let mut left = vec![0.0; n_classes];
                    let mut wl = 0.0;
                    for p in 0..order.len() - 1 {
                        let (v, i) = order[p];
                        left[y[i]] += weights[i];
                        wl += weights[i];
                        let next = order[p + 1].0;
                        if v == next {
                            continue;
                        }
                        let wr = total - wl;
                        let mut score = 0.0;
                        for k in 0..n_classes {
                            let r = counts[k] - left[k];
                            score += left[k] * left[k] / wl + r * r / wr;
                        }
                        if best.as_ref().is_none_or(|b| score > b.score + 1e-12) {
                            let mut threshold = 0.5 * (v + next);
                            if threshold >= next {
                                threshold = v;
                            }
                            best = Some(Best { score, feature: f, threshold });
                        }
                    }
                }
                best
            };
            match split {
                None => {
                    let dist = counts.iter().map(|c| c / total).collect();
                    nodes[slot] = Node::Leaf { dist };
                }
                Some(b) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        idx.into_iter().partition(|&i| x[i][b.feature] <= b.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { dist: Vec::new() });
                    let right = nodes.len();
                    nodes.push(Node::Leaf { dist: Vec::new() });
                    nodes[slot] = Node::Split { feature: b.feature, threshold: b.threshold, left, right };
                    work.push((right, r, depth + 1));
                    work.push((left, l, depth + 1));
                }
            }
        }
        Self { nodes }
    }

    pub fn leaf(&self, x: &[f64]) -> &[f64] {
        let mut n = 0;
        loop {
            match &self.nodes[n] {
                Node::Leaf { dist } => return dist,
                Node::Split { feature, threshold, left, right } => {
                    n = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}
