use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeConfig};
use super::ForestParams;
use crate::seed;

/// Bagged Gini trees with sqrt-feature subsampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    n_classes: usize,
    trees: Vec<Tree>,
}

impl Forest {
    pub fn fit(p: &ForestParams, x: &[Vec<f64>], y: &[usize], n_classes: usize, seed: u64) -> Self {
        let n = x.len();
        let d = x[0].len();
        let cfg = TreeConfig {
            max_depth: p.max_depth,
            min_samples_split: p.min_samples_split.max(2),
            max_features: (libm::sqrt(d as f64) as usize).max(1),
        };
        let trees = (0..p.n_trees)
            .map(|t| {
                let mut rng = seed::rng(seed::derive(seed, &[t as u64]));
                let mut weights = vec![0.0; n];
                if p.bootstrap {
                    for _ in 0..n {
                        weights[rng.gen_range(0..n)] += 1.0;
                    }
                } else {
                    weights.iter_mut().for_each(|w| *w = 1.0);
                }
                let idx: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
                Tree::fit(x, y, &weights, idx, n_classes, cfg, &mut rng)
            })
            .collect();
        Self { n_classes, trees }
    }

    /// Mean of the per-tree leaf class distributions.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (acc, v) in p.iter_mut().zip(t.leaf(x)) {
                *acc += v;
            }
        }
        let n = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        p
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{
        fit_supervised, predict_proba, ClassifierSpec, Hyperparameters, Inputs, ModelParams, Sample,
    };
    use rand::SeedableRng;

    fn xor_data() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = crate::seed::Rng::seed_from_u64(5);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..200 {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            let c: f64 = rng.gen_range(-1.0..1.0);
            x.push(vec![a, b, c]);
            y.push(usize::from((a > 0.0) ^ (b > 0.0)));
        }
        (x, y)
    }

    fn spec(trees: usize, depth: Option<usize>) -> ClassifierSpec {
        ClassifierSpec::new(
            Hyperparameters::RandomForest(ForestParams {
                n_trees: trees,
                max_depth: depth,
                min_samples_split: 2,
                bootstrap: true,
            }),
            11,
        )
        .unwrap()
    }

    #[test]
    fn unlimited_depth_fits_training_set() {
        let (x, y) = xor_data();
        let rows: Vec<usize> = (0..x.len()).collect();
        let m = fit_supervised(&spec(60, None), Inputs::Vectors(&x), &rows, &y, 2).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(predict_proba(&m, Sample::Vector(xi)).unwrap().class, *yi);
        }
    }

    #[test]
    fn single_tree_probability_is_its_leaf() {
        let (x, y) = xor_data();
        let rows: Vec<usize> = (0..x.len()).collect();
        let m = fit_supervised(&spec(1, Some(2)), Inputs::Vectors(&x), &rows, &y, 2).unwrap();
        let ModelParams::RandomForest(f) = &m.params else { panic!() };
        for xi in x.iter().take(20) {
            let p = predict_proba(&m, Sample::Vector(xi)).unwrap();
            assert_eq!(p.probs.as_slice(), f.trees()[0].leaf(xi));
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let (x, y) = xor_data();
        let rows: Vec<usize> = (0..x.len()).collect();
        let a = fit_supervised(&spec(10, None), Inputs::Vectors(&x), &rows, &y, 2).unwrap();
        let b = fit_supervised(&spec(10, None), Inputs::Vectors(&x), &rows, &y, 2).unwrap();
        assert_eq!(a, b);
    }
}
