//! Multi-class AdaBoost (SAMME) over depth-1 stumps.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::numeric::{argmax, softmax};
use super::AdaBoostParams;

/// Floor on the weighted error so a perfect stump gets a large finite weight.
const MIN_ERROR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left_class: usize,
    pub right_class: usize,
    pub alpha: f64,
}

impl Stump {
    fn predict(&self, x: &[f64]) -> usize {
        if x[self.feature] <= self.threshold {
            self.left_class
        } else {
            self.right_class
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    n_classes: usize,
    stumps: Vec<Stump>,
}

impl AdaBoostModel {
    pub fn fit(p: &AdaBoostParams, x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Self {
        let n = x.len();
        let d = x[0].len();
        let k = n_classes as f64;
        let orders: Vec<Vec<usize>> = (0..d)
            .map(|f| {
                let mut o: Vec<usize> = (0..n).collect();
                o.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
                o
            })
            .collect();
        let mut w = vec![1.0 / n as f64; n];
        let mut stumps = Vec::new();
        for _ in 0..p.rounds {
            let mut totals = vec![0.0; n_classes];
            for i in 0..n {
                totals[y[i]] += w[i];
            }
            let sum_w: f64 = totals.iter().sum();
            let majority = argmax(&totals);
            let mut best = (sum_w - totals[majority], 0usize, f64::INFINITY, majority, majority);
            let mut left = vec![0.0; n_classes];
            let mut right = vec![0.0; n_classes];
            for (f, order) in orders.iter().enumerate() {
                left.iter_mut().for_each(|v| *v = 0.0);
                let mut wl = 0.0;
                for q in 0..n - 1 {
                    let i = order[q];
                    left[y[i]] += w[i];
                    wl += w[i];
                    let (v, next) = (x[i][f], x[order[q + 1]][f]);
                    if v == next {
                        continue;
                    }
                    for c in 0..n_classes {
                        right[c] = totals[c] - left[c];
                    }
                    let (cl, cr) = (argmax(&left), argmax(&right));
                    let err = (wl - left[cl]) + (sum_w - wl - right[cr]);
                    if err < best.0 - 1e-15 {
                        let mut t = 0.5 * (v + next);
                        if t >= next {
                            t = v;
                        }
                        best = (err, f, t, cl, cr);
                    }
                }
            }
            let (err, feature, threshold, left_class, right_class) = best;
            let err = err / sum_w;
            if err >= 1.0 - 1.0 / k {
                if stumps.is_empty() {
                    stumps.push(Stump { feature, threshold, left_class, right_class, alpha: 1.0 });
                }
                break;
            }
            let e = err.max(MIN_ERROR);
            let alpha = libm::log((1.0 - e) / e) + libm::log(k - 1.0);
            let stump = Stump { feature, threshold, left_class, right_class, alpha };
            if err <= 0.0 {
                stumps.push(stump);
                break;
            }
            let boost = libm::exp(alpha);
            for i in 0..n {
                if stump.predict(&x[i]) != y[i] {
                    w[i] *= boost;
                }
            }
            let z: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= z);
            stumps.push(stump);
        }
        Self { n_classes, stumps }
    }

    pub fn rounds(&self) -> usize {
        self.stumps.len()
    }

    /// Class scores are the summed weights of the stumps voting for each
    /// class; probabilities are their softmax.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.n_classes];
        for st in &self.stumps {
            s[st.predict(x)] += st.alpha;
        }
        softmax(&s)
    }
}

#[cfg(test)]
mod tests {
    use crate::learners::*;

    #[test]
    fn separable_1d_is_fit_exactly() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 13)).collect();
        let rows: Vec<usize> = (0..20).collect();
        let spec = ClassifierSpec::default_for(ClassifierKind::AdaBoost, 0);
        let m = fit_supervised(&spec, Inputs::Vectors(&x), &rows, &y, 2).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let p = predict_proba(&m, Sample::Vector(xi)).unwrap();
            assert_eq!(p.class, *yi);
            assert!(p.confidence > 0.99);
        }
        assert_eq!(m.meta.iterations, 1);
    }

    #[test]
    fn three_class_boosting() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let y: Vec<usize> = (0..30).map(|i| i / 10).collect();
        let rows: Vec<usize> = (0..30).collect();
        let spec = ClassifierSpec::default_for(ClassifierKind::AdaBoost, 0);
        let m = fit_supervised(&spec, Inputs::Vectors(&x), &rows, &y, 3).unwrap();
        let acc =
            x.iter().zip(&y).filter(|(xi, yi)| predict_proba(&m, Sample::Vector(xi)).unwrap().class == **yi).count();
        assert_eq!(acc, 30);
    }
}
