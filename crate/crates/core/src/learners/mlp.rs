//! Fully connected ReLU network with a softmax output, trained by minibatch
//! SGD with momentum on the mean cross-entropy.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::numeric::softmax;
use super::MlpParams;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths, input first, classes last.
    sizes: Vec<usize>,
    /// Per layer: weights (out x in, row-major) then biases.
    params: Vec<f64>,
}

impl Mlp {
    /// He-normal weights, zero biases.
    pub fn init(sizes: Vec<usize>, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut params = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let scale = libm::sqrt(2.0 / fan_in as f64);
            for _ in 0..fan_in * fan_out {
                let z: f64 = StandardNormal.sample(&mut rng);
                params.push(z * scale);
            }
            params.extend(core::iter::repeat_n(0.0, fan_out));
        }
        Self { sizes, params }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = vec![0];
        for l in 0..self.sizes.len() - 1 {
            let last = *off.last().unwrap();
            off.push(last + self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1]);
        }
        off
    }

    /// Pre-activations of every layer (input copied as layer 0).
    fn forward(&self, x: &[f64], off: &[usize]) -> Vec<Vec<f64>> {
        let mut zs = vec![x.to_vec()];
        let last = self.sizes.len() - 2;
        for l in 0..=last {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off[l]..off[l] + n_in * n_out];
            let b = &self.params[off[l] + n_in * n_out..off[l + 1]];
            let input = &zs[l];
            let relu = l > 0;
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    b[o] + row.iter().zip(input).map(|(wi, xi)| wi * if relu { xi.max(0.0) } else { *xi }).sum::<f64>()
                })
                .collect();
            zs.push(z);
        }
        zs
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let off = self.offsets();
        self.forward(x, &off).pop().unwrap()
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// the flat parameter vector.
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[usize]) -> (f64, Vec<f64>) {
        let off = self.offsets();
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let n_layers = self.sizes.len() - 1;
        for (x, &y) in xs.iter().zip(ys) {
            let zs = self.forward(x, &off);
            let mut delta = softmax(&zs[n_layers]);
            loss -= libm::log(delta[y].max(1e-300));
            delta[y] -= 1.0;
            for l in (0..n_layers).rev() {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let relu = l > 0;
                let input = &zs[l];
                let wo = off[l];
                let bo = off[l] + n_in * n_out;
                for o in 0..n_out {
                    grad[bo + o] += delta[o];
                    for i in 0..n_in {
                        let a = if relu { input[i].max(0.0) } else { input[i] };
                        grad[wo + o * n_in + i] += delta[o] * a;
                    }
                }
                if l > 0 {
                    let mut prev = vec![0.0; n_in];
                    for o in 0..n_out {
                        let row = &self.params[wo + o * n_in..wo + (o + 1) * n_in];
                        for i in 0..n_in {
                            prev[i] += row[i] * delta[o];
                        }
                    }
                    for i in 0..n_in {
                        if input[i] <= 0.0 {
                            prev[i] = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        let n = xs.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    pub fn fit(p: &MlpParams, x: &[Vec<f64>], y: &[usize], n_classes: usize, seed: u64) -> Self {
        let mut sizes = vec![x[0].len()];
        sizes.extend(&p.hidden);
        sizes.push(n_classes);
        let mut net = Self::init(sizes, seed::derive(seed, &[0]));
        let mut rng = seed::rng(seed::derive(seed, &[1]));
        let mut velocity = vec![0.0; net.params.len()];
        let mut order: Vec<usize> = (0..x.len()).collect();
        for _ in 0..p.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(p.batch_size) {
                let xs: Vec<&[f64]> = batch.iter().map(|&i| x[i].as_slice()).collect();
                let ys: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
                let (_, g) = net.loss_and_grad(&xs, &ys);
                for ((w, v), gi) in net.params.iter_mut().zip(velocity.iter_mut()).zip(&g) {
                    *v = p.momentum * *v + gi;
                    *w -= p.learning_rate * *v;
                }
            }
        }
        net
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seed::rng(3);
        let net = Mlp::init(vec![4, 6, 5, 3], 9);
        let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let ys = [0usize, 2, 1, 1, 0];
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let (_, g) = net.loss_and_grad(&refs, &ys);
        let h = 1e-6;
        for k in 0..net.params().len() {
            let mut plus = net.clone();
            plus.params_mut()[k] += h;
            let mut minus = net.clone();
            minus.params_mut()[k] -= h;
            let fd = (plus.loss_and_grad(&refs, &ys).0 - minus.loss_and_grad(&refs, &ys).0) / (2.0 * h);
            let denom = g[k].abs().max(fd.abs()).max(1e-8);
            assert!((g[k] - fd).abs() / denom < 1e-4, "param {k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn learns_a_linear_boundary() {
        let mut rng = seed::rng(1);
        let x: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let y: Vec<usize> = x.iter().map(|v| usize::from(v[0] + v[1] > 0.0)).collect();
        let p = MlpParams { hidden: vec![8], learning_rate: 0.05, momentum: 0.9, epochs: 60, batch_size: 16 };
        let net = Mlp::fit(&p, &x, &y, 2, 4);
        let correct = x.iter().zip(&y).filter(|(v, c)| super::super::argmax(&net.predict(v)) == **c).count();
        assert!(correct >= 190, "{correct}");
    }
}
