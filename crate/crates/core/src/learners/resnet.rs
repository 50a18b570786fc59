//! Residual 1-D convolutional classifier for variable-length series.
//!
//! Each block applies three "same"-padded convolutions (kernel sizes from the
//! params, ReLU between them), adds a shortcut (1x1 convolution when the
//! channel count changes, identity otherwise) and a final ReLU. Global
//! average pooling over time makes the network length-agnostic; a dense
//! softmax layer follows. There is no batch normalization; inputs are
//! z-scored per channel with statistics taken from the training set.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::numeric::softmax;
use super::{ResNetParams, Series};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Conv {
    c_in: usize,
    c_out: usize,
    k: usize,
    /// Weights laid out `[out][tap][in]`, biases after.
    offset: usize,
}

impl Conv {
    fn n_params(&self) -> usize {
        self.c_out * self.k * self.c_in + self.c_out
    }

    fn pad(&self) -> usize {
        (self.k - 1) / 2
    }

    fn forward(&self, params: &[f64], x: &[f64], t_len: usize) -> Vec<f64> {
        let w = &params[self.offset..self.offset + self.c_out * self.k * self.c_in];
        let b = &params[self.offset + self.c_out * self.k * self.c_in..self.offset + self.n_params()];
        let mut out = vec![0.0; t_len * self.c_out];
        let pad = self.pad() as isize;
        for t in 0..t_len {
            let row = &mut out[t * self.c_out..(t + 1) * self.c_out];
            row.copy_from_slice(b);
            for j in 0..self.k {
                let s = t as isize + j as isize - pad;
                if s < 0 || s >= t_len as isize {
                    continue;
                }
                let xs = &x[s as usize * self.c_in..(s as usize + 1) * self.c_in];
                for (o, acc) in row.iter_mut().enumerate() {
                    let wr = &w[(o * self.k + j) * self.c_in..(o * self.k + j + 1) * self.c_in];
                    *acc += wr.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&self, params: &[f64], grad: &mut [f64], x: &[f64], g_out: &[f64], t_len: usize) -> Vec<f64> {
        let wn = self.c_out * self.k * self.c_in;
        let w = &params[self.offset..self.offset + wn];
        let mut dx = vec![0.0; t_len * self.c_in];
        let pad = self.pad() as isize;
        for t in 0..t_len {
            let g = &g_out[t * self.c_out..(t + 1) * self.c_out];
            for (o, go) in g.iter().enumerate() {
                grad[self.offset + wn + o] += go;
            }
            for j in 0..self.k {
                let s = t as isize + j as isize - pad;
                if s < 0 || s >= t_len as isize {
                    continue;
                }
                let s = s as usize;
                for (o, &go) in g.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    let base = (o * self.k + j) * self.c_in;
                    for i in 0..self.c_in {
                        grad[self.offset + base + i] += go * x[s * self.c_in + i];
                        dx[s * self.c_in + i] += go * w[base + i];
                    }
                }
            }
        }
        dx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Block {
    convs: Vec<Conv>,
    shortcut: Option<Conv>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResNet {
    c_in: usize,
    n_classes: usize,
    filters: usize,
    blocks: Vec<Block>,
    dense_offset: usize,
    params: Vec<f64>,
    channel_mean: Vec<f64>,
    channel_std: Vec<f64>,
}

struct BlockCache {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    sum: Vec<f64>,
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0)).collect()
}

impl ResNet {
    /// Randomly initialized network with identity input normalization.
    pub fn init(c_in: usize, p: &ResNetParams, n_classes: usize, seed: u64) -> Self {
        let mut offset = 0;
        let mut blocks = Vec::new();
        let mut fan_in = Vec::new();
        let mut width = c_in;
        for _ in 0..p.blocks {
            let mut convs = Vec::new();
            let mut c = width;
            for &k in &p.kernel_sizes {
                let conv = Conv { c_in: c, c_out: p.filters, k, offset };
                offset += conv.n_params();
                fan_in.push((conv, c * k));
                convs.push(conv);
                c = p.filters;
            }
            let shortcut = (width != p.filters).then(|| {
                let conv = Conv { c_in: width, c_out: p.filters, k: 1, offset };
                offset += conv.n_params();
                fan_in.push((conv, width));
                conv
            });
            blocks.push(Block { convs, shortcut });
            width = p.filters;
        }
        let dense_offset = offset;
        let total = offset + p.filters * n_classes + n_classes;
        let mut params = vec![0.0; total];
        let mut rng = seed::rng(seed);
        for (conv, fi) in fan_in {
            let scale = libm::sqrt(2.0 / fi as f64);
            for w in &mut params[conv.offset..conv.offset + conv.c_out * conv.k * conv.c_in] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = z * scale;
            }
        }
        let scale = libm::sqrt(1.0 / p.filters as f64);
        for w in &mut params[dense_offset..dense_offset + p.filters * n_classes] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = z * scale;
        }
        Self {
            c_in,
            n_classes,
            filters: p.filters,
            blocks,
            dense_offset,
            params,
            channel_mean: vec![0.0; c_in],
            channel_std: vec![1.0; c_in],
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn normalized(&self, s: &Series) -> Vec<f64> {
        s.data()
            .chunks(self.c_in)
            .flat_map(|row| row.iter().enumerate().map(|(c, v)| (v - self.channel_mean[c]) / self.channel_std[c]))
            .collect()
    }

    fn forward(&self, s: &Series) -> (Vec<BlockCache>, Vec<f64>, Vec<f64>) {
        let t_len = s.len();
        let mut h = self.normalized(s);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let mut pre = Vec::with_capacity(block.convs.len());
            let mut a = h.clone();
            for (i, conv) in block.convs.iter().enumerate() {
                let z = conv.forward(&self.params, &a, t_len);
                a = if i + 1 < block.convs.len() { relu(&z) } else { z.clone() };
                pre.push(z);
            }
            let short = match &block.shortcut {
                Some(conv) => conv.forward(&self.params, &h, t_len),
                None => h.clone(),
            };
            let sum: Vec<f64> = a.iter().zip(&short).map(|(x, y)| x + y).collect();
            let out = relu(&sum);
            caches.push(BlockCache { input: h, pre, sum });
            h = out;
        }
        let f = self.filters;
        let mut pooled = vec![0.0; f];
        for row in h.chunks(f) {
            for (p, v) in pooled.iter_mut().zip(row) {
                *p += v;
            }
        }
        pooled.iter_mut().for_each(|p| *p /= t_len as f64);
        let logits = (0..self.n_classes)
            .map(|k| {
                let w = &self.params[self.dense_offset + k * f..self.dense_offset + (k + 1) * f];
                self.params[self.dense_offset + self.n_classes * f + k]
                    + w.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        (caches, pooled, logits)
    }

    pub fn predict(&self, s: &Series) -> Vec<f64> {
        softmax(&self.forward(s).2)
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// the flat parameter vector.
    pub fn loss_and_grad(&self, xs: &[&Series], ys: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (s, &y) in xs.iter().zip(ys) {
            loss += self.accumulate(s, y, &mut grad);
        }
        let n = xs.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    fn accumulate(&self, s: &Series, y: usize, grad: &mut [f64]) -> f64 {
        let t_len = s.len();
        let f = self.filters;
        let (caches, pooled, logits) = self.forward(s);
        let mut d_logits = softmax(&logits);
        let loss = -libm::log(d_logits[y].max(1e-300));
        d_logits[y] -= 1.0;
        let mut d_pooled = vec![0.0; f];
        for k in 0..self.n_classes {
            let wo = self.dense_offset + k * f;
            grad[self.dense_offset + self.n_classes * f + k] += d_logits[k];
            for j in 0..f {
                grad[wo + j] += d_logits[k] * pooled[j];
                d_pooled[j] += d_logits[k] * self.params[wo + j];
            }
        }
        let mut d_out: Vec<f64> = (0..t_len * f).map(|i| d_pooled[i % f] / t_len as f64).collect();
        for (block, cache) in self.blocks.iter().zip(&caches).rev() {
            let d_sum: Vec<f64> = d_out.iter().zip(&cache.sum).map(|(g, z)| if *z > 0.0 { *g } else { 0.0 }).collect();
            let mut g = d_sum.clone();
            for i in (0..block.convs.len()).rev() {
                let input = if i == 0 { cache.input.clone() } else { relu(&cache.pre[i - 1]) };
                let dx = block.convs[i].backward(&self.params, grad, &input, &g, t_len);
                g = if i == 0 {
                    dx
                } else {
                    dx.iter().zip(&cache.pre[i - 1]).map(|(d, z)| if *z > 0.0 { *d } else { 0.0 }).collect()
                };
            }
            let d_short = match &block.shortcut {
                Some(conv) => conv.backward(&self.params, grad, &cache.input, &d_sum, t_len),
                None => d_sum,
            };
            d_out = g.iter().zip(&d_short).map(|(a, b)| a + b).collect();
        }
        loss
    }

    /// Adam on minibatches of whole series.
    pub fn fit(p: &ResNetParams, xs: &[&Series], y: &[usize], n_classes: usize, seed: u64) -> Self {
        let c_in = xs[0].channels();
        let mut net = Self::init(c_in, p, n_classes, seed::derive(seed, &[0]));
        let mut sum = vec![0.0; c_in];
        let mut count = 0usize;
        for s in xs {
            for t in 0..s.len() {
                for (acc, v) in sum.iter_mut().zip(s.step(t)) {
                    *acc += v;
                }
            }
            count += s.len();
        }
        let mean: Vec<f64> = sum.iter().map(|v| v / count as f64).collect();
        let mut var = vec![0.0; c_in];
        for s in xs {
            for t in 0..s.len() {
                for (c, v) in s.step(t).iter().enumerate() {
                    var[c] += (v - mean[c]) * (v - mean[c]);
                }
            }
        }
        net.channel_std = var
            .iter()
            .map(|v| {
                let sd = libm::sqrt(v / count as f64);
                if sd < 1e-12 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        net.channel_mean = mean;

        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let mut m = vec![0.0; net.params.len()];
        let mut v = vec![0.0; net.params.len()];
        let mut step = 0i32;
        let mut rng = seed::rng(seed::derive(seed, &[1]));
        let mut order: Vec<usize> = (0..xs.len()).collect();
        for _ in 0..p.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(p.batch_size) {
                let bx: Vec<&Series> = batch.iter().map(|&i| xs[i]).collect();
                let by: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
                let (_, g) = net.loss_and_grad(&bx, &by);
                step += 1;
                let c1 = 1.0 - libm::pow(b1, step as f64);
                let c2 = 1.0 - libm::pow(b2, step as f64);
                for i in 0..g.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    net.params[i] -= p.learning_rate * (m[i] / c1) / (libm::sqrt(v[i] / c2) + eps);
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

    fn small() -> ResNetParams {
        ResNetParams {
            blocks: 2,
            filters: 3,
            kernel_sizes: vec![3, 2, 1],
            epochs: 1,
            batch_size: 4,
            learning_rate: 1e-2,
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seed::rng(8);
        let mut net = ResNet::init(2, &small(), 3, 5);
        // Zero biases put some pre-activations exactly on the ReLU kink.
        for w in net.params_mut() {
            *w += rng.gen_range(-0.1..0.1);
        }
        assert!(net.params().len() <= 500);
        let xs: Vec<Series> = [5usize, 7, 4]
            .iter()
            .map(|&t| Series::new(2, (0..t * 2).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let refs: Vec<&Series> = xs.iter().collect();
        let ys = [0usize, 2, 1];
        let (_, g) = net.loss_and_grad(&refs, &ys);
        let h = 1e-6;
        for k in 0..net.params().len() {
            let mut plus = net.clone();
            plus.params_mut()[k] += h;
            let mut minus = net.clone();
            minus.params_mut()[k] -= h;
            let fd = (plus.loss_and_grad(&refs, &ys).0 - minus.loss_and_grad(&refs, &ys).0) / (2.0 * h);
            let denom = g[k].abs().max(fd.abs()).max(1e-7);
            assert!((g[k] - fd).abs() / denom < 1e-3, "param {k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn separates_rising_from_falling_series() {
        let mut rng = seed::rng(2);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..40 {
            let t_len = rng.gen_range(6..14);
            let up = i % 2 == 0;
            let data = (0..t_len)
                .map(|t| {
                    let v = t as f64 / t_len as f64;
                    (if up { v } else { 1.0 - v }) + rng.gen_range(-0.1..0.1)
                })
                .collect();
            xs.push(Series::new(1, data));
            ys.push(usize::from(up));
        }
        let refs: Vec<&Series> = xs.iter().collect();
        let p = ResNetParams {
            blocks: 1,
            filters: 4,
            kernel_sizes: vec![3, 3, 3],
            epochs: 60,
            batch_size: 8,
            learning_rate: 1e-2,
        };
        let net = ResNet::fit(&p, &refs, &ys, 2, 1);
        let correct = refs.iter().zip(&ys).filter(|(s, y)| super::super::argmax(&net.predict(s)) == **y).count();
        assert!(correct >= 36, "{correct}/40");
    }
}
