//! Dense softmax network. Zero hidden layers is multinomial logistic
//! regression.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{ln, softmax, sqrt};
use crate::models::LOSS_FLOOR;
use crate::rng::{derive_seed, seeded, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Network {
    /// Layer widths from input to output, e.g. `[m, 32, k]`.
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-call buffers for forward/backward passes.
pub(crate) struct Scratch {
    /// Activations per layer; `acts[0]` is a copy of the input.
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next_delta: Vec<f64>,
}

impl Network {
    pub(crate) fn zeros(sizes: Vec<usize>) -> Self {
        let n = param_count(&sizes);
        Self {
            sizes,
            params: vec![0.0; n],
        }
    }

    /// Weights uniform in `[-r, r]` with `r = sqrt(6 / (fan_in + fan_out))`,
    /// biases zero.
    pub(crate) fn glorot(sizes: Vec<usize>, seed: u64) -> Self {
        let mut net = Self::zeros(sizes);
        let mut rng = seeded(derive_seed(seed, streams::INIT));
        let mut offset = 0;
        for l in 0..net.sizes.len() - 1 {
            let (fan_in, fan_out) = (net.sizes[l], net.sizes[l + 1]);
            let r = sqrt(6.0 / (fan_in + fan_out) as f64);
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                *w = rng.random_range(-r..=r);
            }
            offset += fan_in * fan_out + fan_out;
        }
        net
    }

    pub(crate) fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub(crate) fn n_outputs(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub(crate) fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// True for weight entries, false for biases (L2 applies to weights).
    pub(crate) fn weight_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.params.len());
        for l in 0..self.sizes.len() - 1 {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            mask.extend(core::iter::repeat_n(true, i * o));
            mask.extend(core::iter::repeat_n(false, o));
        }
        mask
    }

    pub(crate) fn scratch(&self) -> Scratch {
        let widest = self.sizes.iter().copied().max().unwrap_or(0);
        Scratch {
            acts: self.sizes.iter().map(|&s| vec![0.0; s]).collect(),
            delta: Vec::with_capacity(widest),
            next_delta: Vec::with_capacity(widest),
        }
    }

    fn forward(&self, x: &[f64], s: &mut Scratch) {
        s.acts[0].copy_from_slice(x);
        let last = self.sizes.len() - 2;
        let mut offset = 0;
        for l in 0..=last {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let (before, after) = s.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z: f64 = row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + b[o];
                out[o] = if l == last { z } else { z.max(0.0) };
            }
            if l == last {
                softmax(out);
            }
            offset += n_in * n_out + n_out;
        }
    }

    pub(crate) fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.scratch();
        self.forward(x, &mut s);
        s.acts.pop().unwrap_or_default()
    }

    /// Writes `∇θ (-ln p_y)` into `grad` and returns the floored loss.
    pub(crate) fn loss_and_gradient(&self, x: &[f64], y: usize, grad: &mut [f64], s: &mut Scratch) -> f64 {
        self.forward(x, s);
        let n_layers = self.sizes.len() - 1;
        let probs = &s.acts[n_layers];
        let loss = -ln(probs[y].max(LOSS_FLOOR));
        s.delta.clear();
        s.delta.extend_from_slice(probs);
        s.delta[y] -= 1.0;

        let mut offset = self.params.len();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            offset -= n_in * n_out + n_out;
            let input = &s.acts[l];
            for o in 0..n_out {
                let d = s.delta[o];
                let g = &mut grad[offset + o * n_in..offset + (o + 1) * n_in];
                for (gi, a) in g.iter_mut().zip(input) {
                    *gi = d * a;
                }
                grad[offset + n_in * n_out + o] = d;
            }
            if l > 0 {
                let w = &self.params[offset..offset + n_in * n_out];
                s.next_delta.clear();
                s.next_delta.resize(n_in, 0.0);
                for o in 0..n_out {
                    let d = s.delta[o];
                    for (nd, wv) in s.next_delta.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *nd += wv * d;
                    }
                }
                // ReLU derivative: hidden activations are max(z, 0).
                for (nd, a) in s.next_delta.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *nd = 0.0;
                    }
                }
                core::mem::swap(&mut s.delta, &mut s.next_delta);
            }
        }
        loss
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_sizes() {
        let net = Network::zeros(vec![3, 2, 4]);
        assert_eq!(net.params().len(), 3 * 2 + 2 + 2 * 4 + 4);
        let mask = net.weight_mask();
        assert_eq!(mask.iter().filter(|&&w| w).count(), 14);
        assert!(!mask[6] && !mask[7] && mask[8]);
    }

    #[test]
    fn glorot_bounds_and_zero_biases() {
        let net = Network::glorot(vec![4, 6, 3], 9);
        let r1 = (6.0f64 / 10.0).sqrt();
        assert!(net.params()[..24].iter().all(|w| w.abs() <= r1));
        assert!(net.params()[24..30].iter().all(|&b| b == 0.0));
        assert_eq!(net, Network::glorot(vec![4, 6, 3], 9));
    }
}
