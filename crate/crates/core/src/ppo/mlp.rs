//! Fully connected tanh network with hand-written reverse mode.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (`outputs x inputs`, row-major) followed by the bias. Gradients use the
//! same layout so optimisers can treat both as plain slices.

use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths including input and output.
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass over a batch, needed by `backward`.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// Per layer, the batch of inputs to that layer (row-major, `batch x width`),
    /// followed by the network output.
    pub activations: Vec<Vec<f64>>,
    pub batch: usize,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Dot product with four independent accumulators so the loop vectorises.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            sizes: sizes.to_vec(),
            params: alloc::vec![0.0; Self::param_count(sizes)],
        }
    }

    /// Gaussian weights with standard deviation `gain / sqrt(fan_in)` and zero
    /// biases; `output_gain` replaces `gain` for the last layer.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], gain: f64, output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let layers = sizes.len() - 1;
        let mut off = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let g = if l + 1 == layers { output_gain } else { gain };
            let sd = g / math::sqrt(w[0] as f64);
            let normal = Normal::new(0.0, sd).expect("finite standard deviation");
            for p in &mut net.params[off..off + w[0] * w[1]] {
                *p = normal.sample(rng);
            }
            off += w[0] * w[1] + w[1];
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least one layer")
    }

    /// Offsets of each layer's weights and bias in `params`.
    pub fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.sizes.len() - 1);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            out.push((off, off + w[0] * w[1]));
            off += w[0] * w[1] + w[1];
        }
        out
    }

    /// Forward pass over `batch` rows of `input` (row-major).
    pub fn forward(&self, input: &[f64], batch: usize) -> ForwardCache {
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(input[..batch * self.sizes[0]].to_vec());
        for (l, (w_off, b_off)) in self.layer_offsets().into_iter().enumerate() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &acts[l];
            let w = &self.params[w_off..w_off + n_in * n_out];
            let b = &self.params[b_off..b_off + n_out];
            let mut y = alloc::vec![0.0; batch * n_out];
            for s in 0..batch {
                let xs = &x[s * n_in..(s + 1) * n_in];
                let ys = &mut y[s * n_out..(s + 1) * n_out];
                for o in 0..n_out {
                    let v = b[o] + dot(&w[o * n_in..(o + 1) * n_in], xs);
                    ys[o] = if l + 1 < layers { math::tanh(v) } else { v };
                }
            }
            acts.push(y);
        }
        ForwardCache { activations: acts, batch }
    }

    /// Output for a single input.
    pub fn evaluate(&self, input: &[f64]) -> Vec<f64> {
        let mut cache = self.forward(input, 1);
        cache.activations.pop().unwrap_or_default()
    }

    /// Accumulates into `grad` the parameter gradient of a loss whose
    /// derivative with respect to the outputs is `d_out` (row-major, batch rows).
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let batch = cache.batch;
        let offsets = self.layer_offsets();
        let mut delta = d_out[..batch * self.output_dim()].to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w_off, b_off) = offsets[l];
            if l + 1 < layers {
                // tanh'(v) = 1 - y^2
                let y = &cache.activations[l + 1];
                for (d, yi) in delta.iter_mut().zip(y) {
                    *d *= 1.0 - yi * yi;
                }
            }
            let x = &cache.activations[l];
            let w = &self.params[w_off..w_off + n_in * n_out];
            let mut d_in = if l > 0 { alloc::vec![0.0; batch * n_in] } else { Vec::new() };
            for s in 0..batch {
                let xs = &x[s * n_in..(s + 1) * n_in];
                let ds = &delta[s * n_out..(s + 1) * n_out];
                let (gw, gb) = grad[w_off..b_off + n_out].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    if ds[o] == 0.0 {
                        continue;
                    }
                    axpy(ds[o], xs, &mut gw[o * n_in..(o + 1) * n_in]);
                    gb[o] += ds[o];
                    if l > 0 {
                        axpy(ds[o], &w[o * n_in..(o + 1) * n_in], &mut d_in[s * n_in..(s + 1) * n_in]);
                    }
                }
            }
            delta = d_in;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2]);
        assert_eq!(net.params.len(), 3 * 4 + 4 + 4 * 2 + 2);
        assert_eq!(net.evaluate(&[1.0, -2.0, 0.5]), alloc::vec![0.0, 0.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::init(&[3, 5, 4, 2], 1.0, 1.0, &mut rng);
        let x: Vec<f64> = (0..9).map(|i| (i as f64 * 0.37).sin()).collect();
        // loss = sum of outputs weighted by c
        let c = [0.3, -1.1];
        let loss = |n: &Mlp| {
            let out = n.forward(&x, 3);
            out.output().chunks(2).map(|o| o[0] * c[0] + o[1] * c[1]).sum::<f64>()
        };
        let cache = net.forward(&x, 3);
        let d_out: Vec<f64> = (0..3).flat_map(|_| c).collect();
        let mut grad = alloc::vec![0.0; net.params.len()];
        net.backward(&cache, &d_out, &mut grad);
        let h = 1e-6;
        for i in 0..net.params.len() {
            let mut p = net.clone();
            p.params[i] += h;
            let mut m = net.clone();
            m.params[i] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
