//! Running mean and variance for observation normalisation.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math;

const CLIP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub mean: Vec<f64>,
    /// Sum of squared deviations (Welford's M2).
    pub m2: Vec<f64>,
    pub count: f64,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: alloc::vec![0.0; dim],
            m2: alloc::vec![0.0; dim],
            count: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merges a batch of rows (Chan et al. parallel update).
    pub fn update(&mut self, rows: &[f64]) {
        let d = self.dim();
        if d == 0 || rows.is_empty() {
            return;
        }
        let n = (rows.len() / d) as f64;
        let mut bm = alloc::vec![0.0; d];
        for row in rows.chunks_exact(d) {
            for i in 0..d {
                bm[i] += row[i];
            }
        }
        bm.iter_mut().for_each(|m| *m /= n);
        let mut bm2 = alloc::vec![0.0; d];
        for row in rows.chunks_exact(d) {
            for i in 0..d {
                let e = row[i] - bm[i];
                bm2[i] += e * e;
            }
        }
        let total = self.count + n;
        for i in 0..d {
            let delta = bm[i] - self.mean[i];
            self.mean[i] += delta * n / total;
            self.m2[i] += bm2[i] + delta * delta * self.count * n / total;
        }
        self.count = total;
    }

    pub fn std(&self, i: usize) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            math::sqrt(self.m2[i] / self.count + 1e-8)
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| ((v - self.mean[i]) / self.std(i)).clamp(-CLIP, CLIP))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_two_pass_statistics() {
        let data: Vec<f64> = (0..40).map(|i| ((i * 7) % 13) as f64 * 0.5 - 2.0).collect();
        let mut n = RunningNorm::new(2);
        n.update(&data[..10]);
        n.update(&data[10..26]);
        n.update(&data[26..]);
        for c in 0..2 {
            let col: Vec<f64> = data.iter().skip(c).step_by(2).copied().collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / col.len() as f64;
            assert!((n.mean[c] - m).abs() < 1e-12);
            assert!((n.std(c) - libm::sqrt(var + 1e-8)).abs() < 1e-12);
        }
        assert_eq!(n.count, 20.0);
    }

    #[test]
    fn fresh_norm_is_identity_within_clip() {
        let n = RunningNorm::new(3);
        assert_eq!(n.normalize(&[1.0, -2.0, 50.0]), alloc::vec![1.0, -2.0, 10.0]);
    }
}
