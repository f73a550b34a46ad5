//! Clipped-surrogate PPO update with Adam.

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::ForwardCache;
use super::policy::{clamp_log_std, PolicyNetwork, HALF_LN_TWO_PI, LOG_STD_MAX, LOG_STD_MIN};
use super::PpoError;
use crate::math;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub clip_ratio: f64,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Environment steps per worker per rollout round.
    pub horizon: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Global gradient-norm clip; 0 disables it.
    pub max_grad_norm: f64,
    pub workers: usize,
    pub total_steps: u64,
    /// Hidden layer widths shared by the policy and value networks.
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Rollout rounds between checkpoints; 0 keeps only the initial and final ones.
    pub checkpoint_interval: u64,
    /// Advance to stage 2 through the penalty-window curriculum.
    pub curriculum: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            clip_ratio: 0.2,
            gae_lambda: 0.95,
            gamma: 0.99,
            epochs: 4,
            minibatch_size: 256,
            horizon: 512,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            workers: 8,
            total_steps: 2_000_000,
            hidden: alloc::vec![64, 64],
            init_log_std: -2.0,
            checkpoint_interval: 10,
            curriculum: true,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: &'static str| Err(PpoError::InvalidConfig(m));
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return bad("clip ratio must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return bad("gamma and lambda must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.horizon == 0 || self.workers == 0 {
            return bad("epochs, minibatch size, horizon and workers must be positive");
        }
        if !(self.entropy_coef >= 0.0) || !(self.value_coef >= 0.0) || !(self.max_grad_norm >= 0.0) {
            return bad("loss coefficients must be non-negative");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&self.init_log_std) {
            return bad("initial log-std outside the clamp range");
        }
        Ok(())
    }
}

/// Transitions for one update, observations already normalised.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub observations: Vec<f64>,
    /// Unclamped action samples.
    pub actions: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// FNV-1a over every stored number, for diagnostics.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self
            .observations
            .iter()
            .chain(&self.actions)
            .chain(&self.old_log_probs)
            .chain(&self.advantages)
            .chain(&self.returns)
        {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    fn check(&self) -> Result<(), PpoError> {
        let n = self.len();
        let ok = self.observations.len() == n * self.obs_dim
            && self.actions.len() == n * self.action_dim
            && self.advantages.len() == n
            && self.returns.len() == n;
        if ok {
            Ok(())
        } else {
            Err(PpoError::LengthMismatch {
                expected: n,
                got: self.advantages.len(),
            })
        }
    }
}

/// Per-update averages of the loss terms and policy-change diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Loss coefficients of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub clip_ratio: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
}

impl From<&TrainerConfig> for LossWeights {
    fn from(c: &TrainerConfig) -> Self {
        Self {
            clip_ratio: c.clip_ratio,
            entropy_coef: c.entropy_coef,
            value_coef: c.value_coef,
        }
    }
}

/// Total loss `policy + value_coef * value - entropy_coef * entropy` over the
/// samples `idx` and its gradient (policy parameters, then value parameters).
pub fn loss_and_gradient(
    net: &PolicyNetwork,
    batch: &Batch,
    idx: &[usize],
    w: &LossWeights,
) -> (f64, UpdateStats, Vec<f64>) {
    let m = idx.len();
    let (od, ad) = (batch.obs_dim, batch.action_dim);
    let mut x = Vec::with_capacity(m * od);
    for &i in idx {
        x.extend_from_slice(&batch.observations[i * od..(i + 1) * od]);
    }
    let pc: ForwardCache = net.policy.forward(&x, m);
    let vc: ForwardCache = net.value.forward(&x, m);
    let pout = pc.output();
    let vout = vc.output();
    let inv = 1.0 / m as f64;

    let mut d_pol = alloc::vec![0.0; m * 2 * ad];
    let mut d_val = alloc::vec![0.0; m];
    let mut stats = UpdateStats::default();
    for (k, &i) in idx.iter().enumerate() {
        let out = &pout[k * 2 * ad..(k + 1) * 2 * ad];
        let act = &batch.actions[i * ad..(i + 1) * ad];
        let mut lp = 0.0;
        let mut ent = 0.0;
        let mut zs: Vec<(f64, f64)> = Vec::with_capacity(ad);
        for j in 0..ad {
            let l = clamp_log_std(out[ad + j]);
            let s = math::exp(l);
            let z = (act[j] - out[j]) / s;
            lp += -0.5 * z * z - l - HALF_LN_TWO_PI;
            ent += l + 0.5 + HALF_LN_TWO_PI;
            zs.push((z, s));
        }
        let adv = batch.advantages[i];
        let log_ratio = lp - batch.old_log_probs[i];
        let ratio = math::exp(log_ratio);
        let eps = w.clip_ratio;
        let s1 = ratio * adv;
        let s2 = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        stats.policy_loss -= s1.min(s2) * inv;
        stats.entropy += ent * inv;
        stats.approx_kl += ((ratio - 1.0) - log_ratio) * inv;
        if (ratio - 1.0).abs() > eps {
            stats.clip_fraction += inv;
        }
        let dlp = if s1 <= s2 { -adv * ratio } else { 0.0 };
        for j in 0..ad {
            let (z, s) = zs[j];
            let raw_l = out[ad + j];
            let inside = (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_l);
            d_pol[k * 2 * ad + j] = dlp * z / s * inv;
            d_pol[k * 2 * ad + ad + j] = if inside {
                (dlp * (z * z - 1.0) - w.entropy_coef) * inv
            } else {
                0.0
            };
        }
        let err = vout[k] - batch.returns[i];
        stats.value_loss += 0.5 * err * err * inv;
        d_val[k] = w.value_coef * err * inv;
    }
    let np = net.policy.params.len();
    let mut grad = alloc::vec![0.0; np + net.value.params.len()];
    let (gp, gv) = grad.split_at_mut(np);
    net.policy.backward(&pc, &d_pol, gp);
    net.value.backward(&vc, &d_val, gv);
    let loss = stats.policy_loss + w.value_coef * stats.value_loss - w.entropy_coef * stats.entropy;
    (loss, stats, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(n: usize) -> Self {
        Self {
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
            t: 0,
        }
    }

    /// One descent step on `params` (policy then value).
    pub fn step(&mut self, net: &mut PolicyNetwork, grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - math::powf(Self::B1, self.t as f64);
        let bc2 = 1.0 - math::powf(Self::B2, self.t as f64);
        let np = net.policy.params.len();
        let params = net.policy.params.iter_mut().chain(net.value.params.iter_mut());
        for (i, p) in params.enumerate() {
            let g = grad[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            *p -= lr * mh / (math::sqrt(vh) + Self::EPS);
        }
        debug_assert_eq!(self.m.len(), np + net.value.params.len());
    }
}

/// Per-update advantage normalisation. A single sample cannot be centred, so
/// it is only scaled to unit magnitude.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len();
    if n == 0 {
        return;
    }
    if n == 1 {
        if adv[0] != 0.0 {
            adv[0] = adv[0].signum();
        }
        return;
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let sd = math::sqrt(var) + 1e-8;
    adv.iter_mut().for_each(|a| *a = (*a - mean) / sd);
}

/// Runs `epochs` passes of shuffled minibatch Adam steps over `batch`.
/// Advantages are normalised once for the whole update.
pub fn ppo_update<R: Rng + ?Sized>(
    net: &mut PolicyNetwork,
    adam: &mut Adam,
    batch: &Batch,
    config: &TrainerConfig,
    rng: &mut R,
) -> Result<UpdateStats, PpoError> {
    if batch.is_empty() {
        return Err(PpoError::EmptyBatch);
    }
    batch.check()?;
    let mut b = batch.clone();
    normalize_advantages(&mut b.advantages);
    let weights = LossWeights::from(config);
    let mut idx: Vec<usize> = (0..b.len()).collect();
    let mut total = UpdateStats::default();
    let mut count = 0.0;
    let mut candidate = net.clone();
    let mut cand_adam = adam.clone();
    for _ in 0..config.epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(config.minibatch_size) {
            let (_, stats, mut grad) = loss_and_gradient(&candidate, &b, chunk, &weights);
            let norm = math::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
            if !norm.is_finite() {
                return Err(PpoError::NonFiniteGradient { batch_hash: batch.hash() });
            }
            if config.max_grad_norm > 0.0 && norm > config.max_grad_norm {
                let s = config.max_grad_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            cand_adam.step(&mut candidate, &grad, config.learning_rate);
            total.policy_loss += stats.policy_loss;
            total.value_loss += stats.value_loss;
            total.entropy += stats.entropy;
            total.approx_kl += stats.approx_kl;
            total.clip_fraction += stats.clip_fraction;
            total.grad_norm += norm;
            count += 1.0;
        }
    }
    if !candidate.is_finite() {
        return Err(PpoError::NonFiniteGradient { batch_hash: batch.hash() });
    }
    *net = candidate;
    *adam = cand_adam;
    total.policy_loss /= count;
    total.value_loss /= count;
    total.entropy /= count;
    total.approx_kl /= count;
    total.clip_fraction /= count;
    total.grad_norm /= count;
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::policy::policy_act;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(seed: u64, n: usize) -> (PolicyNetwork, Batch) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = PolicyNetwork::new(3, 2, &[6], -0.3, &mut rng);
        let mut b = Batch {
            obs_dim: 3,
            action_dim: 2,
            ..Batch::default()
        };
        for _ in 0..n {
            let o: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = policy_act(&net, &o, false, &mut rng).unwrap();
            b.observations.extend_from_slice(&o);
            b.actions.extend_from_slice(&a.raw);
            // old policy slightly different, ratios spread around 1
            b.old_log_probs.push(a.log_prob + rng.random_range(-0.4..0.4));
            b.advantages.push(rng.random_range(-2.0..2.0));
            b.returns.push(rng.random_range(-2.0..2.0));
        }
        (net, b)
    }

    fn flat(net: &PolicyNetwork) -> Vec<f64> {
        net.policy.params.iter().chain(&net.value.params).copied().collect()
    }

    fn set_flat(net: &mut PolicyNetwork, p: &[f64]) {
        let np = net.policy.params.len();
        net.policy.params.copy_from_slice(&p[..np]);
        net.value.params.copy_from_slice(&p[np..]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let w = LossWeights {
            clip_ratio: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
        };
        for seed in 0..3 {
            let (net, batch) = toy(seed, 8);
            let idx: Vec<usize> = (0..8).collect();
            let (_, _, grad) = loss_and_gradient(&net, &batch, &idx, &w);
            let p0 = flat(&net);
            let h = 1e-6;
            let mut worst: f64 = 0.0;
            for i in 0..p0.len() {
                let mut n = net.clone();
                let mut p = p0.clone();
                p[i] += h;
                set_flat(&mut n, &p);
                let lp = loss_and_gradient(&n, &batch, &idx, &w).0;
                p[i] -= 2.0 * h;
                set_flat(&mut n, &p);
                let lm = loss_and_gradient(&n, &batch, &idx, &w).0;
                let fd = (lp - lm) / (2.0 * h);
                let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
                worst = worst.max(rel);
            }
            assert!(worst <= 1e-4, "seed {seed}: worst relative error {worst}");
        }
    }

    #[test]
    fn ratio_one_gives_mean_advantage() {
        let (net, mut batch) = toy(4, 8);
        for i in 0..8 {
            let o = &batch.observations[i * 3..(i + 1) * 3];
            batch.old_log_probs[i] = net.distribution(o).log_prob(&batch.actions[i * 2..(i + 1) * 2]);
        }
        let w = LossWeights {
            clip_ratio: 0.2,
            entropy_coef: 0.0,
            value_coef: 0.0,
        };
        let idx: Vec<usize> = (0..8).collect();
        let (_, stats, _) = loss_and_gradient(&net, &batch, &idx, &w);
        let mean = batch.advantages.iter().sum::<f64>() / 8.0;
        assert!((stats.policy_loss + mean).abs() < 1e-12);
        assert!(stats.clip_fraction == 0.0 && stats.approx_kl.abs() < 1e-15);
    }

    #[test]
    fn zero_advantages_leave_policy_fixed() {
        let (net, mut batch) = toy(5, 8);
        batch.advantages.iter_mut().for_each(|a| *a = 0.0);
        let w = LossWeights {
            clip_ratio: 0.2,
            entropy_coef: 0.0,
            value_coef: 0.5,
        };
        let idx: Vec<usize> = (0..8).collect();
        let (_, _, grad) = loss_and_gradient(&net, &batch, &idx, &w);
        let np = net.policy.params.len();
        assert!(grad[..np].iter().all(|g| *g == 0.0));
        assert!(grad[np..].iter().any(|g| *g != 0.0));

        let cfg = TrainerConfig {
            entropy_coef: 0.0,
            minibatch_size: 4,
            ..TrainerConfig::default()
        };
        let mut updated = net.clone();
        let mut adam = Adam::new(net.param_count());
        ppo_update(&mut updated, &mut adam, &batch, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(updated.policy, net.policy);
        assert_ne!(updated.value, net.value);
    }

    #[test]
    fn single_sample_normalisation_keeps_direction() {
        let (net, mut batch) = toy(6, 1);
        batch.advantages[0] = 3.7;
        let w = LossWeights {
            clip_ratio: 0.2,
            entropy_coef: 0.0,
            value_coef: 0.0,
        };
        let (_, _, raw) = loss_and_gradient(&net, &batch, &[0], &w);
        normalize_advantages(&mut batch.advantages);
        let (_, _, normed) = loss_and_gradient(&net, &batch, &[0], &w);
        let argmax = |g: &[f64]| {
            (0..g.len())
                .max_by(|&i, &j| g[i].abs().total_cmp(&g[j].abs()))
                .unwrap()
        };
        assert_eq!(argmax(&raw), argmax(&normed));
        for (a, b) in raw.iter().zip(&normed) {
            assert!((a / 3.7 - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn update_improves_surrogate_and_rejects_empty() {
        let (mut net, batch) = toy(7, 64);
        let cfg = TrainerConfig {
            minibatch_size: 16,
            learning_rate: 1e-3,
            ..TrainerConfig::default()
        };
        let mut adam = Adam::new(net.param_count());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let before = loss_and_gradient(&net, &batch, &(0..64).collect::<Vec<_>>(), &LossWeights::from(&cfg)).0;
        ppo_update(&mut net, &mut adam, &batch, &cfg, &mut rng).unwrap();
        let after = loss_and_gradient(&net, &batch, &(0..64).collect::<Vec<_>>(), &LossWeights::from(&cfg)).0;
        assert!(after < before, "{after} >= {before}");
        assert_eq!(adam.t, 4 * 4);
        let empty = Batch {
            obs_dim: 3,
            action_dim: 2,
            ..Batch::default()
        };
        assert_eq!(ppo_update(&mut net, &mut adam, &empty, &cfg, &mut rng), Err(PpoError::EmptyBatch));
    }

    #[test]
    fn config_validation() {
        assert!(TrainerConfig::default().validate().is_ok());
        for bad in [
            TrainerConfig { clip_ratio: 1.0, ..TrainerConfig::default() },
            TrainerConfig { gamma: 0.0, ..TrainerConfig::default() },
            TrainerConfig { gae_lambda: 1.5, ..TrainerConfig::default() },
            TrainerConfig { workers: 0, ..TrainerConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
