//! Diagonal Gaussian policy and state-value network.

use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::PpoError;
use crate::math;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// `ln(sqrt(2 pi))`
pub(crate) const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNetwork {
    /// Outputs the action mean followed by the log standard deviation.
    pub policy: Mlp,
    pub value: Mlp,
    pub action_dim: usize,
}

/// Action mean and clamped log standard deviation for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl ActionDistribution {
    pub fn log_prob(&self, action: &[f64]) -> f64 {
        gaussian_log_prob(&self.mean, &self.log_std, action)
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|l| l + 0.5 + HALF_LN_TWO_PI).sum()
    }
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, l), x)| {
            let z = (x - m) / math::exp(*l);
            -0.5 * z * z - l - HALF_LN_TWO_PI
        })
        .sum()
}

/// Action handed to the environment plus the quantities PPO stores with it.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyAction {
    /// Sample clamped to `[-1, 1]`.
    pub action: Vec<f64>,
    /// The sample before clamping; the log-probability refers to this.
    pub raw: Vec<f64>,
    pub log_prob: f64,
}

pub fn clamp_log_std(l: f64) -> f64 {
    l.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

impl PolicyNetwork {
    /// Tanh networks with the given hidden widths. The policy output layer is
    /// scaled down so initial means are near zero, and the log-std bias starts
    /// at `init_log_std`.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        init_log_std: f64,
        rng: &mut R,
    ) -> Self {
        let mut psizes = alloc::vec![obs_dim];
        psizes.extend_from_slice(hidden);
        psizes.push(2 * action_dim);
        let mut vsizes = alloc::vec![obs_dim];
        vsizes.extend_from_slice(hidden);
        vsizes.push(1);
        let mut policy = Mlp::init(&psizes, math::sqrt(2.0), 0.01, rng);
        let value = Mlp::init(&vsizes, math::sqrt(2.0), 1.0, rng);
        let n = policy.params.len();
        for b in &mut policy.params[n - action_dim..] {
            *b = init_log_std;
        }
        Self {
            policy,
            value,
            action_dim,
        }
    }

    pub fn zeros(obs_dim: usize, action_dim: usize, hidden: &[usize]) -> Self {
        let mut psizes = alloc::vec![obs_dim];
        psizes.extend_from_slice(hidden);
        let mut vsizes = psizes.clone();
        psizes.push(2 * action_dim);
        vsizes.push(1);
        Self {
            policy: Mlp::zeros(&psizes),
            value: Mlp::zeros(&vsizes),
            action_dim,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn distribution(&self, obs: &[f64]) -> ActionDistribution {
        let out = self.policy.evaluate(obs);
        let (mean, log_std) = out.split_at(self.action_dim);
        ActionDistribution {
            mean: mean.to_vec(),
            log_std: log_std.iter().map(|l| clamp_log_std(*l)).collect(),
        }
    }

    pub fn value_of(&self, obs: &[f64]) -> f64 {
        self.value.evaluate(obs)[0]
    }

    pub fn is_finite(&self) -> bool {
        self.policy.is_finite() && self.value.is_finite()
    }

    pub fn param_count(&self) -> usize {
        self.policy.params.len() + self.value.params.len()
    }
}

/// Samples (or, when `deterministic`, returns the mean of) the policy at an
/// already normalised observation.
pub fn policy_act<R: Rng + ?Sized>(
    net: &PolicyNetwork,
    obs: &[f64],
    deterministic: bool,
    rng: &mut R,
) -> Result<PolicyAction, PpoError> {
    if obs.len() != net.obs_dim() {
        return Err(PpoError::LengthMismatch {
            expected: net.obs_dim(),
            got: obs.len(),
        });
    }
    if !obs.iter().all(|x| x.is_finite()) {
        return Err(PpoError::NonFiniteObservation);
    }
    let dist = net.distribution(obs);
    let raw: Vec<f64> = if deterministic {
        dist.mean.clone()
    } else {
        dist.mean
            .iter()
            .zip(&dist.log_std)
            .map(|(m, l)| {
                let z: f64 = StandardNormal.sample(rng);
                m + math::exp(*l) * z
            })
            .collect()
    };
    let log_prob = dist.log_prob(&raw);
    Ok(PolicyAction {
        action: raw.iter().map(|a| a.clamp(-1.0, 1.0)).collect(),
        raw,
        log_prob,
    })
}

/// Differential entropy of a standard normal in one dimension.
pub fn unit_gaussian_entropy() -> f64 {
    0.5 * math::ln(2.0 * PI * core::f64::consts::E)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_standard_gaussian() {
        let net = PolicyNetwork::zeros(4, 2, &[8]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = policy_act(&net, &[0.1, 0.2, 0.3, 0.4], true, &mut rng).unwrap();
        assert_eq!(a.action, alloc::vec![0.0, 0.0]);
        // N(0, 1) density at 0, in two dimensions
        assert_eq!(a.log_prob, 2.0 * -HALF_LN_TWO_PI);
        let d = net.distribution(&[0.0; 4]);
        assert!((d.entropy() - 2.0 * unit_gaussian_entropy()).abs() < 1e-15);
    }

    #[test]
    fn deterministic_is_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = PolicyNetwork::new(5, 3, &[16, 16], -0.5, &mut rng);
        let obs = [0.3, -0.2, 1.0, 0.0, 0.7];
        let a = policy_act(&net, &obs, true, &mut rng).unwrap();
        let b = policy_act(&net, &obs, true, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_log_prob_matches_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = PolicyNetwork::new(5, 3, &[16], 0.3, &mut rng);
        let obs = [0.3, -0.2, 1.0, 0.0, 0.7];
        let d = net.distribution(&obs);
        for _ in 0..50 {
            let a = policy_act(&net, &obs, false, &mut rng).unwrap();
            // product of independent normal pdfs
            let mut density = 1.0;
            for i in 0..3 {
                let s = libm::exp(d.log_std[i]);
                let z = (a.raw[i] - d.mean[i]) / s;
                density *= libm::exp(-0.5 * z * z) / (s * libm::sqrt(2.0 * PI));
            }
            assert!((libm::log(density) - a.log_prob).abs() < 1e-9);
            assert!(a.action.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn log_std_is_clamped() {
        let mut net = PolicyNetwork::zeros(2, 1, &[]);
        let n = net.policy.params.len();
        net.policy.params[n - 1] = 10.0;
        assert_eq!(net.distribution(&[0.0, 0.0]).log_std, alloc::vec![LOG_STD_MAX]);
        net.policy.params[n - 1] = -10.0;
        assert_eq!(net.distribution(&[0.0, 0.0]).log_std, alloc::vec![LOG_STD_MIN]);
    }

    #[test]
    fn rejects_bad_observations() {
        let net = PolicyNetwork::zeros(2, 1, &[4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(policy_act(&net, &[f64::NAN, 0.0], true, &mut rng), Err(PpoError::NonFiniteObservation));
        assert!(matches!(policy_act(&net, &[0.0], true, &mut rng), Err(PpoError::LengthMismatch { .. })));
    }
}
