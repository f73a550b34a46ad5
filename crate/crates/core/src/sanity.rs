//! Reach-a-point task for checking the learner: a point in the 8-D action
//! space moves by the (clamped) action each step and must get close to a
//! random target. Reward is the negative distance.

use alloc::vec::Vec;
use rand::Rng;

use crate::gripper::ACTION_DIM;
use crate::math;
use crate::ppo::{EnvStep, Environment, PpoError};
use crate::randomize::{sample_rng, Stage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachConfig {
    /// Displacement per step at full action.
    pub step_size: f64,
    /// Targets are drawn uniformly from `[-extent, extent]^8`.
    pub extent: f64,
    pub success_radius: f64,
    pub max_steps: u32,
}

impl Default for ReachConfig {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            extent: 0.8,
            success_radius: 0.1,
            max_steps: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReachTask {
    pub config: ReachConfig,
    pub seed: u64,
    point: [f64; ACTION_DIM],
    target: [f64; ACTION_DIM],
    steps: u32,
}

impl ReachTask {
    pub fn new(config: ReachConfig, seed: u64) -> Self {
        Self {
            config,
            seed,
            point: [0.0; ACTION_DIM],
            target: [0.0; ACTION_DIM],
            steps: 0,
        }
    }

    pub fn distance(&self) -> f64 {
        math::sqrt(
            self.point
                .iter()
                .zip(&self.target)
                .map(|(p, t)| (p - t) * (p - t))
                .sum(),
        )
    }

    fn observe(&self) -> Vec<f64> {
        let mut o = self.point.to_vec();
        o.extend(self.target.iter().zip(&self.point).map(|(t, p)| t - p));
        o
    }
}

impl Environment for ReachTask {
    fn obs_dim(&self) -> usize {
        2 * ACTION_DIM
    }

    fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    fn reset(&mut self, episode: u64, _stage: Stage) -> Result<Vec<f64>, PpoError> {
        let mut rng = sample_rng(self.seed, episode);
        let e = self.config.extent;
        self.point = [0.0; ACTION_DIM];
        for t in &mut self.target {
            *t = rng.random_range(-e..=e);
        }
        self.steps = 0;
        Ok(self.observe())
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, PpoError> {
        if action.len() != ACTION_DIM {
            return Err(PpoError::LengthMismatch {
                expected: ACTION_DIM,
                got: action.len(),
            });
        }
        for (p, a) in self.point.iter_mut().zip(action) {
            let a = if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) };
            *p += self.config.step_size * a;
        }
        self.steps += 1;
        let d = self.distance();
        let success = d < self.config.success_radius;
        let truncated = !success && self.steps >= self.config.max_steps;
        Ok(EnvStep {
            observation: self.observe(),
            reward: -d,
            done: success || truncated,
            bootstrap: truncated,
            success,
            penalized: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_controller_succeeds() {
        let mut t = ReachTask::new(ReachConfig::default(), 3);
        for e in 0..20 {
            let mut obs = t.reset(e, Stage::One).unwrap();
            loop {
                let a: Vec<f64> = obs[ACTION_DIM..].iter().map(|d| d / 0.1).collect();
                let s = t.step(&a).unwrap();
                if s.done {
                    assert!(s.success);
                    break;
                }
                obs = s.observation;
            }
        }
    }

    #[test]
    fn reward_is_negative_distance() {
        let mut t = ReachTask::new(ReachConfig::default(), 1);
        t.reset(0, Stage::One).unwrap();
        let s = t.step(&[0.0; ACTION_DIM]).unwrap();
        assert_eq!(s.reward, -t.distance());
        assert!(!s.done);
    }
}
