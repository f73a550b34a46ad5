//! The grasp environment as a learner-facing task.

use alloc::vec::Vec;

use super::{EnvError, EpisodeConfig, GraspEnv, OBS_DIM};
use crate::gripper::ACTION_DIM;
use crate::ppo::{EnvStep, Environment, PpoError};
use crate::randomize::{
    sample_rng, sample_stage1, sample_stage2, RandomizationConfig, RandomizationSample, Stage,
};
use crate::reward::{contact_reward, Outcome};
use crate::web::GraspType;

/// Draws attempted per episode before giving up on finding a valid start.
pub const MAX_DRAWS: usize = 64;

#[derive(Debug, Clone)]
pub struct GraspTask {
    pub config: EpisodeConfig,
    pub randomization: RandomizationConfig,
    pub grasp: GraspType,
    pub seed: u64,
    /// Discount used to value a held grasp after success.
    pub gamma: f64,
    env: Option<GraspEnv>,
}

impl GraspTask {
    pub fn new(
        config: EpisodeConfig,
        randomization: RandomizationConfig,
        grasp: GraspType,
        seed: u64,
        gamma: f64,
    ) -> Self {
        Self {
            config,
            randomization,
            grasp,
            seed,
            gamma,
            env: None,
        }
    }

    /// Discounted contact reward of a converged grasp held at its anchors
    /// forever, credited on success in place of the steps that are cut off.
    pub fn hold_value(&self, fingers: usize) -> f64 {
        let per_step = contact_reward(self.config.reward.theta, 0.0, &self.config.reward, &self.config.schedule);
        fingers as f64 * per_step * self.gamma / (1.0 - self.gamma).max(1e-6)
    }

    pub fn env(&self) -> Option<&GraspEnv> {
        self.env.as_ref()
    }

    /// First valid start pose drawn from the stream of episode `episode`.
    pub fn sample(&self, episode: u64, stage: Stage) -> Result<(RandomizationSample, GraspEnv), EnvError> {
        episode_sample(&self.config, &self.randomization, self.grasp, self.seed, episode, stage)
    }
}

pub fn episode_sample(
    config: &EpisodeConfig,
    randomization: &RandomizationConfig,
    grasp: GraspType,
    seed: u64,
    episode: u64,
    stage: Stage,
) -> Result<(RandomizationSample, GraspEnv), EnvError> {
    let mut rng = sample_rng(seed, episode);
    for _ in 0..MAX_DRAWS {
        let s = match stage {
            Stage::One => sample_stage1(&mut rng, grasp, randomization),
            Stage::Two => sample_stage2(&mut rng, grasp, randomization),
        }
        .map_err(|_| EnvError::InvalidSample("randomization failed"))?;
        if let Ok((env, _)) = GraspEnv::reset(config, &s) {
            return Ok((s, env));
        }
    }
    Err(EnvError::InvalidSample("no valid start pose found"))
}

impl Environment for GraspTask {
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    fn reset(&mut self, episode: u64, stage: Stage) -> Result<Vec<f64>, PpoError> {
        let (_, env) = self.sample(episode, stage)?;
        let obs = env.observe().to_array().to_vec();
        self.env = Some(env);
        Ok(obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, PpoError> {
        let hold = self.hold_value(self.grasp.fingers().len());
        let env = self.env.as_mut().ok_or(PpoError::Environment("step before reset".into()))?;
        if action.len() != ACTION_DIM {
            return Err(PpoError::LengthMismatch {
                expected: ACTION_DIM,
                got: action.len(),
            });
        }
        let mut a = [0.0; ACTION_DIM];
        a.copy_from_slice(action);
        let r = env.step_normalized(&a)?;
        let mut obs = r.observation;
        let mut reward = r.reward;
        let outcome = r.info.outcome;
        match outcome {
            Some(Outcome::Success) => reward += hold,
            // value the cut-off state as the running phase it came from
            Some(Outcome::Truncated) => obs.phase = [false, true],
            _ => {}
        }
        Ok(EnvStep {
            observation: obs.to_array().to_vec(),
            reward,
            done: r.done,
            bootstrap: outcome == Some(Outcome::Truncated),
            success: outcome == Some(Outcome::Success),
            penalized: env.state().penalized,
        })
    }
}
