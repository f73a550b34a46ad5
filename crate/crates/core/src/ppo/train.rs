//! Rollout collection and the training loop.
//!
//! Workers own an environment and a sampling RNG each. A round runs every
//! worker for `horizon` steps against a frozen copy of the network and
//! observation normaliser, merges the rollouts in worker order, applies one
//! PPO update and advances the curriculum. How the workers are executed is up
//! to a [`RolloutRunner`]; any runner that returns rollouts in worker order
//! gives the same result as [`SequentialRunner`].

use alloc::collections::VecDeque;
use alloc::string::ToString;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gae::compute_gae;
use super::normalize::RunningNorm;
use super::policy::{policy_act, PolicyNetwork};
use super::update::{ppo_update, Adam, Batch, TrainerConfig, UpdateStats};
use super::PpoError;
use crate::randomize::{update_curriculum, CurriculumState, Stage};

/// Outcome of one environment step as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// The episode ended without the future being worthless (time limit,
    /// success with a continuing reward), so its last state is bootstrapped.
    pub bootstrap: bool,
    pub success: bool,
    pub penalized: bool,
}

pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Starts the episode with global index `episode`.
    fn reset(&mut self, episode: u64, stage: Stage) -> Result<Vec<f64>, PpoError>;
    /// Advances with a normalised action in `[-1, 1]^action_dim`.
    fn step(&mut self, action: &[f64]) -> Result<EnvStep, PpoError>;
}

/// Serializable position of a ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Word position split into high and low halves.
    pub word_pos: [u64; 2],
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let pos = rng.get_word_pos();
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: [(pos >> 64) as u64, pos as u64],
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(((self.word_pos[0] as u128) << 64) | self.word_pos[1] as u128);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub total_return: f64,
    pub length: u32,
    pub success: bool,
    pub penalized: bool,
}

pub struct Worker<E> {
    pub index: usize,
    pub env: E,
    pub rng: ChaCha8Rng,
    /// Global index of the next episode this worker starts.
    pub next_episode: u64,
    stride: u64,
    current: Option<(Vec<f64>, u64, f64, u32)>,
}

impl<E: Environment> Worker<E> {
    pub fn new(index: usize, workers: usize, env: E, rng: ChaCha8Rng, next_episode: u64) -> Self {
        Self {
            index,
            env,
            rng,
            next_episode,
            stride: workers as u64,
            current: None,
        }
    }
}

/// One worker's contribution to a round.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rollout {
    pub raw_observations: Vec<f64>,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// One more than the number of steps.
    pub values: Vec<f64>,
    pub episodes: Vec<EpisodeSummary>,
}

pub fn collect_rollout<E: Environment>(
    worker: &mut Worker<E>,
    net: &PolicyNetwork,
    norm: &RunningNorm,
    horizon: usize,
    gamma: f64,
    stage: Stage,
) -> Result<Rollout, PpoError> {
    let mut r = Rollout::default();
    for _ in 0..horizon {
        let (obs, episode, ret, len) = match worker.current.take() {
            Some(c) => c,
            None => {
                let e = worker.next_episode;
                worker.next_episode += worker.stride;
                (worker.env.reset(e, stage)?, e, 0.0, 0)
            }
        };
        let nobs = norm.normalize(&obs);
        let value = net.value_of(&nobs);
        let act = policy_act(net, &nobs, false, &mut worker.rng)?;
        let step = worker.env.step(&act.action)?;
        let mut reward = step.reward;
        if step.done && step.bootstrap {
            reward += gamma * net.value_of(&norm.normalize(&step.observation));
        }
        r.raw_observations.extend_from_slice(&obs);
        r.observations.extend_from_slice(&nobs);
        r.actions.extend_from_slice(&act.raw);
        r.log_probs.push(act.log_prob);
        r.rewards.push(reward);
        r.dones.push(step.done);
        r.values.push(value);
        let ret = ret + step.reward;
        if step.done {
            r.episodes.push(EpisodeSummary {
                episode,
                total_return: ret,
                length: len + 1,
                success: step.success,
                penalized: step.penalized,
            });
        } else {
            worker.current = Some((step.observation, episode, ret, len + 1));
        }
    }
    let last = match &worker.current {
        Some((obs, ..)) => net.value_of(&norm.normalize(obs)),
        None => 0.0,
    };
    r.values.push(last);
    Ok(r)
}

/// Executes one collection round over all workers and returns the rollouts in
/// worker order.
pub trait RolloutRunner<E> {
    fn collect(
        &mut self,
        workers: &mut [Worker<E>],
        net: &PolicyNetwork,
        norm: &RunningNorm,
        horizon: usize,
        gamma: f64,
        stage: Stage,
    ) -> Result<Vec<Rollout>, PpoError>;
}

pub struct SequentialRunner;

impl<E: Environment> RolloutRunner<E> for SequentialRunner {
    fn collect(
        &mut self,
        workers: &mut [Worker<E>],
        net: &PolicyNetwork,
        norm: &RunningNorm,
        horizon: usize,
        gamma: f64,
        stage: Stage,
    ) -> Result<Vec<Rollout>, PpoError> {
        workers
            .iter_mut()
            .map(|w| collect_rollout(w, net, norm, horizon, gamma, stage))
            .collect()
    }
}

/// Everything needed to continue training: the payload of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub network: PolicyNetwork,
    pub optimizer: Adam,
    pub normalizer: RunningNorm,
    pub curriculum: CurriculumState,
    pub global_step: u64,
    pub round: u64,
    pub learner_rng: RngState,
    pub worker_rngs: Vec<RngState>,
    pub worker_next_episode: Vec<u64>,
    /// Most recent finished episodes, newest last.
    pub recent: VecDeque<EpisodeSummary>,
}

/// Episodes kept for the rolling metrics.
pub const METRICS_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub mean_return: f64,
    pub success_rate: f64,
    pub penalty_rate: f64,
    pub stage: u8,
    pub kl: f64,
    pub clip_frac: f64,
}

impl MetricsRow {
    pub const HEADER: [&'static str; 7] = [
        "step",
        "mean_return",
        "success_rate",
        "penalty_rate",
        "stage",
        "kl",
        "clip_frac",
    ];
}

fn worker_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5752_4b52_0000_0000);
    rng.set_stream(index as u64);
    rng
}

impl TrainerState {
    pub fn initial(config: &TrainerConfig, obs_dim: usize, action_dim: usize, window: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let network = PolicyNetwork::new(obs_dim, action_dim, &config.hidden, config.init_log_std, &mut rng);
        let optimizer = Adam::new(network.param_count());
        Self {
            network,
            optimizer,
            normalizer: RunningNorm::new(obs_dim),
            curriculum: CurriculumState::new(window),
            global_step: 0,
            round: 0,
            learner_rng: RngState::capture(&rng),
            worker_rngs: (0..config.workers).map(|w| RngState::capture(&worker_rng(seed, w))).collect(),
            worker_next_episode: (0..config.workers as u64).collect(),
            recent: VecDeque::new(),
        }
    }

    pub fn stage(&self, config: &TrainerConfig) -> Stage {
        if config.curriculum {
            self.curriculum.stage
        } else {
            Stage::One
        }
    }
}

pub struct Trainer<E> {
    pub config: TrainerConfig,
    pub workers: Vec<Worker<E>>,
    pub state: TrainerState,
}

impl<E: Environment> Trainer<E> {
    /// Starts from `state` (fresh or loaded). `envs` must hold one
    /// environment per configured worker.
    pub fn new(config: TrainerConfig, envs: Vec<E>, state: TrainerState) -> Result<Self, PpoError> {
        config.validate()?;
        if envs.len() != config.workers || state.worker_rngs.len() != config.workers {
            return Err(PpoError::InvalidConfig("one environment and RNG state per worker required"));
        }
        if let Some(e) = envs.first() {
            if e.obs_dim() != state.network.obs_dim() || e.action_dim() != state.network.action_dim {
                return Err(PpoError::InvalidConfig("environment and network dimensions differ"));
            }
        }
        let n = config.workers;
        let workers = envs
            .into_iter()
            .enumerate()
            .map(|(i, env)| {
                let next = state.worker_next_episode.get(i).copied().unwrap_or(i as u64);
                Worker::new(i, n, env, state.worker_rngs[i].restore(), next)
            })
            .collect();
        Ok(Self {
            config,
            workers,
            state,
        })
    }

    pub fn finished(&self) -> bool {
        self.state.global_step >= self.config.total_steps
    }

    /// One collection round plus update.
    pub fn round<R: RolloutRunner<E>>(&mut self, runner: &mut R) -> Result<(MetricsRow, UpdateStats), PpoError> {
        let cfg = &self.config;
        let stage = self.state.stage(cfg);
        let rollouts = runner.collect(
            &mut self.workers,
            &self.state.network,
            &self.state.normalizer,
            cfg.horizon,
            cfg.gamma,
            stage,
        )?;
        let net = &self.state.network;
        let mut batch = Batch {
            obs_dim: net.obs_dim(),
            action_dim: net.action_dim,
            ..Batch::default()
        };
        for r in &rollouts {
            let (adv, ret) = compute_gae(&r.rewards, &r.values, &r.dones, cfg.gamma, cfg.gae_lambda)?;
            batch.observations.extend_from_slice(&r.observations);
            batch.actions.extend_from_slice(&r.actions);
            batch.old_log_probs.extend_from_slice(&r.log_probs);
            batch.advantages.extend(adv);
            batch.returns.extend(ret);
        }
        let mut rng = self.state.learner_rng.restore();
        let stats = ppo_update(&mut self.state.network, &mut self.state.optimizer, &batch, cfg, &mut rng)?;
        self.state.learner_rng = RngState::capture(&rng);
        for r in &rollouts {
            self.state.normalizer.update(&r.raw_observations);
            for e in &r.episodes {
                self.state.curriculum = update_curriculum(&self.state.curriculum, e.penalized);
                if self.state.recent.len() == METRICS_WINDOW {
                    self.state.recent.pop_front();
                }
                self.state.recent.push_back(*e);
            }
        }
        self.state.global_step += batch.len() as u64;
        self.state.round += 1;
        self.state.worker_rngs = self.workers.iter().map(|w| RngState::capture(&w.rng)).collect();
        self.state.worker_next_episode = self.workers.iter().map(|w| w.next_episode).collect();
        Ok((self.metrics(&stats), stats))
    }

    pub fn metrics(&self, stats: &UpdateStats) -> MetricsRow {
        let recent = &self.state.recent;
        let n = recent.len().max(1) as f64;
        MetricsRow {
            step: self.state.global_step,
            mean_return: recent.iter().map(|e| e.total_return).sum::<f64>() / n,
            success_rate: recent.iter().filter(|e| e.success).count() as f64 / n,
            penalty_rate: recent.iter().filter(|e| e.penalized).count() as f64 / n,
            stage: self.state.stage(&self.config).number(),
            kl: stats.approx_kl,
            clip_frac: stats.clip_fraction,
        }
    }
}

/// Receives training artifacts as they are produced.
pub trait TrainSink {
    fn metrics(&mut self, row: &MetricsRow) -> Result<(), PpoError>;
    fn checkpoint(&mut self, state: &TrainerState) -> Result<(), PpoError>;
}

/// Runs rounds until the step budget is spent. Checkpoints are emitted before
/// the first round, every `checkpoint_interval` rounds and at the end.
pub fn train<E: Environment, R: RolloutRunner<E>, S: TrainSink>(
    trainer: &mut Trainer<E>,
    runner: &mut R,
    sink: &mut S,
) -> Result<(), PpoError> {
    sink.checkpoint(&trainer.state)?;
    let mut since = 0;
    while !trainer.finished() {
        let (row, _) = trainer.round(runner)?;
        sink.metrics(&row)?;
        since += 1;
        if trainer.config.checkpoint_interval > 0 && since == trainer.config.checkpoint_interval && !trainer.finished() {
            sink.checkpoint(&trainer.state)?;
            since = 0;
        }
    }
    if trainer.state.round > 0 && since > 0 {
        sink.checkpoint(&trainer.state)?;
    }
    Ok(())
}

/// Collects artifacts in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub rows: Vec<MetricsRow>,
    pub checkpoints: Vec<TrainerState>,
}

impl TrainSink for MemorySink {
    fn metrics(&mut self, row: &MetricsRow) -> Result<(), PpoError> {
        self.rows.push(*row);
        Ok(())
    }

    fn checkpoint(&mut self, state: &TrainerState) -> Result<(), PpoError> {
        self.checkpoints.push(state.clone());
        Ok(())
    }
}

/// Deterministic-mode success rate of `net` over the given episode indices.
pub fn evaluate_policy<E: Environment>(
    env: &mut E,
    net: &PolicyNetwork,
    norm: &RunningNorm,
    episodes: impl IntoIterator<Item = u64>,
    stage: Stage,
    max_steps: usize,
) -> Result<(usize, usize), PpoError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut wins, mut total) = (0, 0);
    for e in episodes {
        let mut obs = env.reset(e, stage)?;
        total += 1;
        for _ in 0..max_steps {
            let a = policy_act(net, &norm.normalize(&obs), true, &mut rng)?;
            let s = env.step(&a.action)?;
            if s.done {
                if s.success {
                    wins += 1;
                }
                break;
            }
            obs = s.observation;
        }
    }
    Ok((wins, total))
}

impl From<crate::env::EnvError> for PpoError {
    fn from(e: crate::env::EnvError) -> Self {
        PpoError::Environment(e.to_string())
    }
}
