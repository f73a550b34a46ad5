//! Robustness sweeps: success of a fixed policy over grids of object shapes
//! and approach directions.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, EpisodeConfig, GraspEnv};
use crate::geometry::{SuperquadricParams, EPS_MIN};
use crate::gripper::ACTION_DIM;
use crate::ppo::{policy_act, PolicyNetwork, PpoError, RunningNorm};
use crate::randomize::{build_sample, sample_rng, RandomizationConfig, RandomizationSample, ShapeSpec, Stage};
use crate::reward::Outcome;
use crate::scripted::ScriptedGrasp;
use crate::web::{ApproachDirection, GraspType, WebNoise};

/// Stream index of the shared noise patterns, disjoint from episode streams.
const NOISE_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid sweep spec: {0}")]
    InvalidSpec(String),
    #[error("policy failed: {0}")]
    Policy(#[from] PpoError),
    #[error("environment failed: {0}")]
    Env(#[from] EnvError),
}

/// Swept quantity. Lengths are metres, angles degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisName {
    Depth,
    Width,
    Eps2,
    Zenith,
    Azimuth,
}

impl AxisName {
    pub fn name(self) -> &'static str {
        match self {
            AxisName::Depth => "depth",
            AxisName::Width => "width",
            AxisName::Eps2 => "eps2",
            AxisName::Zenith => "zenith",
            AxisName::Azimuth => "azimuth",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: AxisName,
    pub values: Vec<f64>,
}

/// Values used for every quantity that is not swept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedParams {
    pub shape: ShapeSpec,
    pub zenith_deg: f64,
    pub azimuth_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub grasp: GraspType,
    /// Cells are the cartesian product of the axes, last axis fastest.
    pub axes: Vec<Axis>,
    pub fixed: FixedParams,
    /// With noise on, every cell runs the same `noise_samples` perturbations
    /// of the recognised web; with noise off it runs `trials` clean episodes.
    pub noise: bool,
    pub noise_samples: usize,
    pub trials: usize,
    pub seed: u64,
    pub max_steps: u32,
    /// Policy checkpoint the sweep evaluates, if any.
    #[serde(default)]
    pub checkpoint: Option<String>,
}

const DEPTHS: [f64; 5] = [0.02, 0.03, 0.04, 0.05, 0.06];
const WIDTHS: [f64; 5] = [0.06, 0.07, 0.08, 0.09, 0.10];

impl SweepSpec {
    /// Depth × width × top-surface exponent at the straight-down approach.
    pub fn shape_grid(grasp: GraspType, noise: bool, seed: u64) -> Self {
        let canonical = RandomizationConfig::default().canonical;
        Self {
            grasp,
            axes: vec![
                Axis {
                    name: AxisName::Depth,
                    values: DEPTHS.to_vec(),
                },
                Axis {
                    name: AxisName::Width,
                    values: WIDTHS.to_vec(),
                },
                Axis {
                    name: AxisName::Eps2,
                    values: vec![EPS_MIN, 1.0, 2.0],
                },
            ],
            fixed: FixedParams {
                shape: canonical,
                zenith_deg: 0.0,
                azimuth_deg: 0.0,
            },
            noise,
            noise_samples: 16,
            trials: 1,
            seed,
            max_steps: 200,
            checkpoint: None,
        }
    }

    /// Zenith × azimuth grid on one object, noise off.
    pub fn approach_grid(grasp: GraspType, shape: ShapeSpec, seed: u64) -> Self {
        Self {
            grasp,
            axes: vec![
                Axis {
                    name: AxisName::Zenith,
                    values: (0..7).map(|i| 10.0 * i as f64).collect(),
                },
                Axis {
                    name: AxisName::Azimuth,
                    values: (0..7).map(|i| -45.0 + 15.0 * i as f64).collect(),
                },
            ],
            fixed: FixedParams {
                shape,
                zenith_deg: 0.0,
                azimuth_deg: 0.0,
            },
            noise: false,
            noise_samples: 16,
            trials: 1,
            seed,
            max_steps: 200,
            checkpoint: None,
        }
    }

    /// The three probe objects of the approach sweep: wide box, narrow box
    /// and wide box with a rounded top.
    pub fn probe_objects() -> [ShapeSpec; 3] {
        [
            ShapeSpec {
                depth: 0.04,
                width: 0.10,
                eps2: EPS_MIN,
            },
            ShapeSpec {
                depth: 0.04,
                width: 0.06,
                eps2: EPS_MIN,
            },
            ShapeSpec {
                depth: 0.04,
                width: 0.10,
                eps2: 2.0,
            },
        ]
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidSpec(m.into()));
        if self.axes.iter().any(|a| a.values.is_empty()) {
            return bad("every axis needs at least one value");
        }
        for (i, a) in self.axes.iter().enumerate() {
            if self.axes[..i].iter().any(|b| b.name == a.name) {
                return bad("an axis appears twice");
            }
            if a.values.iter().any(|v| !v.is_finite()) {
                return bad("axis values must be finite");
            }
        }
        if self.trials_per_cell() == 0 {
            return bad("at least one trial per cell is required");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        for cell in 0..self.cell_count() {
            self.cell_shape(cell)
                .params()
                .map_err(|e| EvalError::InvalidSpec(alloc::format!("cell {cell}: {e}")))?;
            let (z, a) = self.cell_approach(cell);
            if ApproachDirection::from_degrees(z, a).is_none() {
                return bad("approach direction out of range");
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn trials_per_cell(&self) -> usize {
        if self.noise {
            self.noise_samples
        } else {
            self.trials
        }
    }

    /// Axis values of cell `cell`, in axis order.
    pub fn cell_coords(&self, cell: usize) -> Vec<f64> {
        let mut rest = cell;
        let mut out = vec![0.0; self.axes.len()];
        for (i, a) in self.axes.iter().enumerate().rev() {
            out[i] = a.values[rest % a.values.len()];
            rest /= a.values.len();
        }
        out
    }

    fn value(&self, cell: usize, name: AxisName) -> Option<f64> {
        let coords = self.cell_coords(cell);
        self.axes.iter().position(|a| a.name == name).map(|i| coords[i])
    }

    pub fn cell_shape(&self, cell: usize) -> ShapeSpec {
        let f = self.fixed.shape;
        ShapeSpec {
            depth: self.value(cell, AxisName::Depth).unwrap_or(f.depth),
            width: self.value(cell, AxisName::Width).unwrap_or(f.width),
            eps2: self.value(cell, AxisName::Eps2).unwrap_or(f.eps2),
        }
    }

    /// Zenith and azimuth of cell `cell` in degrees.
    pub fn cell_approach(&self, cell: usize) -> (f64, f64) {
        (
            self.value(cell, AxisName::Zenith).unwrap_or(self.fixed.zenith_deg),
            self.value(cell, AxisName::Azimuth).unwrap_or(self.fixed.azimuth_deg),
        )
    }

    /// The perturbations shared by all cells: drawn once from a stream fixed
    /// by the seed, or a single zero perturbation per trial when noise is off.
    pub fn noise_patterns(&self, randomization: &RandomizationConfig) -> Vec<WebNoise> {
        if !self.noise {
            return vec![WebNoise::zero(); self.trials];
        }
        let mut rng = sample_rng(self.seed, NOISE_STREAM);
        (0..self.noise_samples)
            .map(|_| WebNoise::sample(&mut rng, randomization.noise_translation, randomization.max_rotation()))
            .collect()
    }

    pub fn sample(
        &self,
        randomization: &RandomizationConfig,
        cell: usize,
        trial: usize,
        noise: WebNoise,
    ) -> Result<RandomizationSample, EvalError> {
        let params = self
            .cell_shape(cell)
            .params()
            .map_err(|e| EvalError::InvalidSpec(alloc::format!("{e}")))?;
        self.sample_with(params, randomization, cell, trial, noise)
    }

    fn sample_with(
        &self,
        params: SuperquadricParams,
        randomization: &RandomizationConfig,
        cell: usize,
        trial: usize,
        noise: WebNoise,
    ) -> Result<RandomizationSample, EvalError> {
        let (z, a) = self.cell_approach(cell);
        let approach = ApproachDirection::from_degrees(z, a)
            .ok_or_else(|| EvalError::InvalidSpec("approach direction out of range".into()))?;
        build_sample(
            params,
            self.grasp,
            approach,
            noise,
            randomization.plane_clearance,
            Stage::Two,
            trial_seed(self.seed, cell as u64, trial as u64),
        )
        .map_err(|e| EvalError::InvalidSpec(alloc::format!("{e}")))
    }
}

/// Seed of one trial, mixed from the sweep seed and the trial's position.
pub fn trial_seed(seed: u64, cell: u64, trial: u64) -> u64 {
    let mut x = seed;
    for v in [cell, trial] {
        x = splitmix(x ^ splitmix(v));
    }
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Closed-loop controller evaluated by the sweeps.
pub trait Policy {
    /// Called once per episode after reset.
    fn begin(&mut self, _env: &GraspEnv) {}
    /// Physical joint and wrist velocity command for the next step.
    fn act(&mut self, env: &GraspEnv) -> Result<[f64; ACTION_DIM], EvalError>;
}

/// A trained network acting on its mean action.
#[derive(Debug, Clone)]
pub struct NetworkPolicy<'a> {
    pub network: &'a PolicyNetwork,
    pub normalizer: &'a RunningNorm,
    rng: ChaCha8Rng,
}

impl<'a> NetworkPolicy<'a> {
    pub fn new(network: &'a PolicyNetwork, normalizer: &'a RunningNorm) -> Self {
        Self {
            network,
            normalizer,
            // unused in deterministic mode
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Policy for NetworkPolicy<'_> {
    fn act(&mut self, env: &GraspEnv) -> Result<[f64; ACTION_DIM], EvalError> {
        let obs = self.normalizer.normalize(&env.observe().to_array());
        let a = policy_act(self.network, &obs, true, &mut self.rng)?;
        let mut n = [0.0; ACTION_DIM];
        if a.action.len() != ACTION_DIM {
            return Err(PpoError::LengthMismatch {
                expected: ACTION_DIM,
                got: a.action.len(),
            }
            .into());
        }
        n.copy_from_slice(&a.action);
        Ok(env.scale_action(&n))
    }
}

/// The inverse-kinematics grasp planned from the true contact web.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    pub close_start: u32,
    plan: Option<ScriptedGrasp>,
}

impl ScriptedPolicy {
    pub fn new(close_start: u32) -> Self {
        Self { close_start, plan: None }
    }
}

impl Default for ScriptedPolicy {
    fn default() -> Self {
        Self::new(52)
    }
}

impl Policy for ScriptedPolicy {
    fn begin(&mut self, env: &GraspEnv) {
        self.plan = Some(ScriptedGrasp::plan(env, self.close_start));
    }

    fn act(&mut self, env: &GraspEnv) -> Result<[f64; ACTION_DIM], EvalError> {
        match &self.plan {
            Some(p) => Ok(p.action(env)),
            None => Err(EvalError::InvalidSpec("scripted policy used before begin".into())),
        }
    }
}

/// Runs one episode to termination or `max_steps`. A sample without a valid
/// start pose counts as a placement failure.
pub fn run_episode<P: Policy + ?Sized>(
    config: &EpisodeConfig,
    sample: &RandomizationSample,
    policy: &mut P,
    max_steps: u32,
) -> Result<Outcome, EvalError> {
    let Ok((mut env, _)) = GraspEnv::reset(config, sample) else {
        return Ok(Outcome::PlacementFail);
    };
    policy.begin(&env);
    for _ in 0..max_steps {
        let a = policy.act(&env)?;
        let r = env.step(&a)?;
        if let Some(o) = r.info.outcome {
            return Ok(o);
        }
    }
    Ok(Outcome::Truncated)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub noise: WebNoise,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: usize,
    /// Axis values in axis order.
    pub coords: Vec<f64>,
    pub successes: usize,
    pub trials: Vec<TrialResult>,
}

impl CellResult {
    pub fn success_rate(&self) -> f64 {
        if self.trials.is_empty() {
            0.0
        } else {
            self.successes as f64 / self.trials.len() as f64
        }
    }

    /// Most frequent outcome, ties broken by the fixed outcome order.
    pub fn dominant_outcome(&self) -> Option<Outcome> {
        Outcome::ALL
            .iter()
            .map(|o| (self.trials.iter().filter(|t| t.outcome == *o).count(), *o))
            .filter(|(n, _)| *n > 0)
            .fold(None, |best: Option<(usize, Outcome)>, c| match best {
                Some(b) if b.0 >= c.0 => Some(b),
                _ => Some(c),
            })
            .map(|(_, o)| o)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessMatrix {
    pub spec: SweepSpec,
    pub cells: Vec<CellResult>,
    /// Hash of the run configuration that produced the matrix.
    #[serde(default)]
    pub config_hash: String,
}

impl SuccessMatrix {
    pub fn total_successes(&self) -> usize {
        self.cells.iter().map(|c| c.successes).sum()
    }

    pub fn total_trials(&self) -> usize {
        self.cells.iter().map(|c| c.trials.len()).sum()
    }
}

/// Runs every trial of one cell.
pub fn run_cell<P: Policy + ?Sized>(
    spec: &SweepSpec,
    config: &EpisodeConfig,
    randomization: &RandomizationConfig,
    noise: &[WebNoise],
    cell: usize,
    policy: &mut P,
) -> Result<CellResult, EvalError> {
    let mut trials = Vec::with_capacity(noise.len());
    for (t, n) in noise.iter().enumerate() {
        let sample = spec.sample(randomization, cell, t, *n)?;
        let outcome = run_episode(config, &sample, policy, spec.max_steps)?;
        trials.push(TrialResult {
            seed: sample.seed,
            noise: *n,
            outcome,
        });
    }
    Ok(CellResult {
        index: cell,
        coords: spec.cell_coords(cell),
        successes: trials.iter().filter(|t| t.outcome == Outcome::Success).count(),
        trials,
    })
}

/// Runs the whole grid in cell order.
pub fn run_sweep<P: Policy + ?Sized>(
    spec: &SweepSpec,
    config: &EpisodeConfig,
    randomization: &RandomizationConfig,
    policy: &mut P,
) -> Result<SuccessMatrix, EvalError> {
    spec.validate()?;
    let noise = spec.noise_patterns(randomization);
    let cells = (0..spec.cell_count())
        .map(|c| run_cell(spec, config, randomization, &noise, c, policy))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SuccessMatrix {
        spec: spec.clone(),
        cells,
        config_hash: String::new(),
    })
}

/// The shape grid: 75 cells, one clean trial or 16 shared noise samples each.
pub fn run_shape_sweep<P: Policy + ?Sized>(
    grasp: GraspType,
    noise: bool,
    seed: u64,
    config: &EpisodeConfig,
    randomization: &RandomizationConfig,
    policy: &mut P,
) -> Result<SuccessMatrix, EvalError> {
    run_sweep(&SweepSpec::shape_grid(grasp, noise, seed), config, randomization, policy)
}

/// One zenith × azimuth matrix per probe object.
pub fn run_approach_sweep<P: Policy + ?Sized>(
    grasp: GraspType,
    seed: u64,
    config: &EpisodeConfig,
    randomization: &RandomizationConfig,
    policy: &mut P,
) -> Result<Vec<SuccessMatrix>, EvalError> {
    SweepSpec::probe_objects()
        .iter()
        .map(|shape| run_sweep(&SweepSpec::approach_grid(grasp, *shape, seed), config, randomization, policy))
        .collect()
}
