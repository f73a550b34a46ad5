//! JSONL trajectory logs and deterministic replay.
//!
//! The first line is a [`LogHeader`] with the episode config and sample; each
//! following line is one [`StepRecord`].

use std::fs;
use std::io::Write;
use std::path::Path;

use graspweb_core::env::{EpisodeConfig, GraspEnv, StepRecord};
use graspweb_core::eval::{EvalError, Policy};
use graspweb_core::randomize::RandomizationSample;
use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const LOG_MAGIC: &str = "graspweb-trajectory";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub magic: String,
    pub version: u32,
    pub config_hash: String,
    pub config: EpisodeConfig,
    pub sample: RandomizationSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub header: LogHeader,
    pub steps: Vec<StepRecord>,
}

/// Runs one episode under `policy`, recording every step.
pub fn record_episode<P: Policy + ?Sized>(
    config: &EpisodeConfig,
    sample: &RandomizationSample,
    config_hash: &str,
    policy: &mut P,
    max_steps: u32,
) -> Result<TrajectoryLog, EvalError> {
    let (mut env, obs) = GraspEnv::reset(config, sample)?;
    policy.begin(&env);
    let mut steps = Vec::new();
    let mut observation = obs.to_array().to_vec();
    for _ in 0..max_steps {
        let action = policy.act(&env)?;
        let r = env.step(&action)?;
        steps.push(StepRecord {
            step: env.state().step,
            phase: env.state().phase,
            observation,
            action,
            reward: r.reward,
            events: r.info.events,
        });
        observation = r.observation.to_array().to_vec();
        if r.done {
            break;
        }
    }
    Ok(TrajectoryLog {
        header: LogHeader {
            magic: LOG_MAGIC.into(),
            version: LOG_VERSION,
            config_hash: config_hash.into(),
            config: config.clone(),
            sample: sample.clone(),
        },
        steps,
    })
}

impl TrajectoryLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("step serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, Error> {
        let corrupt = |line: usize, message: String| Error::CorruptLog {
            path: path.display().to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| corrupt(1, "empty log".into()))?;
        let header: LogHeader = serde_json::from_str(first).map_err(|e| corrupt(1, e.to_string()))?;
        if header.magic != LOG_MAGIC || header.version != LOG_VERSION {
            return Err(corrupt(
                1,
                format!("expected {LOG_MAGIC} v{LOG_VERSION}, found {} v{}", header.magic, header.version),
            ));
        }
        let steps = lines
            .map(|(i, l)| serde_json::from_str::<StepRecord>(l).map_err(|e| corrupt(i + 1, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { header, steps })
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayReport {
    Identical { steps: usize },
    /// `step` is the 1-based step number of the first mismatch.
    Diverged { step: u32, reason: String },
}

impl std::fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReplayReport::Identical { steps } => write!(f, "identical ({steps} steps)"),
            ReplayReport::Diverged { step, reason } => write!(f, "diverged at step {step}: {reason}"),
        }
    }
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Re-simulates the logged actions, under the logged config or `config`, and
/// compares every observation, phase, reward and event bit for bit.
pub fn replay(log: &TrajectoryLog, config: Option<&EpisodeConfig>) -> ReplayReport {
    let config = config.unwrap_or(&log.header.config);
    let diverged = |step: u32, reason: String| ReplayReport::Diverged { step, reason };
    let (mut env, obs) = match GraspEnv::reset(config, &log.header.sample) {
        Ok(x) => x,
        Err(e) => return diverged(0, format!("reset failed: {e}")),
    };
    let mut observation = obs.to_array().to_vec();
    for (i, rec) in log.steps.iter().enumerate() {
        let step = i as u32 + 1;
        if rec.step != step {
            return diverged(step, format!("log records step {}", rec.step));
        }
        if !same_bits(&observation, &rec.observation) {
            return diverged(step, "observation differs".into());
        }
        if env.state().phase.is_terminated() {
            return diverged(step, "episode already terminated".into());
        }
        let r = match env.step(&rec.action) {
            Ok(r) => r,
            Err(e) => return diverged(step, format!("step failed: {e}")),
        };
        if env.state().phase != rec.phase {
            return diverged(step, format!("phase {:?}, logged {:?}", env.state().phase, rec.phase));
        }
        if r.reward.to_bits() != rec.reward.to_bits() {
            return diverged(step, format!("reward {}, logged {}", r.reward, rec.reward));
        }
        if r.info.events != rec.events {
            return diverged(step, "reward events differ".into());
        }
        observation = r.observation.to_array().to_vec();
    }
    ReplayReport::Identical { steps: log.steps.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use graspweb_core::eval::ScriptedPolicy;
    use graspweb_core::gripper::ACTION_DIM;
    use graspweb_core::randomize::{build_sample, RandomizationConfig, Stage};
    use graspweb_core::web::{ApproachDirection, GraspType, WebNoise};

    struct Wiggle(u32);

    impl Policy for Wiggle {
        fn act(&mut self, env: &GraspEnv) -> Result<[f64; ACTION_DIM], EvalError> {
            self.0 += 1;
            let mut a = [0.0; ACTION_DIM];
            for (j, x) in a.iter_mut().enumerate() {
                *x = 0.3 * ((self.0 * (j as u32 + 1)) as f64).sin();
            }
            a[ACTION_DIM - 1] = 0.1;
            Ok(env.scale_action(&a))
        }
    }

    fn log() -> TrajectoryLog {
        let rc = RandomizationConfig::default();
        let s = build_sample(
            rc.canonical.params().unwrap(),
            GraspType::ActiveForce,
            ApproachDirection::from_degrees(10.0, 5.0).unwrap(),
            WebNoise::zero(),
            rc.plane_clearance,
            Stage::One,
            3,
        )
        .unwrap();
        record_episode(&EpisodeConfig::default(), &s, "h", &mut Wiggle(0), 40).unwrap()
    }

    #[test]
    fn fresh_log_replays_identically() {
        let l = log();
        assert!(l.steps.len() > 13);
        let back = TrajectoryLog::parse(&l.to_jsonl(), Path::new("l")).unwrap();
        assert_eq!(back, l);
        let n = l.steps.len();
        assert_eq!(replay(&back, None), ReplayReport::Identical { steps: n });
        assert_eq!(replay(&back, None).to_string(), format!("identical ({n} steps)"));
    }

    #[test]
    fn perturbed_action_diverges_at_the_next_observation() {
        let mut l = log();
        l.steps[12].action[0] += 1e-3;
        match replay(&l, None) {
            // the action of step 13 shows in the reward of step 13
            ReplayReport::Diverged { step, .. } => assert_eq!(step, 13),
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn changed_defaults_report_divergence() {
        let l = log();
        let mut cfg = EpisodeConfig::default();
        cfg.reward.b_p = 2.0;
        assert!(matches!(replay(&l, Some(&cfg)), ReplayReport::Diverged { step: 1, .. }));
    }

    #[test]
    fn corrupt_logs_are_rejected() {
        let text = log().to_jsonl();
        let p = Path::new("l");
        assert!(matches!(TrajectoryLog::parse("", p), Err(Error::CorruptLog { line: 1, .. })));
        let mut lines: Vec<&str> = text.lines().collect();
        lines[3] = "{\"step\": ";
        match TrajectoryLog::parse(&lines.join("\n"), p) {
            Err(Error::CorruptLog { line: 4, .. }) => {}
            r => panic!("{r:?}"),
        }
        let bad = text.replacen(LOG_MAGIC, "other", 1);
        assert!(matches!(TrajectoryLog::parse(&bad, p), Err(Error::CorruptLog { line: 1, .. })));
    }

    #[test]
    fn scripted_logs_replay() {
        let rc = RandomizationConfig::default();
        let s = build_sample(
            rc.handle.params().unwrap(),
            GraspType::PassiveForm,
            ApproachDirection::from_degrees(0.0, 0.0).unwrap(),
            WebNoise::zero(),
            rc.plane_clearance,
            Stage::One,
            1,
        )
        .unwrap();
        let l = record_episode(&EpisodeConfig::default(), &s, "h", &mut ScriptedPolicy::default(), 200).unwrap();
        assert!(l.steps.last().unwrap().phase.is_terminated());
        assert_eq!(replay(&l, None), ReplayReport::Identical { steps: l.steps.len() });
    }
}
