//! The run configuration file: one TOML document with a section per module.

use std::fs;
use std::path::Path;

use graspweb_core::env::{EnvConfig, EpisodeConfig};
use graspweb_core::gripper::GripperModel;
use graspweb_core::ppo::TrainerConfig;
use graspweb_core::randomize::RandomizationConfig;
use graspweb_core::reward::{GuidanceSchedule, RewardConfig};
use graspweb_core::web::GraspType;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grasp: GraspType,
    pub seed: u64,
    pub gripper: GripperModel,
    pub reward: RewardConfig,
    pub schedule: GuidanceSchedule,
    pub env: EnvConfig,
    pub randomization: RandomizationConfig,
    pub trainer: TrainerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grasp: GraspType::ActiveForce,
            seed: 7,
            gripper: GripperModel::default(),
            reward: RewardConfig::default(),
            schedule: GuidanceSchedule::default(),
            env: EnvConfig::default(),
            randomization: RandomizationConfig::default(),
            trainer: TrainerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn episode(&self) -> EpisodeConfig {
        EpisodeConfig {
            gripper: self.gripper.clone(),
            reward: self.reward,
            schedule: self.schedule,
            env: self.env,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.episode().validate().map_err(|e| e.to_string())?;
        self.randomization.validate().map_err(|e| e.to_string())?;
        self.trainer.validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    /// Parses, applies `section.key=value` overrides, and validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, String> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = doc.try_into().map_err(|e: toml::de::Error| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, overrides).map_err(|message| Error::Config {
            path: path.display().to_string(),
            message,
        })
    }

    /// Hex SHA-256 of the canonical JSON form; recorded in every artifact.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Sets `section.key=value` (any depth) in a parsed document. The value is
/// read as a TOML value, falling back to a bare string.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), String> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override `{assignment}` is not of the form section.key=value"))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields one element");
    let mut table = doc;
    for k in parents {
        table = table
            .get_mut(*k)
            .and_then(toml::Value::as_table_mut)
            .ok_or_else(|| format!("override `{path}`: no section `{k}`"))?;
    }
    if !table.contains_key(*last) {
        return Err(format!("override `{path}`: unknown key `{last}`"));
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Inline documentation for the template, keyed by `section.key`.
const DOCS: &[(&str, &str)] = &[
    ("grasp", "active-force | passive-force | passive-form"),
    ("seed", "master seed for networks, rollouts and randomization"),
    ("gripper.palm_width", "lateral distance between the finger roots, m"),
    ("gripper.fingertip_radius", "fingertip sphere radius, m"),
    ("gripper.thumb_root_offset", "thumb root offset along hand x, m; nonzero breaks left/right symmetry"),
    ("gripper.joint_velocity_limit", "rad/s, every joint"),
    ("gripper.wrist_velocity_limit", "m/s along the approach axis"),
    ("gripper.wrist_travel", "forward wrist offset limit, m"),
    ("gripper.wrist_retreat", "backward wrist offset limit, m"),
    ("gripper.bind_finger.link_lengths", "m, root to tip"),
    ("gripper.bind_finger.joint_limits", "[low, high] per joint, rad"),
    ("gripper.thumb.link_lengths", "m; the first joint abducts"),
    ("gripper.thumb.joint_limits", "[low, high] per joint, rad"),
    ("reward.b_p", "approach baseline, m; must exceed any reachable distance"),
    ("reward.b_f", "direction baseline, rad; must exceed pi"),
    ("reward.r1", "drift penalty"),
    ("reward.r2", "avoiding penalty (timeout, object moved, plane collision); r2 > r1 > r3"),
    ("reward.r3", "lift-test failure penalty"),
    ("reward.theta", "contact directions converge below this angle, rad"),
    ("reward.max_approach_steps", "approach timeout while no finger has touched"),
    ("reward.object_motion_limit", "object displacement that ends the episode, m"),
    ("reward.max_episode_steps", "truncation without penalty"),
    ("reward.release_gap", "distance from the surface at which a touching finger loses contact, m"),
    ("schedule.k_initial", "guiding point distance from the contact at step 0, m"),
    ("schedule.k_decay_steps", "steps until the guiding point reaches the contact"),
    ("schedule.delta", "allowed deviation around the guiding point, m"),
    ("schedule.delta_hold", "post-contact hold tolerance, m"),
    ("env.dt", "control step, s (100 ms)"),
    ("env.approach_distance", "start distance of the hand from the recognised web centre, m (15 cm)"),
    ("env.push_compliance", "object translation per metre of fingertip penetration"),
    ("env.yaw_compliance", "object yaw per unit penetration moment, rad/m^2"),
    ("env.lift.mass", "kg"),
    ("env.lift.gravity", "m/s^2"),
    ("env.lift.friction", "Coulomb coefficient"),
    ("env.lift.friction_edges", "edges of the linearised friction cone"),
    ("env.lift.tolerance", "relative force-balance residual counted as exact"),
    ("randomization.zenith_deg", "approach zenith range, degrees"),
    ("randomization.azimuth_deg", "approach azimuth range, degrees"),
    ("randomization.noise_translation", "recognition error bound, m (5 mm)"),
    ("randomization.noise_rotation_deg", "recognition error bound, degrees (1.5)"),
    ("randomization.depth", "stage-2 object depth range, m"),
    ("randomization.width", "stage-2 object width range, m"),
    ("randomization.eps2", "stage-2 top-surface exponent range"),
    ("randomization.handle_size", "stage-2 handle depth and width range, m"),
    ("randomization.plane_clearance", "handle to plane gap for passive-form, m"),
    ("randomization.curriculum_window", "penalty-free episodes before stage 2"),
    ("randomization.canonical", "stage-1 object: full depth and width in m, top exponent"),
    ("randomization.handle", "stage-1 passive-form handle"),
    ("trainer.workers", "parallel rollout workers; GRASPWEB_WORKERS overrides"),
    ("trainer.horizon", "steps per worker per round"),
    ("trainer.total_steps", "environment step budget"),
    ("trainer.init_log_std", "initial action log standard deviation"),
    ("trainer.checkpoint_interval", "rounds between checkpoints; 0 keeps only the first and last"),
    ("trainer.curriculum", "advance to stage 2 after a penalty-free window"),
];

/// The default configuration with each documented key preceded by a comment.
pub fn template() -> String {
    let body = RunConfig::default().to_toml();
    let mut out = String::from("# graspweb run configuration. Lengths in metres, angles in radians unless noted.\n");
    let mut section = String::new();
    for line in body.lines() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.to_string();
            if let Some(doc) = lookup(&section) {
                out.push_str(&format!("# {doc}\n"));
            }
        } else if let Some((key, _)) = t.split_once(" = ") {
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if let Some(doc) = lookup(&full) {
                out.push_str(&format!("# {doc}\n"));
            }
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn lookup(key: &str) -> Option<&'static str> {
    DOCS.iter().find(|(k, _)| *k == key).map(|(_, d)| *d)
}
