//! The grasp episode: reset from a randomization sample, velocity actions,
//! contact detection, the quasi-static object, rewards and phase bookkeeping.
//!
//! Observations are expressed in the recognised web frame; rewards are
//! computed against the actual web, which follows the object when it is pushed.

pub mod contact;
pub mod lift;
pub mod task;

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{EnvironmentalPlane, SuperquadricObject};
use crate::gripper::{
    apply_action, forward_kinematics_unchecked, mount_pose, wrist_pose, FingerContactState,
    GripperError, GripperModel, GripperState, ACTION_DIM, JOINT_COUNT,
};
use crate::math::{Pose, Vec3};
use crate::randomize::RandomizationSample;
use crate::reward::{
    step_reward, FingerTrack, GuidanceSchedule, Outcome, Phase, RewardConfig, RewardError,
    RewardEvent, StepContext,
};
use crate::web::{ApproachDirection, ContactWeb, GraspType};

pub use lift::LiftTestConfig;
pub use task::{episode_sample, GraspTask};

pub const OBS_DIM: usize = 31;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid sample: {0}")]
    InvalidSample(&'static str),
    #[error("step called on a terminated episode")]
    SteppedTerminatedEpisode,
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Gripper(#[from] GripperError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Control period, seconds.
    pub dt: f64,
    /// Start distance of the wrist from the recognised web centre, metres.
    pub approach_distance: f64,
    /// Object translation per metre of net fingertip penetration.
    pub push_compliance: f64,
    /// Object yaw (radians) per unit penetration moment (m^2).
    pub yaw_compliance: f64,
    pub lift: LiftTestConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            approach_distance: 0.15,
            push_compliance: 0.5,
            yaw_compliance: 10.0,
            lift: LiftTestConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.dt > 0.0) {
            return Err(EnvError::InvalidConfig("dt must be positive"));
        }
        if !(self.approach_distance > 0.0) {
            return Err(EnvError::InvalidConfig("approach distance must be positive"));
        }
        if !(self.push_compliance >= 0.0) || !(self.yaw_compliance >= 0.0) {
            return Err(EnvError::InvalidConfig("compliances must be non-negative"));
        }
        let l = &self.lift;
        if !(l.mass > 0.0) || !(l.gravity >= 0.0) || !(l.friction >= 0.0) || l.friction_edges < 3 {
            return Err(EnvError::InvalidConfig("lift test needs positive mass and at least 3 cone edges"));
        }
        if !(l.tolerance > 0.0) {
            return Err(EnvError::InvalidConfig("lift tolerance must be positive"));
        }
        Ok(())
    }
}

/// Everything an episode needs besides its randomization sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub gripper: GripperModel,
    pub reward: RewardConfig,
    pub schedule: GuidanceSchedule,
    pub env: EnvConfig,
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        self.gripper.validate()?;
        self.reward.validate()?;
        self.schedule.validate()?;
        self.env.validate()?;
        // loose bound on any fingertip-to-guiding-point distance
        let reach = self.env.approach_distance
            + self.gripper.wrist_retreat
            + self.gripper.max_reach()
            + self.schedule.k_initial
            + self.reward.object_motion_limit
            + 0.1;
        self.reward.validate_reach(reach)?;
        Ok(())
    }
}

/// Policy input, all in the recognised web frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Bind fingertip, thumb tip and palm positions.
    pub positions: [Vec3; 3],
    /// First two columns of the wrist rotation.
    pub wrist_rotation: [f64; 6],
    pub zenith: f64,
    pub azimuth: f64,
    pub tactile: [bool; 3],
    /// One-hot of approach / contact-to-grasp; both zero once terminated.
    pub phase: [bool; 2],
    pub joint_angles: [f64; JOINT_COUNT],
    pub wrist_offset: f64,
    /// Steps taken as a fraction of the episode limit.
    pub elapsed: f64,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        let mut v = [0.0; OBS_DIM];
        let mut i = 0;
        let mut push = |x: f64| {
            v[i] = x;
            i += 1;
        };
        for p in &self.positions {
            push(p.x);
            push(p.y);
            push(p.z);
        }
        self.wrist_rotation.iter().for_each(|x| push(*x));
        push(self.zenith);
        push(self.azimuth);
        self.tactile.iter().for_each(|t| push(if *t { 1.0 } else { 0.0 }));
        self.phase.iter().for_each(|t| push(if *t { 1.0 } else { 0.0 }));
        self.joint_angles.iter().for_each(|x| push(*x));
        push(self.wrist_offset);
        push(self.elapsed);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub phase: Phase,
    pub step: u32,
    /// One track per web contact, in web order.
    pub tracks: Vec<FingerTrack>,
    pub object_pose: Pose,
    pub initial_object_pose: Pose,
    pub seed: u64,
    pub penalized: bool,
    pub total_reward: f64,
}

impl EpisodeState {
    pub fn outcome(&self) -> Option<Outcome> {
        match self.phase {
            Phase::Terminated(o) => Some(o),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub events: Vec<RewardEvent>,
    pub finger_rewards: Vec<f64>,
    pub outcome: Option<Outcome>,
    pub object_displacement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
pub struct GraspEnv {
    config: EpisodeConfig,
    sample: RandomizationSample,
    mount: Pose,
    gripper: GripperState,
    object: SuperquadricObject,
    contacts: FingerContactState,
    state: EpisodeState,
}

/// Wrist mount on the sphere of radius `distance` around the web centre.
pub fn start_mount(web: &ContactWeb, approach: &ApproachDirection, distance: f64) -> Pose {
    let dir = web.frame.transform_vector(&approach.unit_vector());
    mount_pose(
        &web.center(),
        &dir,
        distance,
        &web.frame.axis(1),
        &web.frame.axis(0),
    )
}

impl GraspEnv {
    pub fn reset(config: &EpisodeConfig, sample: &RandomizationSample) -> Result<(Self, Observation), EnvError> {
        let mount = start_mount(&sample.recognized_web, &sample.approach, config.env.approach_distance);
        let gripper = GripperState::rest();
        let mut contacts = forward_kinematics_unchecked(&config.gripper, &mount, &gripper);
        let r = config.gripper.fingertip_radius;
        for cp in &contacts.points {
            if sample.object.signed_distance(&cp.position) < r {
                return Err(EnvError::InvalidSample("start pose penetrates the object"));
            }
            if let Some(pl) = &sample.plane {
                if contact::sphere_hits_plane(pl, &cp.position, r) {
                    return Err(EnvError::InvalidSample("start pose penetrates the plane"));
                }
            }
        }
        contact::detect_contacts(&sample.object, sample.plane.as_ref(), r, &mut contacts);
        let tracks = sample
            .actual_web
            .grasp_type
            .fingers()
            .iter()
            .map(|f| FingerTrack::new(*f))
            .collect();
        let env = Self {
            config: config.clone(),
            sample: sample.clone(),
            mount,
            gripper,
            object: sample.object,
            contacts,
            state: EpisodeState {
                phase: Phase::Approach,
                step: 0,
                tracks,
                object_pose: sample.object.pose,
                initial_object_pose: sample.object.pose,
                seed: sample.seed,
                penalized: false,
                total_reward: 0.0,
            },
        };
        let obs = env.observe();
        Ok((env, obs))
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn sample(&self) -> &RandomizationSample {
        &self.sample
    }

    pub fn state(&self) -> &EpisodeState {
        &self.state
    }

    pub fn gripper_state(&self) -> &GripperState {
        &self.gripper
    }

    pub fn contacts(&self) -> &FingerContactState {
        &self.contacts
    }

    pub fn object(&self) -> &SuperquadricObject {
        &self.object
    }

    pub fn plane(&self) -> Option<&EnvironmentalPlane> {
        self.sample.plane.as_ref()
    }

    pub fn mount(&self) -> &Pose {
        &self.mount
    }

    pub fn grasp_type(&self) -> GraspType {
        self.sample.actual_web.grasp_type
    }

    /// The actual web carried along with the object's motion.
    pub fn actual_web(&self) -> ContactWeb {
        let motion = self.object.pose.compose(&self.state.initial_object_pose.inverse());
        self.sample.actual_web.transformed(&motion)
    }

    pub fn recognized_web(&self) -> &ContactWeb {
        &self.sample.recognized_web
    }

    pub fn object_displacement(&self) -> f64 {
        (self.object.pose.translation - self.state.initial_object_pose.translation).norm()
    }

    pub fn observe(&self) -> Observation {
        let web = &self.sample.recognized_web;
        let positions = [0, 1, 2].map(|i| web.to_local_point(&self.contacts.points[i].position));
        let wrist = wrist_pose(&self.mount, self.gripper.wrist_offset);
        let rel = web.frame.rotation.inverse() * wrist.rotation;
        let m = rel.to_rotation_matrix();
        let m = m.matrix();
        let phase = match self.state.phase {
            Phase::Approach => [true, false],
            Phase::ContactToGrasp | Phase::Evaluate => [false, true],
            Phase::Terminated(_) => [false, false],
        };
        Observation {
            positions,
            wrist_rotation: [m[(0, 0)], m[(1, 0)], m[(2, 0)], m[(0, 1)], m[(1, 1)], m[(2, 1)]],
            zenith: self.sample.approach.zenith,
            azimuth: self.sample.approach.azimuth,
            tactile: [0, 1, 2].map(|i| self.contacts.points[i].in_contact),
            phase,
            joint_angles: self.gripper.joint_angles,
            wrist_offset: self.gripper.wrist_offset,
            elapsed: self.state.step as f64 / self.config.reward.max_episode_steps as f64,
        }
    }

    /// Maps a normalised action in `[-1, 1]^8` to velocity commands.
    pub fn scale_action(&self, normalized: &[f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
        let limits = self.config.gripper.action_limits();
        let mut a = [0.0; ACTION_DIM];
        for i in 0..ACTION_DIM {
            let v = if normalized[i].is_nan() { 0.0 } else { normalized[i].clamp(-1.0, 1.0) };
            a[i] = v * limits[i];
        }
        a
    }

    /// Advances one control step with velocity commands (rad/s, m/s).
    pub fn step(&mut self, action: &[f64; ACTION_DIM]) -> Result<StepResult, EnvError> {
        if self.state.phase.is_terminated() {
            return Err(EnvError::SteppedTerminatedEpisode);
        }
        let cfg = &self.config;
        let r = cfg.gripper.fingertip_radius;
        self.gripper = apply_action(&cfg.gripper, &self.gripper, action, cfg.env.dt);
        self.state.step += 1;

        let mut contacts = forward_kinematics_unchecked(&cfg.gripper, &self.mount, &self.gripper);
        self.object.pose = contact::push_object(
            &self.object,
            &contacts,
            r,
            cfg.env.push_compliance,
            cfg.env.yaw_compliance,
        );
        self.state.object_pose = self.object.pose;
        let plane_hit = contact::detect_contacts(&self.object, self.sample.plane.as_ref(), r, &mut contacts);
        self.contacts = contacts;

        let web = self.actual_web();
        let displacement = self.object_displacement();
        let object = self.object;
        let plane = self.sample.plane;
        let contacts = self.contacts;
        let theta = cfg.reward.theta;
        let lift_cfg = cfg.env.lift;
        let mut evaluate = || match web.grasp_type {
            GraspType::PassiveForm => match &plane {
                Some(pl) => lift::evaluate_form_closure(&object, pl, &contacts, &web, theta, r),
                None => false,
            },
            _ => lift::lift_test(&object, &contacts, &web, theta, r, &lift_cfg),
        };
        let ctx = StepContext {
            phase: self.state.phase,
            step: self.state.step,
            tracks: &self.state.tracks,
            contacts: &self.contacts,
            web: &web,
            object_displacement: displacement,
            plane_collision: plane_hit,
        };
        let out = step_reward(&ctx, &cfg.reward, &cfg.schedule, &mut evaluate);

        for event in &out.events {
            if let RewardEvent::FingerContacted { finger, anchor } = event {
                if let Some(t) = self.state.tracks.iter_mut().find(|t| t.finger == *finger) {
                    t.contact_step = Some(self.state.step);
                    t.anchor = Some(*anchor);
                }
            }
            if event.is_penalty() {
                self.state.penalized = true;
            }
            self.state.phase = self.state.phase.on_event(event);
        }
        self.state.total_reward += out.reward;
        let outcome = self.state.outcome();
        Ok(StepResult {
            observation: self.observe(),
            reward: out.reward,
            done: outcome.is_some(),
            info: StepInfo {
                events: out.events,
                finger_rewards: out.finger_rewards,
                outcome,
                object_displacement: displacement,
            },
        })
    }

    pub fn step_normalized(&mut self, normalized: &[f64; ACTION_DIM]) -> Result<StepResult, EnvError> {
        let a = self.scale_action(normalized);
        self.step(&a)
    }
}

/// One line of a trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub phase: Phase,
    pub observation: Vec<f64>,
    pub action: [f64; ACTION_DIM],
    pub reward: f64,
    pub events: Vec<RewardEvent>,
}
