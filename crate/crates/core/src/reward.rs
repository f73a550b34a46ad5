//! Contact-web rewards, avoiding penalties and the episode phase machine.
//!
//! Per assigned finger `i` with web contact `(c_i, n_i)`:
//!
//! ```text
//! guiding point  g_i(t) = c_i - k_t n_i             (on the free side of the surface)
//! d_p(p_i, t)    = max(|p_i - g_i(t)| - delta_t, 0)
//! d_f(f_i)       = acos(f_i . n_i)
//! approach       = log(b_p - d_p(p_i, t))
//! contact        = log(b_f - d_f) + log(b_p - d_p(p_i, T))   if d_p(p_i, T) < delta_T
//!                = -r1                                       otherwise
//! ```
//!
//! where `T` is the step at which the finger first touched the object. Log
//! arguments are floored at [`LOG_FLOOR`].

use alloc::vec::Vec;
use core::f64::consts::PI;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gripper::{Finger, FingerContactState};
use crate::math::{self, Vec3};
use crate::web::{ContactWeb, WebContact};

pub const LOG_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("input direction is not unit length (norms {0}, {1})")]
    NonUnitInput(f64, f64),
    #[error("invalid reward configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceSchedule {
    /// Guiding-point distance at step 0, metres.
    pub k_initial: f64,
    /// Steps over which `k_t` decays linearly to zero.
    pub k_decay_steps: u32,
    /// Allowed deviation `delta_t` around the guiding point, metres.
    pub delta: f64,
    /// Post-contact hold tolerance `delta_T`, metres.
    pub delta_hold: f64,
}

impl Default for GuidanceSchedule {
    fn default() -> Self {
        Self {
            k_initial: 0.05,
            k_decay_steps: 60,
            delta: 0.01,
            delta_hold: 0.01,
        }
    }
}

impl GuidanceSchedule {
    pub fn k(&self, step: u32) -> f64 {
        if self.k_decay_steps == 0 || step >= self.k_decay_steps {
            return 0.0;
        }
        self.k_initial * (1.0 - step as f64 / self.k_decay_steps as f64)
    }

    pub fn delta(&self, _step: u32) -> f64 {
        self.delta
    }

    pub fn guiding_point(&self, contact: &WebContact, step: u32) -> Vec3 {
        contact.position - contact.direction * self.k(step)
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.k_initial >= 0.0) {
            return Err(RewardError::InvalidConfig("k_initial must be non-negative"));
        }
        if !(self.delta > 0.0) || !(self.delta_hold > 0.0) {
            return Err(RewardError::InvalidConfig("deviation tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    /// Approach baseline, metres.
    pub b_p: f64,
    /// Direction baseline, radians (> pi).
    pub b_f: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    /// Contact directions count as converged below this angle, radians.
    pub theta: f64,
    pub max_approach_steps: u32,
    /// Object translation beyond this terminates the episode, metres.
    pub object_motion_limit: f64,
    /// Hard cap on episode length; reaching it truncates without penalty.
    pub max_episode_steps: u32,
    /// A touching finger only counts as having lost contact once it is this
    /// far from the surface, metres (fingertip pad compliance).
    pub release_gap: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            b_p: 1.5,
            b_f: 4.0,
            r1: 5.0,
            r2: 10.0,
            r3: 2.0,
            theta: 0.3,
            max_approach_steps: 100,
            object_motion_limit: 0.02,
            max_episode_steps: 150,
            release_gap: 0.001,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.r3 > 0.0) {
            return Err(RewardError::InvalidConfig("r3 must be positive"));
        }
        if !(self.r1 > self.r3) {
            return Err(RewardError::InvalidConfig("penalties must satisfy r1 > r3"));
        }
        if !(self.r2 > self.r1) {
            return Err(RewardError::InvalidConfig("penalties must satisfy r2 > r1"));
        }
        if !(self.b_f > PI) {
            return Err(RewardError::InvalidConfig("b_f must exceed pi"));
        }
        if !(self.b_p > 0.0) {
            return Err(RewardError::InvalidConfig("b_p must be positive"));
        }
        if !(self.theta > 0.0) {
            return Err(RewardError::InvalidConfig("theta must be positive"));
        }
        if !(self.object_motion_limit > 0.0) {
            return Err(RewardError::InvalidConfig("object motion limit must be positive"));
        }
        if !(self.release_gap >= 0.0) {
            return Err(RewardError::InvalidConfig("release gap must be non-negative"));
        }
        if self.max_episode_steps <= self.max_approach_steps {
            return Err(RewardError::InvalidConfig(
                "max_episode_steps must exceed max_approach_steps",
            ));
        }
        Ok(())
    }

    /// `b_p` must dominate every distance a finger can be from its guiding point.
    pub fn validate_reach(&self, max_distance: f64) -> Result<(), RewardError> {
        if !(self.b_p > max_distance) {
            return Err(RewardError::InvalidConfig("b_p must exceed the largest reachable d_p"));
        }
        Ok(())
    }
}

pub fn distance_dp(p: &Vec3, contact: &WebContact, step: u32, schedule: &GuidanceSchedule) -> f64 {
    let g = schedule.guiding_point(contact, step);
    ((p - g).norm() - schedule.delta(step)).max(0.0)
}

pub fn distance_df(f: &Vec3, n: &Vec3) -> Result<f64, RewardError> {
    let (nf, nn) = (f.norm(), n.norm());
    if (nf - 1.0).abs() > 1e-6 || (nn - 1.0).abs() > 1e-6 {
        return Err(RewardError::NonUnitInput(nf, nn));
    }
    Ok(math::acos(f.dot(n).clamp(-1.0, 1.0)))
}

fn floored_log(baseline: f64, d: f64) -> f64 {
    math::ln((baseline - d).max(LOG_FLOOR))
}

pub fn approach_reward(d_p: f64, config: &RewardConfig) -> f64 {
    floored_log(config.b_p, d_p)
}

pub fn contact_reward(d_f: f64, d_p_at_contact: f64, config: &RewardConfig, schedule: &GuidanceSchedule) -> f64 {
    if d_p_at_contact < schedule.delta_hold {
        floored_log(config.b_f, d_f) + floored_log(config.b_p, d_p_at_contact)
    } else {
        -config.r1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Success,
    Timeout,
    LostContact,
    ObjectMoved,
    PlaneCollision,
    LiftFail,
    Truncated,
    PlacementFail,
}

impl Outcome {
    pub const ALL: [Outcome; 8] = [
        Outcome::Success,
        Outcome::Timeout,
        Outcome::LostContact,
        Outcome::ObjectMoved,
        Outcome::PlaneCollision,
        Outcome::LiftFail,
        Outcome::Truncated,
        Outcome::PlacementFail,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Timeout => "timeout",
            Outcome::LostContact => "lost-contact",
            Outcome::ObjectMoved => "object-moved",
            Outcome::PlaneCollision => "plane-collision",
            Outcome::LiftFail => "lift-fail",
            Outcome::Truncated => "truncated",
            Outcome::PlacementFail => "placement-fail",
        }
    }

    /// Whether the episode ended by an avoiding penalty.
    pub fn is_penalty(self) -> bool {
        matches!(
            self,
            Outcome::Timeout
                | Outcome::LostContact
                | Outcome::ObjectMoved
                | Outcome::PlaneCollision
                | Outcome::LiftFail
        )
    }

    /// Episodes ending this way continue to be valued past the final step
    /// (a held grasp keeps earning contact reward; truncation is not failure).
    pub fn bootstraps(self) -> bool {
        matches!(self, Outcome::Success | Outcome::Truncated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "phase", content = "outcome")]
pub enum Phase {
    Approach,
    ContactToGrasp,
    Evaluate,
    Terminated(Outcome),
}

impl Phase {
    pub fn index(self) -> u8 {
        match self {
            Phase::Approach => 0,
            Phase::ContactToGrasp => 1,
            Phase::Evaluate => 2,
            Phase::Terminated(_) => 3,
        }
    }

    pub fn is_terminated(self) -> bool {
        matches!(self, Phase::Terminated(_))
    }

    /// The only way phases change.
    pub fn on_event(self, event: &RewardEvent) -> Phase {
        use RewardEvent as E;
        if self.is_terminated() {
            return self;
        }
        match event {
            E::FingerContacted { .. } if self == Phase::Approach => Phase::ContactToGrasp,
            E::FingerContacted { .. } | E::DriftPenalty { .. } => self,
            E::Converged => match self {
                Phase::ContactToGrasp => Phase::Evaluate,
                other => other,
            },
            E::GraspSucceeded => match self {
                Phase::Evaluate => Phase::Terminated(Outcome::Success),
                other => other,
            },
            E::EvaluationFailed => match self {
                Phase::Evaluate => Phase::Terminated(Outcome::LiftFail),
                other => other,
            },
            E::LostContact { .. } => Phase::Terminated(Outcome::LostContact),
            E::ApproachTimeout => Phase::Terminated(Outcome::Timeout),
            E::ObjectMoved => Phase::Terminated(Outcome::ObjectMoved),
            E::PlaneCollision => Phase::Terminated(Outcome::PlaneCollision),
            E::Truncated => Phase::Terminated(Outcome::Truncated),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "event")]
pub enum RewardEvent {
    FingerContacted { finger: Finger, anchor: Vec3 },
    DriftPenalty { finger: Finger },
    LostContact { finger: Finger },
    ApproachTimeout,
    ObjectMoved,
    PlaneCollision,
    Converged,
    GraspSucceeded,
    EvaluationFailed,
    Truncated,
}

impl RewardEvent {
    pub fn is_penalty(&self) -> bool {
        matches!(
            self,
            RewardEvent::DriftPenalty { .. }
                | RewardEvent::LostContact { .. }
                | RewardEvent::ApproachTimeout
                | RewardEvent::ObjectMoved
                | RewardEvent::PlaneCollision
                | RewardEvent::EvaluationFailed
        )
    }
}

/// Contact bookkeeping for one assigned finger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerTrack {
    pub finger: Finger,
    /// Step `T` at which the finger first touched the object.
    pub contact_step: Option<u32>,
    /// Guiding point at `T`; the finger must stay near it afterwards.
    pub anchor: Option<Vec3>,
}

impl FingerTrack {
    pub fn new(finger: Finger) -> Self {
        Self {
            finger,
            contact_step: None,
            anchor: None,
        }
    }
}

/// Everything `step_reward` looks at for one control step.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub phase: Phase,
    /// Number of control steps taken, including this one.
    pub step: u32,
    pub tracks: &'a [FingerTrack],
    pub contacts: &'a FingerContactState,
    /// The actual (not recognised) web at the object's current pose.
    pub web: &'a ContactWeb,
    pub object_displacement: f64,
    pub plane_collision: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReward {
    pub reward: f64,
    pub events: Vec<RewardEvent>,
    /// Per-finger rewards in track order (zero for fingers not evaluated).
    pub finger_rewards: Vec<f64>,
}

impl StepReward {
    pub fn terminal(&self) -> bool {
        self.events.iter().any(|e| {
            matches!(
                e,
                RewardEvent::LostContact { .. }
                    | RewardEvent::ApproachTimeout
                    | RewardEvent::ObjectMoved
                    | RewardEvent::PlaneCollision
                    | RewardEvent::GraspSucceeded
                    | RewardEvent::EvaluationFailed
                    | RewardEvent::Truncated
            )
        })
    }
}

/// Sums the per-finger phase rewards and applies the avoiding penalties.
/// `evaluate` runs the success test (lift or form closure) and is only called
/// once every assigned finger has converged.
pub fn step_reward(
    ctx: &StepContext<'_>,
    config: &RewardConfig,
    schedule: &GuidanceSchedule,
    evaluate: &mut dyn FnMut() -> bool,
) -> StepReward {
    let mut out = StepReward {
        reward: 0.0,
        events: Vec::new(),
        finger_rewards: alloc::vec![0.0; ctx.tracks.len()],
    };
    if ctx.phase.is_terminated() {
        return out;
    }
    if ctx.object_displacement > config.object_motion_limit {
        out.reward -= config.r2;
        out.events.push(RewardEvent::ObjectMoved);
        return out;
    }
    if ctx.plane_collision {
        out.reward -= config.r2;
        out.events.push(RewardEvent::PlaneCollision);
        return out;
    }

    let t = ctx.step;
    let mut all_converged = true;
    let mut approaching = 0;
    for (i, track) in ctx.tracks.iter().enumerate() {
        let web_contact = &ctx.web.contacts[i];
        let cp = ctx.contacts.get(track.finger);
        let (contact_step, anchor) = match (track.contact_step, track.anchor) {
            (Some(ts), Some(a)) => {
                if !cp.in_contact && cp.gap.is_none_or(|g| g > config.release_gap) {
                    out.reward -= config.r2;
                    out.events.push(RewardEvent::LostContact {
                        finger: track.finger,
                    });
                    return out;
                }
                (ts, a)
            }
            _ if cp.in_contact => {
                let anchor = schedule.guiding_point(web_contact, t);
                out.events.push(RewardEvent::FingerContacted {
                    finger: track.finger,
                    anchor,
                });
                (t, anchor)
            }
            _ => {
                let r = approach_reward(distance_dp(&cp.position, web_contact, t, schedule), config);
                out.finger_rewards[i] = r;
                out.reward += r;
                all_converged = false;
                approaching += 1;
                continue;
            }
        };
        let held = ((cp.position - anchor).norm() - schedule.delta(contact_step)).max(0.0);
        let d_f = math::acos(cp.force_direction.dot(&web_contact.direction).clamp(-1.0, 1.0));
        let r = contact_reward(d_f, held, config, schedule);
        if held >= schedule.delta_hold {
            out.events.push(RewardEvent::DriftPenalty {
                finger: track.finger,
            });
        }
        out.finger_rewards[i] = r;
        out.reward += r;
        if !(d_f < config.theta) {
            all_converged = false;
        }
    }

    // the phase never switched: no finger has touched yet
    if approaching == ctx.tracks.len() && t > config.max_approach_steps {
        out.reward -= config.r2;
        out.events.push(RewardEvent::ApproachTimeout);
        return out;
    }
    if all_converged {
        out.events.push(RewardEvent::Converged);
        if evaluate() {
            out.events.push(RewardEvent::GraspSucceeded);
        } else {
            out.reward -= config.r3;
            out.events.push(RewardEvent::EvaluationFailed);
        }
        return out;
    }
    if t >= config.max_episode_steps {
        out.events.push(RewardEvent::Truncated);
    }
    out
}
