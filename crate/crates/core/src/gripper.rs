//! Two-virtual-finger gripper: forward kinematics and velocity integration.
//!
//! Hand frame conventions (all relative to the wrist):
//! * `+z` is the approach axis, pointing from the wrist toward the object;
//! * `+y` points from the thumb toward the bind finger (the closing axis);
//! * `+x = y × z`.
//!
//! The bind finger (index/middle/ring moving together) is rooted at
//! `(0, +w/2, 0)` and has three flexion joints about `x` that curl it toward
//! `-y`. The thumb is rooted at `(thumb_root_offset, -w/2, 0)`; its first joint
//! abducts about `y` (swinging the tip along `+x`), the remaining three flex
//! about `x` toward `+y`. At zero angles both chains point straight along `+z`.
//! Each fingertip pad faces the opposing finger; the palm pad faces `+z`.

use alloc::vec::Vec;
use nalgebra::{Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Pose, Vec3};

pub const BIND_JOINTS: usize = 3;
pub const THUMB_JOINTS: usize = 4;
pub const JOINT_COUNT: usize = BIND_JOINTS + THUMB_JOINTS;
/// Seven joint velocities followed by the wrist velocity.
pub const ACTION_DIM: usize = JOINT_COUNT + 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GripperError {
    #[error("joint {joint} angle {angle} outside [{low}, {high}]")]
    JointLimitViolation {
        joint: usize,
        angle: f64,
        low: f64,
        high: f64,
    },
    #[error("wrist offset {0} outside the allowed travel")]
    WristTravelViolation(f64),
    #[error("invalid gripper model: {0}")]
    InvalidModel(&'static str),
}

/// The contact-bearing parts of the hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Finger {
    Bind,
    Thumb,
    Palm,
}

impl Finger {
    pub const ALL: [Finger; 3] = [Finger::Bind, Finger::Thumb, Finger::Palm];

    pub fn index(self) -> usize {
        match self {
            Finger::Bind => 0,
            Finger::Thumb => 1,
            Finger::Palm => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainModel {
    pub link_lengths: Vec<f64>,
    /// `[low, high]` per joint, radians.
    pub joint_limits: Vec<[f64; 2]>,
}

impl ChainModel {
    pub fn total_length(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    fn validate(&self, joints: usize) -> Result<(), GripperError> {
        if self.link_lengths.len() != joints || self.joint_limits.len() != joints {
            return Err(GripperError::InvalidModel("wrong number of joints in a chain"));
        }
        if self.link_lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(GripperError::InvalidModel("link lengths must be positive"));
        }
        if self.joint_limits.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(GripperError::InvalidModel("joint limits must satisfy low < high"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperModel {
    pub bind_finger: ChainModel,
    pub thumb: ChainModel,
    /// Lateral distance between the two finger roots, metres.
    pub palm_width: f64,
    /// Palm contact frame relative to the wrist.
    pub palm_frame: Pose,
    pub fingertip_radius: f64,
    /// Offset of the thumb root along hand `x`; breaks the left/right symmetry.
    pub thumb_root_offset: f64,
    /// Rad/s, applied to every joint.
    pub joint_velocity_limit: f64,
    /// m/s along the approach axis.
    pub wrist_velocity_limit: f64,
    /// Wrist offset stays within `[-wrist_retreat, wrist_travel]`.
    pub wrist_travel: f64,
    pub wrist_retreat: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self {
            bind_finger: ChainModel {
                link_lengths: alloc::vec![0.03; BIND_JOINTS],
                joint_limits: alloc::vec![[-1.6, 1.6], [-0.8, 1.6], [-0.8, 1.6]],
            },
            thumb: ChainModel {
                link_lengths: alloc::vec![0.022; THUMB_JOINTS],
                joint_limits: alloc::vec![[-0.6, 0.6], [-1.2, 1.6], [-0.8, 1.6], [-0.8, 1.6]],
            },
            palm_width: 0.04,
            palm_frame: Pose::identity(),
            fingertip_radius: 0.008,
            thumb_root_offset: 0.005,
            joint_velocity_limit: 2.0,
            wrist_velocity_limit: 0.25,
            wrist_travel: 0.20,
            wrist_retreat: 0.05,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<(), GripperError> {
        self.bind_finger.validate(BIND_JOINTS)?;
        self.thumb.validate(THUMB_JOINTS)?;
        if !(self.fingertip_radius > 0.0) {
            return Err(GripperError::InvalidModel("fingertip radius must be positive"));
        }
        if !(self.palm_width > 0.0) {
            return Err(GripperError::InvalidModel("palm width must be positive"));
        }
        if !(self.joint_velocity_limit > 0.0) || !(self.wrist_velocity_limit > 0.0) {
            return Err(GripperError::InvalidModel("velocity limits must be positive"));
        }
        if !(self.wrist_travel > 0.0) || !(self.wrist_retreat >= 0.0) {
            return Err(GripperError::InvalidModel("wrist travel must be positive"));
        }
        Ok(())
    }

    pub fn joint_limit(&self, joint: usize) -> [f64; 2] {
        if joint < BIND_JOINTS {
            self.bind_finger.joint_limits[joint]
        } else {
            self.thumb.joint_limits[joint - BIND_JOINTS]
        }
    }

    /// Per-component velocity bounds of an action.
    pub fn action_limits(&self) -> [f64; ACTION_DIM] {
        let mut l = [self.joint_velocity_limit; ACTION_DIM];
        l[JOINT_COUNT] = self.wrist_velocity_limit;
        l
    }

    pub fn bind_root(&self) -> Vec3 {
        Vec3::new(0.0, self.palm_width / 2.0, 0.0)
    }

    pub fn thumb_root(&self) -> Vec3 {
        Vec3::new(self.thumb_root_offset, -self.palm_width / 2.0, 0.0)
    }

    /// Fingertip positions in the hand frame at zero joint angles.
    pub fn rest_fingertips(&self) -> [Vec3; 2] {
        [
            self.bind_root() + Vec3::z() * self.bind_finger.total_length(),
            self.thumb_root() + Vec3::z() * self.thumb.total_length(),
        ]
    }

    /// Longest chain reach plus the tip radius; bounds how far any contact
    /// point can be from the wrist.
    pub fn max_reach(&self) -> f64 {
        let half = self.palm_width / 2.0 + self.thumb_root_offset.abs();
        half + self.bind_finger.total_length().max(self.thumb.total_length())
            + self.fingertip_radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    /// Wrist displacement along the approach axis, metres (positive toward the object).
    pub wrist_offset: f64,
    /// Three bind-finger angles followed by four thumb angles.
    pub joint_angles: [f64; JOINT_COUNT],
}

impl Default for GripperState {
    fn default() -> Self {
        Self::rest()
    }
}

impl GripperState {
    pub fn rest() -> Self {
        Self {
            wrist_offset: 0.0,
            joint_angles: [0.0; JOINT_COUNT],
        }
    }

    pub fn check_limits(&self, model: &GripperModel) -> Result<(), GripperError> {
        for (joint, &angle) in self.joint_angles.iter().enumerate() {
            let [low, high] = model.joint_limit(joint);
            if !(angle >= low && angle <= high) {
                return Err(GripperError::JointLimitViolation {
                    joint,
                    angle,
                    low,
                    high,
                });
            }
        }
        if !(self.wrist_offset >= -model.wrist_retreat && self.wrist_offset <= model.wrist_travel) {
            return Err(GripperError::WristTravelViolation(self.wrist_offset));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub position: Vec3,
    /// Unit direction of the force this contact can push with.
    pub force_direction: Vec3,
    pub in_contact: bool,
    /// Distance from the sphere to the object surface when it is within the
    /// contact search range, negative when penetrating.
    pub gap: Option<f64>,
}

/// Contact candidates for the bind finger, thumb and palm, indexed by [`Finger::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerContactState {
    pub points: [ContactPoint; 3],
}

impl FingerContactState {
    pub fn get(&self, finger: Finger) -> &ContactPoint {
        &self.points[finger.index()]
    }

    pub fn get_mut(&mut self, finger: Finger) -> &mut ContactPoint {
        &mut self.points[finger.index()]
    }
}

fn rot_x(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vec3::x_axis(), a)
}

fn rot_y(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vec3::y_axis(), a)
}

/// End point and distal frame of a chain in the hand frame.
fn chain_tip(root: Vec3, rotations: &[Rotation3<f64>], lengths: &[f64]) -> (Vec3, Rotation3<f64>) {
    let mut pos = root;
    let mut frame = Rotation3::identity();
    for (r, l) in rotations.iter().zip(lengths) {
        frame *= r;
        pos += frame * Vec3::new(0.0, 0.0, *l);
    }
    (pos, frame)
}

/// Wrist frame in the world for a mounted hand at the given wrist offset.
pub fn wrist_pose(mount: &Pose, wrist_offset: f64) -> Pose {
    Pose::new(
        mount.translation + mount.transform_vector(&Vec3::z()) * wrist_offset,
        mount.rotation,
    )
}

/// Fingertip, thumb-tip and palm contact candidates in the world frame.
/// `mount` is the wrist frame at zero wrist offset; contact flags are left unset.
pub fn forward_kinematics(
    model: &GripperModel,
    mount: &Pose,
    state: &GripperState,
) -> Result<FingerContactState, GripperError> {
    state.check_limits(model)?;
    Ok(forward_kinematics_unchecked(model, mount, state))
}

pub fn forward_kinematics_unchecked(
    model: &GripperModel,
    mount: &Pose,
    state: &GripperState,
) -> FingerContactState {
    let q = &state.joint_angles;
    let wrist = wrist_pose(mount, state.wrist_offset);

    let bind_rot = [rot_x(q[0]), rot_x(q[1]), rot_x(q[2])];
    let (bind_tip, bind_frame) =
        chain_tip(model.bind_root(), &bind_rot, &model.bind_finger.link_lengths);
    let bind_pad = bind_frame * -Vec3::y();

    let thumb_rot = [rot_y(q[3]), rot_x(-q[4]), rot_x(-q[5]), rot_x(-q[6])];
    let (thumb_tip, thumb_frame) =
        chain_tip(model.thumb_root(), &thumb_rot, &model.thumb.link_lengths);
    let thumb_pad = thumb_frame * Vec3::y();

    let palm_pos = model.palm_frame.translation;
    let palm_pad = model.palm_frame.transform_vector(&Vec3::z());

    let make = |p: Vec3, f: Vec3| ContactPoint {
        position: wrist.transform_point(&p),
        force_direction: wrist.transform_vector(&f).normalize(),
        in_contact: false,
        gap: None,
    };
    FingerContactState {
        points: [
            make(bind_tip, bind_pad),
            make(thumb_tip, thumb_pad),
            make(palm_pos, palm_pad),
        ],
    }
}

/// Euler-integrates a velocity command over `dt`. Commands are clamped to the
/// velocity limits and the resulting state to the joint limits and wrist travel.
pub fn apply_action(
    model: &GripperModel,
    state: &GripperState,
    action: &[f64; ACTION_DIM],
    dt: f64,
) -> GripperState {
    debug_assert!(dt > 0.0);
    let limits = model.action_limits();
    let mut next = *state;
    for joint in 0..JOINT_COUNT {
        let v = clamp_command(action[joint], limits[joint]);
        let [low, high] = model.joint_limit(joint);
        next.joint_angles[joint] = (state.joint_angles[joint] + v * dt).clamp(low, high);
    }
    let v = clamp_command(action[JOINT_COUNT], limits[JOINT_COUNT]);
    next.wrist_offset = (state.wrist_offset + v * dt).clamp(-model.wrist_retreat, model.wrist_travel);
    next
}

fn clamp_command(v: f64, limit: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-limit, limit)
    }
}

/// Wrist mount for an approach along `direction` (unit, pointing from the target
/// toward the hand) at `distance` from `target`. The hand's closing axis is the
/// projection of `closing_reference` onto the plane normal to the approach axis.
pub fn mount_pose(target: &Vec3, direction: &Vec3, distance: f64, closing_reference: &Vec3, fallback: &Vec3) -> Pose {
    let z = -direction.normalize();
    let mut y = closing_reference - z * closing_reference.dot(&z);
    if y.norm() < 1e-6 {
        y = fallback - z * fallback.dot(&z);
    }
    let y = y.normalize();
    let x = y.cross(&z);
    let m = nalgebra::Matrix3::from_columns(&[x, y, z]);
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
    Pose::new(target + direction.normalize() * distance, rot)
}
