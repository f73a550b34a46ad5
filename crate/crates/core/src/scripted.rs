//! A hand-written grasping controller used as a test fixture and as a
//! baseline policy. It looks at the actual web (which a learned policy never
//! sees), solves a small inverse-kinematics problem for the final grasp and
//! drives the hand there in three moves: pre-shape the fingers, bring the wrist
//! in, then close once the guiding points have nearly reached the contacts.

use alloc::vec::Vec;

use crate::env::GraspEnv;
use crate::gripper::{
    forward_kinematics_unchecked, Finger, GripperModel, GripperState, ACTION_DIM, JOINT_COUNT,
};
use crate::math::{Pose, Vec3};
use crate::web::{ContactWeb, GraspType};

/// Desired fingertip centre and pad direction for one finger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkTarget {
    pub finger: Finger,
    pub position: Vec3,
    pub direction: Vec3,
}

fn ik_cost(model: &GripperModel, mount: &Pose, s: &GripperState, targets: &[IkTarget]) -> f64 {
    let fk = forward_kinematics_unchecked(model, mount, s);
    let mut c = 0.0;
    for t in targets {
        let cp = fk.get(t.finger);
        c += (cp.position - t.position).norm_squared() / 1e-4;
        c += 1.0 - cp.force_direction.dot(&t.direction);
    }
    c + 1e-4 * s.joint_angles.iter().map(|q| q * q).sum::<f64>()
}

fn clamp_state(model: &GripperModel, s: &mut GripperState) {
    for j in 0..JOINT_COUNT {
        let [lo, hi] = model.joint_limit(j);
        s.joint_angles[j] = s.joint_angles[j].clamp(lo, hi);
    }
    s.wrist_offset = s.wrist_offset.clamp(-model.wrist_retreat, model.wrist_travel);
}

/// Coordinate-descent inverse kinematics over the seven joints and the wrist
/// offset. `frozen` joints keep their initial values. Returns the best state
/// and its cost.
pub fn solve_ik(
    model: &GripperModel,
    mount: &Pose,
    targets: &[IkTarget],
    init: &GripperState,
    frozen: &[usize],
) -> (GripperState, f64) {
    let mut best = *init;
    clamp_state(model, &mut best);
    let mut best_cost = ik_cost(model, mount, &best, targets);
    let mut step = 0.4;
    while step > 1e-6 {
        let mut improved = false;
        for var in 0..=JOINT_COUNT {
            if frozen.contains(&var) {
                continue;
            }
            for sign in [1.0, -1.0] {
                let mut s = best;
                if var == JOINT_COUNT {
                    s.wrist_offset += sign * step * 0.1;
                } else {
                    s.joint_angles[var] += sign * step;
                }
                clamp_state(model, &mut s);
                let c = ik_cost(model, mount, &s, targets);
                if c < best_cost {
                    best = s;
                    best_cost = c;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, best_cost)
}

/// Fingertip targets touching `web` with the sphere pressed in by `squeeze`.
pub fn contact_targets(web: &ContactWeb, radius: f64, squeeze: f64) -> Vec<IkTarget> {
    web.grasp_type
        .fingers()
        .iter()
        .zip(&web.contacts)
        .map(|(f, c)| IkTarget {
            finger: *f,
            position: c.position - c.direction * (radius - squeeze),
            direction: c.direction,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedGrasp {
    pub preshape: GripperState,
    pub grasp: GripperState,
    /// First step of the closing move.
    pub close_start: u32,
    pub close_steps: u32,
    pub ik_cost: f64,
    hook: bool,
}

impl ScriptedGrasp {
    pub fn plan(env: &GraspEnv, close_start: u32) -> Self {
        let model = &env.config().gripper;
        let mount = *env.mount();
        let web = env.actual_web();
        let r = model.fingertip_radius;
        let hook = web.grasp_type == GraspType::PassiveForm;
        let squeeze = if hook { 0.0005 } else { 0.001 };
        let targets = contact_targets(&web, r, squeeze);
        let frozen: &[usize] = if hook { &[3, 4, 5, 6] } else { &[] };
        let mut best: Option<(GripperState, f64)> = None;
        for start in ik_starts(hook) {
            let mut init = start;
            init.wrist_offset = env.config().env.approach_distance - 0.08;
            let sol = solve_ik(model, &mount, &targets, &init, frozen);
            if best.as_ref().is_none_or(|b| sol.1 < b.1) {
                best = Some(sol);
            }
        }
        let (grasp, cost) = best.expect("at least one start");

        let preshape = if hook {
            let mut p = grasp;
            p.joint_angles[..3].copy_from_slice(&[0.0, 0.0, 0.0]);
            p.wrist_offset = hook_wrist_offset(model, &mount, &p, &grasp);
            p
        } else {
            let standoff: Vec<IkTarget> = targets
                .iter()
                .map(|t| IkTarget {
                    position: t.position - t.direction * 0.02,
                    ..*t
                })
                .collect();
            solve_ik(model, &mount, &standoff, &grasp, &[]).0
        };
        Self {
            preshape,
            grasp,
            close_start,
            close_steps: 5,
            ik_cost: cost,
            hook,
        }
    }

    /// Velocity command for the next step.
    pub fn action(&self, env: &GraspEnv) -> [f64; ACTION_DIM] {
        let model = &env.config().gripper;
        let dt = env.config().env.dt;
        let now = env.gripper_state();
        let next_step = env.state().step + 1;
        let mut target = self.preshape;
        let shaping = now
            .joint_angles
            .iter()
            .zip(&self.preshape.joint_angles)
            .any(|(a, b)| (a - b).abs() > 0.05);
        if next_step >= self.close_start {
            let s = ((next_step - self.close_start + 1) as f64 / self.close_steps as f64).min(1.0);
            for j in 0..JOINT_COUNT {
                target.joint_angles[j] =
                    self.preshape.joint_angles[j] + s * (self.grasp.joint_angles[j] - self.preshape.joint_angles[j]);
            }
            target.wrist_offset = if self.hook {
                // joints may lag the interpolation under the velocity limit
                let mut next = target;
                let max = model.joint_velocity_limit * dt;
                for j in 0..JOINT_COUNT {
                    next.joint_angles[j] = now.joint_angles[j] + (target.joint_angles[j] - now.joint_angles[j]).clamp(-max, max);
                }
                hook_wrist_offset(model, env.mount(), &next, &self.grasp)
            } else {
                self.preshape.wrist_offset + s * (self.grasp.wrist_offset - self.preshape.wrist_offset)
            };
        } else if shaping {
            target.wrist_offset = now.wrist_offset;
        }
        let mut a = [0.0; ACTION_DIM];
        for j in 0..JOINT_COUNT {
            a[j] = (target.joint_angles[j] - now.joint_angles[j]) / dt;
        }
        a[JOINT_COUNT] = (target.wrist_offset - now.wrist_offset) / dt;
        a
    }
}

/// Initial guesses: fingers opened outward by the first joint and turned back
/// parallel by the next, at several apertures.
fn ik_starts(hook: bool) -> Vec<GripperState> {
    let mut out = Vec::new();
    if hook {
        let mut s = GripperState::rest();
        s.joint_angles = [0.0, 0.3, 1.2, 0.0, -1.0, 0.0, 0.0];
        out.push(s);
        return out;
    }
    for a in [0.4, 0.8, 1.2, 1.5] {
        for b in [0.3, 0.7, 1.1] {
            let mut s = GripperState::rest();
            s.joint_angles = [-a, a, 0.0, 0.0, -b, b, 0.0];
            out.push(s);
        }
    }
    out
}

/// Wrist offset putting the bind fingertip of `state` at the same depth along
/// the approach axis as in `reference`.
fn hook_wrist_offset(model: &GripperModel, mount: &Pose, state: &GripperState, reference: &GripperState) -> f64 {
    let axis = mount.axis(2);
    let depth = |s: &GripperState| {
        let mut s0 = *s;
        s0.wrist_offset = 0.0;
        let p = forward_kinematics_unchecked(model, mount, &s0).get(Finger::Bind).position;
        (p - mount.translation).dot(&axis)
    };
    let target = depth(reference) + reference.wrist_offset;
    (target - depth(state)).clamp(-model.wrist_retreat, model.wrist_travel)
}
