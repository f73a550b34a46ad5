//! Contact-webs: desired contact locations with desired force directions.
//!
//! A web is stored in world coordinates together with its own frame, which is
//! the frame observations are expressed in. Frame convention: the origin is
//! the centroid of the contact points; for the force closures the axes follow
//! the object's axes (so `+z` is the object's up direction and the hand
//! approaches from above at zero zenith); for the passive-form closure `+z` is
//! the hook's pull direction (away from the environmental plane), `+x` the
//! object's up axis.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
use nalgebra::{Unit, UnitQuaternion};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, SuperquadricObject, SURFACE_BAND};
use crate::gripper::Finger;
use crate::math::{self, Pose, Vec3};

/// Maximum recognition noise: 5 mm translation.
pub const MAX_NOISE_TRANSLATION: f64 = 0.005;
/// Maximum recognition noise: 1.5 degrees rotation.
pub const MAX_NOISE_ROTATION: f64 = 1.5 * PI / 180.0;
/// Lateral contacts sit at this fraction of the object height, from the bottom.
pub const CONTACT_HEIGHT_FRACTION: f64 = 0.75;
/// Lateral contacts of the passive-force closure sit lower: with the palm on
/// the top face the fingers must reach down past their own length of palm.
pub const PASSIVE_CONTACT_HEIGHT_FRACTION: f64 = 0.25;
const BISECTION_STEPS: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WebError {
    #[error("surface projection did not converge: {0}")]
    PlacementFailure(&'static str),
    #[error("noise exceeds recognition bounds (translation {translation} m, rotation {rotation} rad)")]
    NoiseBoundsExceeded { translation: f64, rotation: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraspType {
    ActiveForce,
    PassiveForce,
    PassiveForm,
}

impl GraspType {
    pub const ALL: [GraspType; 3] = [
        GraspType::ActiveForce,
        GraspType::PassiveForce,
        GraspType::PassiveForm,
    ];

    pub fn contact_count(self) -> usize {
        self.fingers().len()
    }

    /// Hand parts assigned to the web contacts, in contact order.
    pub fn fingers(self) -> &'static [Finger] {
        match self {
            GraspType::ActiveForce => &[Finger::Bind, Finger::Thumb],
            GraspType::PassiveForce => &[Finger::Bind, Finger::Thumb, Finger::Palm],
            GraspType::PassiveForm => &[Finger::Bind],
        }
    }

    pub fn is_force_closure(self) -> bool {
        !matches!(self, GraspType::PassiveForm)
    }

    pub fn name(self) -> &'static str {
        match self {
            GraspType::ActiveForce => "active-force",
            GraspType::PassiveForce => "passive-force",
            GraspType::PassiveForm => "passive-form",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        GraspType::ALL.into_iter().find(|g| g.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WebContact {
    /// Desired contact location, metres.
    pub position: Vec3,
    /// Desired direction of the force applied to the object (unit, into the object).
    pub direction: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactWeb {
    pub contacts: Vec<WebContact>,
    pub grasp_type: GraspType,
    pub frame: Pose,
}

impl ContactWeb {
    /// Applies a rigid motion to contacts, directions and frame.
    pub fn transformed(&self, motion: &Pose) -> ContactWeb {
        ContactWeb {
            contacts: self
                .contacts
                .iter()
                .map(|c| WebContact {
                    position: motion.transform_point(&c.position),
                    direction: motion.transform_vector(&c.direction),
                })
                .collect(),
            grasp_type: self.grasp_type,
            frame: motion.compose(&self.frame),
        }
    }

    pub fn center(&self) -> Vec3 {
        self.frame.translation
    }

    pub fn to_local_point(&self, world: &Vec3) -> Vec3 {
        web_frame_point(self, world)
    }

    pub fn to_local_direction(&self, world: &Vec3) -> Vec3 {
        web_frame_direction(self, world)
    }

    /// Pull direction of a passive-form web or the up axis of a force-closure web;
    /// the direction the hand approaches from at zero zenith.
    pub fn approach_axis(&self) -> Vec3 {
        self.frame.axis(2)
    }
}

/// Direction the hand comes from, relative to the web frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachDirection {
    /// Angle from the web `+z` axis, radians in `[0, pi/2]`.
    pub zenith: f64,
    /// Angle about `+z` measured from `+x`, radians in `(-pi, pi]`.
    pub azimuth: f64,
}

impl ApproachDirection {
    pub fn new(zenith: f64, azimuth: f64) -> Option<Self> {
        let ok = (0.0..=FRAC_PI_2).contains(&zenith) && azimuth > -PI && azimuth <= PI;
        ok.then_some(Self { zenith, azimuth })
    }

    pub fn from_degrees(zenith: f64, azimuth: f64) -> Option<Self> {
        Self::new(zenith.to_radians(), azimuth.to_radians())
    }

    /// Unit vector in the web frame pointing from the web centre toward the hand.
    pub fn unit_vector(&self) -> Vec3 {
        let s = math::sin(self.zenith);
        Vec3::new(
            s * math::cos(self.azimuth),
            s * math::sin(self.azimuth),
            math::cos(self.zenith),
        )
    }
}

/// Rigid perturbation separating the recognised web from the actual one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WebNoise {
    pub translation: Vec3,
    /// Axis-angle vector; its norm is the rotation angle in radians.
    pub rotation: Vec3,
}

impl WebNoise {
    pub fn zero() -> Self {
        Self {
            translation: Vec3::zeros(),
            rotation: Vec3::zeros(),
        }
    }

    pub fn check_bounds(&self) -> Result<(), WebError> {
        let t = self.translation.norm();
        let r = self.rotation.norm();
        // small slack so bound-magnitude noise built from rounded components passes
        if t > MAX_NOISE_TRANSLATION * (1.0 + 1e-9) || r > MAX_NOISE_ROTATION * (1.0 + 1e-9) {
            return Err(WebError::NoiseBoundsExceeded {
                translation: t,
                rotation: r,
            });
        }
        Ok(())
    }

    /// Translation uniform in the ball of radius `max_translation`, rotation about
    /// a uniform random axis with angle uniform in `[0, max_rotation]`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, max_translation: f64, max_rotation: f64) -> Self {
        let translation = loop {
            let v = Vec3::new(
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
            );
            if v.norm_squared() <= 1.0 {
                break v * max_translation;
            }
        };
        let axis = random_unit(rng);
        let angle = rng.random_range(0.0..=1.0) * max_rotation;
        Self {
            translation,
            rotation: axis * angle,
        }
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_scaled_axis(self.rotation)
    }
}

pub fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(-PI..PI);
    let r = math::sqrt((1.0 - z * z).max(0.0));
    Vec3::new(r * math::cos(phi), r * math::sin(phi), z)
}

/// Finds the surface crossing on the segment from `inside` to `outside` (object-local
/// points) by bisection.
fn bisect_surface(object: &SuperquadricObject, inside: Vec3, outside: Vec3) -> Result<Vec3, WebError> {
    let f = |p: &Vec3| object.params.local_value(p);
    if !(f(&inside) < 1.0) || !(f(&outside) >= 1.0) {
        return Err(WebError::PlacementFailure("segment does not bracket the surface"));
    }
    let (mut lo, mut hi) = (inside, outside);
    for _ in 0..BISECTION_STEPS {
        let mid = (lo + hi) * 0.5;
        if f(&mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = (lo + hi) * 0.5;
    if (f(&p) - 1.0).abs() >= SURFACE_BAND {
        return Err(WebError::PlacementFailure("projection left the surface band"));
    }
    Ok(p)
}

fn inward_contact(object: &SuperquadricObject, local: Vec3) -> Result<WebContact, WebError> {
    let world = object.pose.transform_point(&local);
    let outward = object.surface_normal(&world)?;
    Ok(WebContact {
        position: world,
        direction: -outward,
    })
}

/// Places the template web of `grasp_type` on `object`.
pub fn place_web(object: &SuperquadricObject, grasp_type: GraspType) -> Result<ContactWeb, WebError> {
    object.params.validate()?;
    let p = &object.params;
    let fraction = match grasp_type {
        GraspType::PassiveForce => PASSIVE_CONTACT_HEIGHT_FRACTION,
        _ => CONTACT_HEIGHT_FRACTION,
    };
    let h = -p.a3 + fraction * 2.0 * p.a3;
    let axis_point = Vec3::new(0.0, 0.0, h);
    let lateral = |sign: f64| {
        bisect_surface(object, axis_point, Vec3::new(0.0, sign * p.a2, h))
            .and_then(|c| inward_contact(object, c))
    };
    let contacts: Vec<WebContact> = match grasp_type {
        GraspType::ActiveForce => alloc::vec![lateral(1.0)?, lateral(-1.0)?],
        GraspType::PassiveForce => {
            let top = bisect_surface(object, Vec3::zeros(), Vec3::new(0.0, 0.0, p.a3))?;
            alloc::vec![lateral(1.0)?, lateral(-1.0)?, inward_contact(object, top)?]
        }
        GraspType::PassiveForm => {
            let hook = bisect_surface(object, axis_point, Vec3::new(-p.a1, 0.0, h))?;
            alloc::vec![inward_contact(object, hook)?]
        }
    };
    let centroid = contacts.iter().map(|c| c.position).sum::<Vec3>() / contacts.len() as f64;
    let (ox, oy, oz) = (object.pose.axis(0), object.pose.axis(1), object.pose.axis(2));
    let frame = match grasp_type {
        GraspType::PassiveForm => Pose::from_axes(centroid, oz, -oy, ox),
        _ => Pose::from_axes(centroid, ox, oy, oz),
    };
    Ok(ContactWeb {
        contacts,
        grasp_type,
        frame,
    })
}

/// Recognised web: the actual web rigidly rotated about its frame origin and
/// then translated by the noise.
pub fn perturb_web(web: &ContactWeb, noise: &WebNoise) -> Result<ContactWeb, WebError> {
    noise.check_bounds()?;
    let origin = web.frame.translation;
    let rot = noise.rotation();
    // p -> origin + R (p - origin) + t
    let motion = Pose::new(origin + noise.translation - rot * origin, rot);
    Ok(web.transformed(&motion))
}

pub fn web_frame_point(web: &ContactWeb, world: &Vec3) -> Vec3 {
    web.frame.inverse_transform_point(world)
}

pub fn web_frame_direction(web: &ContactWeb, world: &Vec3) -> Vec3 {
    web.frame.inverse_transform_vector(world)
}

pub fn web_to_world_point(web: &ContactWeb, local: &Vec3) -> Vec3 {
    web.frame.transform_point(local)
}

/// Axis-angle rotation helper used by tests and the randomiser.
pub fn rotation_about(axis: Vec3, angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), angle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{SuperquadricParams, EPS_MIN};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn object(eps2: f64) -> SuperquadricObject {
        SuperquadricObject::new(
            SuperquadricParams::from_depth_width(0.04, 0.08, eps2).unwrap(),
            Pose::from_translation(Vec3::new(0.0, 0.0, 0.04)),
        )
    }

    #[test]
    fn active_force_on_ellipsoid_matches_bisection_oracle() {
        let params = SuperquadricParams::new(0.02, 0.04, 0.04, 1.0, 1.0).unwrap();
        let obj = SuperquadricObject::new(params, Pose::identity());
        let web = place_web(&obj, GraspType::ActiveForce).unwrap();
        let h = 0.5 * params.a3;
        // oracle: closed-form ellipsoid crossing along y at height h
        let y = params.a2 * libm::sqrt(1.0 - (h / params.a3) * (h / params.a3));
        assert_eq!(web.contacts.len(), 2);
        assert!((web.contacts[0].position - Vec3::new(0.0, y, h)).norm() < 1e-12);
        assert!((web.contacts[1].position - Vec3::new(0.0, -y, h)).norm() < 1e-12);
        for c in &web.contacts {
            let n = obj.surface_normal(&c.position).unwrap();
            assert!((c.direction + n).norm() < 1e-12);
            // tangent perpendicularity
            let t1 = Vec3::x();
            assert!(c.direction.dot(&t1).abs() < 1e-3);
        }
    }

    #[test]
    fn passive_force_has_downward_top_contact() {
        for eps2 in [EPS_MIN, 1.0, 2.0] {
            let web = place_web(&object(eps2), GraspType::PassiveForce).unwrap();
            assert_eq!(web.contacts.len(), 3);
            let top = web.contacts[2];
            let angle = libm::acos(top.direction.dot(&-Vec3::z()).clamp(-1.0, 1.0));
            assert!(angle < 5f64.to_radians());
            assert!((web.frame.axis(2) - Vec3::z()).norm() < 1e-12);
        }
    }

    #[test]
    fn passive_form_on_handle() {
        let params = SuperquadricParams::new(0.01, 0.01, 0.04, EPS_MIN, 1.0).unwrap();
        let obj = SuperquadricObject::new(params, Pose::identity());
        let web = place_web(&obj, GraspType::PassiveForm).unwrap();
        assert_eq!(web.contacts.len(), 1);
        let c = web.contacts[0];
        assert!((obj.inside_outside(&c.position) - 1.0).abs() < 0.02);
        assert!(c.position.x < 0.0);
        assert!((c.direction - Vec3::x()).norm() < 1e-9);
        assert!((web.approach_axis() - Vec3::x()).norm() < 1e-12);
    }

    #[test]
    fn contacts_lie_on_surface_for_all_types() {
        for g in GraspType::ALL {
            for eps2 in [EPS_MIN, 0.5, 1.0, 2.0] {
                let obj = object(eps2);
                let web = place_web(&obj, g).unwrap();
                assert_eq!(web.contacts.len(), g.contact_count());
                for c in &web.contacts {
                    assert!((obj.inside_outside(&c.position) - 1.0).abs() < SURFACE_BAND);
                    assert!((c.direction.norm() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_noise_is_identity_and_translation_shifts() {
        let web = place_web(&object(1.0), GraspType::PassiveForce).unwrap();
        let same = perturb_web(&web, &WebNoise::zero()).unwrap();
        for (a, b) in web.contacts.iter().zip(&same.contacts) {
            assert!((a.position - b.position).norm() < 1e-15);
            assert_eq!(a.direction, b.direction);
        }
        let t = Vec3::new(0.003, 0.0, 0.0);
        let moved = perturb_web(&web, &WebNoise { translation: t, rotation: Vec3::zeros() }).unwrap();
        for (a, b) in web.contacts.iter().zip(&moved.contacts) {
            assert!((b.position - a.position - t).norm() < 1e-15);
            assert_eq!(a.direction, b.direction);
        }
        assert_eq!(moved.grasp_type, web.grasp_type);
    }

    #[test]
    fn max_rotation_about_z_turns_horizontal_directions() {
        let web = place_web(&object(1.0), GraspType::ActiveForce).unwrap();
        let noise = WebNoise {
            translation: Vec3::zeros(),
            rotation: Vec3::z() * MAX_NOISE_ROTATION,
        };
        let rec = perturb_web(&web, &noise).unwrap();
        for (a, b) in web.contacts.iter().zip(&rec.contacts) {
            let angle = libm::acos(a.direction.dot(&b.direction).clamp(-1.0, 1.0));
            assert!((angle - 1.5f64.to_radians()).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_bounds_are_enforced() {
        let web = place_web(&object(1.0), GraspType::ActiveForce).unwrap();
        let too_far = WebNoise {
            translation: Vec3::new(0.006, 0.0, 0.0),
            rotation: Vec3::zeros(),
        };
        assert!(matches!(perturb_web(&web, &too_far), Err(WebError::NoiseBoundsExceeded { .. })));
        let too_much = WebNoise {
            translation: Vec3::zeros(),
            rotation: Vec3::x() * 0.03,
        };
        assert!(perturb_web(&web, &too_much).is_err());
    }

    #[test]
    fn perturbation_preserves_distances() {
        let web = place_web(&object(2.0), GraspType::PassiveForce).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let noise = WebNoise::sample(&mut rng, MAX_NOISE_TRANSLATION, MAX_NOISE_ROTATION);
            let rec = perturb_web(&web, &noise).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let d0 = (web.contacts[i].position - web.contacts[j].position).norm();
                    let d1 = (rec.contacts[i].position - rec.contacts[j].position).norm();
                    assert!((d0 - d1).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn frame_transform_round_trips() {
        let web = place_web(&object(1.0), GraspType::ActiveForce).unwrap();
        assert!(web_frame_point(&web, &web.center()).norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let motion = Pose::new(
                Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                rotation_about(random_unit(&mut rng), rng.random_range(0.0..3.0)),
            );
            let w = web.transformed(&motion);
            let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let back = web_to_world_point(&w, &web_frame_point(&w, &p));
            assert!((back - p).norm() < 1e-9);
        }
        let identity = ContactWeb {
            contacts: Vec::new(),
            grasp_type: GraspType::ActiveForce,
            frame: Pose::identity(),
        };
        let p = Vec3::new(0.1, -0.2, 0.3);
        assert_eq!(web_frame_point(&identity, &p), p);
    }

    #[test]
    fn approach_direction_bounds() {
        assert!(ApproachDirection::new(-0.1, 0.0).is_none());
        assert!(ApproachDirection::new(0.0, -PI).is_none());
        assert!(ApproachDirection::new(FRAC_PI_2, PI).is_some());
        let up = ApproachDirection::new(0.0, 0.0).unwrap().unit_vector();
        assert_eq!(up, Vec3::z());
    }
}
