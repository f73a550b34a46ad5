//! Superquadric graspable objects and the environmental plane.
//!
//! The inside–outside function is the two-exponent implicit form
//!
//! ```text
//! F(x, y, z) = ( |x/a1|^(2/e2) + |y/a2|^(2/e2) )^(e2/e1) + |z/a3|^(2/e1)
//! ```
//!
//! evaluated in the object's local frame. `F < 1` inside, `F = 1` on the
//! surface, `F > 1` outside. Along a ray from the centre `F(s p) = s^(2/e1) F(p)`,
//! so `G = F^(e1/2)` is homogeneous of degree one; it is used for radial
//! projection and for the signed-distance estimate behind contact detection.
//!
//! `e2` shapes the horizontal cross-section (box, ellipse, diamond for 0, 1, 2)
//! and `e1` the vertical profile. Exponents are bounded below by [`EPS_MIN`]
//! because the formula is singular at zero.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{self, Pose, Vec3};

/// Smallest admissible exponent; stands in for a nominal exponent of zero.
pub const EPS_MIN: f64 = 0.05;
pub const EPS_MAX: f64 = 2.0;
/// Half-height used for every object in training and evaluation (8 cm tall).
pub const DEFAULT_HALF_HEIGHT: f64 = 0.04;
/// A point counts as lying on the surface when `F` is within this band of 1.
pub const SURFACE_BAND: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid superquadric parameters: {0}")]
    InvalidParams(&'static str),
    #[error("gradient vanishes at the query point (norm {0:e})")]
    DegeneratePoint(f64),
    #[error("point is not on the surface (|F - 1| = {0:e})")]
    OffSurface(f64),
    #[error("invalid plane: {0}")]
    InvalidPlane(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperquadricParams {
    /// Half-depth along local x, metres.
    pub a1: f64,
    /// Half-width along local y, metres.
    pub a2: f64,
    /// Half-height along local z, metres.
    pub a3: f64,
    /// Vertical exponent.
    pub eps1: f64,
    /// Horizontal exponent.
    pub eps2: f64,
}

impl SuperquadricParams {
    pub fn new(a1: f64, a2: f64, a3: f64, eps1: f64, eps2: f64) -> Result<Self, GeometryError> {
        let p = Self {
            a1,
            a2,
            a3,
            eps1,
            eps2,
        };
        p.validate()?;
        Ok(p)
    }

    /// Object described by full depth and width (metres) and the top-surface
    /// exponent; height and vertical exponent take the fixed defaults.
    /// A nominal exponent of zero maps to [`EPS_MIN`].
    pub fn from_depth_width(depth: f64, width: f64, eps2: f64) -> Result<Self, GeometryError> {
        Self::new(
            depth / 2.0,
            width / 2.0,
            DEFAULT_HALF_HEIGHT,
            EPS_MIN,
            clamp_exponent(eps2),
        )
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.a1, self.a2, self.a3, self.eps1, self.eps2]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidParams("non-finite value"));
        }
        if self.a1 <= 0.0 || self.a2 <= 0.0 || self.a3 <= 0.0 {
            return Err(GeometryError::InvalidParams("half-extents must be positive"));
        }
        let ok = |e: f64| (EPS_MIN..=EPS_MAX).contains(&e);
        if !ok(self.eps1) || !ok(self.eps2) {
            return Err(GeometryError::InvalidParams("exponents must lie in [0.05, 2]"));
        }
        Ok(())
    }

    pub fn half_extents(&self) -> Vec3 {
        Vec3::new(self.a1, self.a2, self.a3)
    }

    /// Inside–outside value of a point given in the local frame.
    pub fn local_value(&self, p: &Vec3) -> f64 {
        let e1 = self.eps1;
        let e2 = self.eps2;
        let u = math::powf(math::abs(p.x / self.a1), 2.0 / e2)
            + math::powf(math::abs(p.y / self.a2), 2.0 / e2);
        math::powf(u, e2 / e1) + math::powf(math::abs(p.z / self.a3), 2.0 / e1)
    }

    /// Gradient of `F` in the local frame.
    pub fn local_gradient(&self, p: &Vec3) -> Vec3 {
        let e1 = self.eps1;
        let e2 = self.eps2;
        let rx = math::abs(p.x / self.a1);
        let ry = math::abs(p.y / self.a2);
        let rz = math::abs(p.z / self.a3);
        let u = math::powf(rx, 2.0 / e2) + math::powf(ry, 2.0 / e2);
        let lateral = if u > 0.0 {
            (2.0 / e1) * math::powf(u, e2 / e1 - 1.0)
        } else {
            0.0
        };
        let comp = |r: f64, s: f64, a: f64, e: f64| {
            if s == 0.0 || r == 0.0 {
                0.0
            } else {
                math::powf(r, 2.0 / e - 1.0) * math::signum(s) / a
            }
        };
        Vec3::new(
            lateral * comp(rx, p.x, self.a1, e2),
            lateral * comp(ry, p.y, self.a2, e2),
            (2.0 / e1) * comp(rz, p.z, self.a3, e1),
        )
    }

    /// Unit outward gradient direction at `p`. `F` is homogeneous, so the
    /// direction is constant along rays from the centre; it is evaluated on
    /// the surface where the gradient is well scaled.
    pub fn local_normal_direction(&self, p: &Vec3) -> Option<Vec3> {
        let g = self.local_scale(p);
        if !(g > 0.0) || !g.is_finite() {
            return None;
        }
        let grad = self.local_gradient(&(p / g));
        let n = grad.norm();
        (n > 0.0 && n.is_finite()).then(|| grad / n)
    }

    /// Degree-one homogeneous scale `G = F^(e1/2)`; the surface is `G = 1`.
    pub fn local_scale(&self, p: &Vec3) -> f64 {
        math::powf(self.local_value(p), self.eps1 / 2.0)
    }

    /// Point on the parametric surface at latitude `eta` in [-pi/2, pi/2] and
    /// longitude `omega` in [-pi, pi].
    pub fn parametric_point(&self, eta: f64, omega: f64) -> Vec3 {
        let ce = math::signed_pow(math::cos(eta), self.eps1);
        let se = math::signed_pow(math::sin(eta), self.eps1);
        let cw = math::signed_pow(math::cos(omega), self.eps2);
        let sw = math::signed_pow(math::sin(omega), self.eps2);
        Vec3::new(self.a1 * ce * cw, self.a2 * ce * sw, self.a3 * se)
    }
}

/// Maps a nominal exponent into the admissible range.
pub fn clamp_exponent(e: f64) -> f64 {
    e.clamp(EPS_MIN, EPS_MAX)
}

/// A superquadric placed in the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperquadricObject {
    pub params: SuperquadricParams,
    pub pose: Pose,
}

impl SuperquadricObject {
    pub fn new(params: SuperquadricParams, pose: Pose) -> Self {
        Self { params, pose }
    }

    pub fn inside_outside(&self, point: &Vec3) -> f64 {
        inside_outside(&self.params, &self.pose, point)
    }

    pub fn surface_normal(&self, point: &Vec3) -> Result<Vec3, GeometryError> {
        surface_normal(&self.params, &self.pose, point)
    }

    pub fn signed_distance(&self, point: &Vec3) -> f64 {
        signed_distance_estimate(&self.params, &self.pose, point)
    }

    pub fn project_radially(&self, point: &Vec3) -> Vec3 {
        project_radially(&self.params, &self.pose, point)
    }

    /// Outward unit gradient direction at an arbitrary point (not necessarily on
    /// the surface). Falls back to the radial direction where the gradient vanishes.
    pub fn outward_direction(&self, point: &Vec3) -> Vec3 {
        let local = self.pose.inverse_transform_point(point);
        let dir = if let Some(d) = self.params.local_normal_direction(&local) {
            d
        } else if local.norm() > 0.0 {
            local.normalize()
        } else {
            Vec3::z()
        };
        self.pose.transform_vector(&dir)
    }
}

/// Inside–outside value of a world point for an object at `pose`.
pub fn inside_outside(params: &SuperquadricParams, pose: &Pose, point: &Vec3) -> f64 {
    params.local_value(&pose.inverse_transform_point(point))
}

/// Outward unit normal at a surface point (normalised gradient of `F`).
pub fn surface_normal(
    params: &SuperquadricParams,
    pose: &Pose,
    surface_point: &Vec3,
) -> Result<Vec3, GeometryError> {
    let local = pose.inverse_transform_point(surface_point);
    let f = params.local_value(&local);
    if !(math::abs(f - 1.0) < 1e-3) {
        return Err(GeometryError::OffSurface(math::abs(f - 1.0)));
    }
    let g = params.local_gradient(&local);
    let n = g.norm();
    if !(n >= 1e-12) || !n.is_finite() {
        return Err(GeometryError::DegeneratePoint(n));
    }
    Ok(pose.transform_vector(&(g / n)))
}

/// Deterministic surface points from a Fibonacci lattice over the
/// parametric angles.
pub fn surface_sample(params: &SuperquadricParams, pose: &Pose, count: usize) -> Vec<Vec3> {
    let golden = (math::sqrt(5.0) - 1.0) / 2.0;
    (0..count)
        .map(|k| {
            let u = (k as f64 + 0.5) / count as f64;
            let v = k as f64 * golden - libm::floor(k as f64 * golden);
            let eta = math::asin(2.0 * u - 1.0);
            let omega = core::f64::consts::TAU * v - core::f64::consts::PI;
            pose.transform_point(&params.parametric_point(eta, omega))
        })
        .collect()
}

/// Scales a point along the ray from the object centre onto the surface.
pub fn project_radially(params: &SuperquadricParams, pose: &Pose, point: &Vec3) -> Vec3 {
    let local = pose.inverse_transform_point(point);
    let g = params.local_scale(&local);
    if g > 0.0 && g.is_finite() {
        pose.transform_point(&(local / g))
    } else {
        pose.transform_point(&Vec3::new(0.0, 0.0, params.a3))
    }
}

/// First-order signed distance (positive outside) from `(G - 1) / |grad G|`.
/// Exact for spheres and for axis-aligned faces of box-like shapes.
pub fn signed_distance_estimate(params: &SuperquadricParams, pose: &Pose, point: &Vec3) -> f64 {
    let local = pose.inverse_transform_point(point);
    let f = params.local_value(&local);
    if f <= 0.0 {
        return -params.a1.min(params.a2).min(params.a3);
    }
    let e = params.eps1 / 2.0;
    let g = math::powf(f, e);
    // grad G = e * F^(e-1) * grad F
    let grad_f = params.local_gradient(&local);
    let grad_g = grad_f * (e * math::powf(f, e - 1.0));
    let n = grad_g.norm();
    if !(n > 1e-15) || !n.is_finite() {
        // Along a ray G is linear in the distance from the centre.
        let r = local.norm();
        return if g > 0.0 { r - r / g } else { -r };
    }
    (g - 1.0) / n
}

/// Plane near a passive-form grasp object, e.g. a door behind its handle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentalPlane {
    /// Unit normal pointing toward the free side (where the object is).
    pub normal: Vec3,
    /// Signed offset: points `p` on the plane satisfy `normal . p = offset`.
    pub offset: f64,
    /// Gap between the plane and the object surface, metres.
    pub clearance: f64,
}

impl EnvironmentalPlane {
    pub fn new(normal: Vec3, offset: f64, clearance: f64) -> Result<Self, GeometryError> {
        if math::abs(normal.norm() - 1.0) > 1e-9 {
            return Err(GeometryError::InvalidPlane("normal must be a unit vector"));
        }
        if !(clearance >= 0.0) {
            return Err(GeometryError::InvalidPlane("clearance must be non-negative"));
        }
        Ok(Self {
            normal,
            offset,
            clearance,
        })
    }

    /// Plane parallel to the object's local y–z faces, `clearance` behind its
    /// extreme along `-x`, facing the object.
    pub fn behind(object: &SuperquadricObject, clearance: f64) -> Self {
        let normal = object.pose.axis(0);
        let back = object
            .pose
            .transform_point(&Vec3::new(-object.params.a1 - clearance, 0.0, 0.0));
        Self {
            normal,
            offset: normal.dot(&back),
            clearance,
        }
    }

    pub fn signed_distance(&self, point: &Vec3) -> f64 {
        plane_signed_distance(self, point)
    }

    pub fn point_on_plane(&self) -> Vec3 {
        self.normal * self.offset
    }

    pub fn transformed(&self, pose: &Pose) -> Self {
        let normal = pose.transform_vector(&self.normal);
        let p = pose.transform_point(&self.point_on_plane());
        Self {
            normal,
            offset: normal.dot(&p),
            clearance: self.clearance,
        }
    }
}

pub fn plane_signed_distance(plane: &EnvironmentalPlane, point: &Vec3) -> f64 {
    plane.normal.dot(point) - plane.offset
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn canonical() -> SuperquadricParams {
        SuperquadricParams::from_depth_width(0.04, 0.08, 1.0).unwrap()
    }

    fn ellipsoid() -> SuperquadricParams {
        SuperquadricParams::new(0.02, 0.04, 0.04, 1.0, 1.0).unwrap()
    }

    #[test]
    fn centre_is_zero_and_axis_point_is_one() {
        let p = canonical();
        let pose = Pose::identity();
        assert_eq!(inside_outside(&p, &pose, &Vec3::zeros()), 0.0);
        assert_eq!(inside_outside(&p, &pose, &Vec3::new(p.a1, 0.0, 0.0)), 1.0);
        let moved = Pose::new(
            Vec3::new(0.3, -0.1, 0.2),
            UnitQuaternion::from_euler_angles(0.3, 0.2, 1.0),
        );
        assert!(inside_outside(&p, &moved, &moved.translation).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(SuperquadricParams::new(0.0, 0.1, 0.1, 1.0, 1.0).is_err());
        assert!(SuperquadricParams::new(0.1, 0.1, 0.1, 0.0, 1.0).is_err());
        assert!(SuperquadricParams::new(0.1, 0.1, 0.1, 1.0, 2.5).is_err());
        assert!(SuperquadricParams::new(0.1, f64::NAN, 0.1, 1.0, 1.0).is_err());
        // nominal zero maps to the minimum exponent
        let p = SuperquadricParams::from_depth_width(0.04, 0.1, 0.0).unwrap();
        assert_eq!(p.eps2, EPS_MIN);
    }

    #[test]
    fn axis_and_pole_normals() {
        let e = ellipsoid();
        let n = surface_normal(&e, &Pose::identity(), &Vec3::new(e.a1, 0.0, 0.0)).unwrap();
        assert!((n - Vec3::x()).norm() < 1e-12);
        for (e1, e2) in [(0.05, 0.05), (1.0, 2.0), (0.5, 1.0), (2.0, 0.05)] {
            let p = SuperquadricParams::new(0.02, 0.03, 0.04, e1, e2).unwrap();
            let n = surface_normal(&p, &Pose::identity(), &Vec3::new(0.0, 0.0, p.a3)).unwrap();
            assert!((n - Vec3::z()).norm() < 1e-12, "{e1} {e2} {n:?}");
        }
    }

    #[test]
    fn normal_requires_surface_point() {
        let e = ellipsoid();
        assert!(matches!(
            surface_normal(&e, &Pose::identity(), &Vec3::new(0.5, 0.0, 0.0)),
            Err(GeometryError::OffSurface(_))
        ));
    }

    #[test]
    fn sample_single_point_and_sphere() {
        let p = canonical();
        let pts = surface_sample(&p, &Pose::identity(), 1);
        assert_eq!(pts.len(), 1);
        assert!((inside_outside(&p, &Pose::identity(), &pts[0]) - 1.0).abs() < 1e-6);

        let r = 0.035;
        let s = SuperquadricParams::new(r, r, r, 1.0, 1.0).unwrap();
        let pose = Pose::from_translation(Vec3::new(0.1, 0.2, 0.3));
        for q in surface_sample(&s, &pose, 500) {
            assert!(((q - pose.translation).norm() - r).abs() < 1e-6);
        }
    }

    #[test]
    fn box_like_sample_reaches_extents() {
        let p = SuperquadricParams::new(0.02, 0.04, 0.04, EPS_MIN, EPS_MIN).unwrap();
        let pts = surface_sample(&p, &Pose::identity(), 10_000);
        let ext = p.half_extents();
        for axis in 0..3 {
            let max = pts.iter().map(|q| q[axis]).fold(f64::MIN, f64::max);
            let min = pts.iter().map(|q| q[axis]).fold(f64::MAX, f64::min);
            assert!((max - ext[axis]).abs() <= 0.01 * ext[axis], "axis {axis} max {max}");
            assert!((min + ext[axis]).abs() <= 0.01 * ext[axis], "axis {axis} min {min}");
        }
    }

    #[test]
    fn signed_distance_on_box_face_is_exact() {
        let p = canonical();
        let d = signed_distance_estimate(&p, &Pose::identity(), &Vec3::new(0.0, p.a2 + 0.01, 0.0));
        assert!((d - 0.01).abs() < 1e-9, "{d}");
        let d = signed_distance_estimate(&p, &Pose::identity(), &Vec3::new(0.0, 0.0, p.a3 - 0.005));
        assert!((d + 0.005).abs() < 1e-6, "{d}");
    }

    #[test]
    fn radial_projection_lands_on_surface() {
        let p = canonical();
        let q = project_radially(&p, &Pose::identity(), &Vec3::new(0.01, 0.07, 0.02));
        assert!((inside_outside(&p, &Pose::identity(), &q) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn plane_distance() {
        let n = Vec3::new(1.0, 2.0, 2.0) / 3.0;
        let plane = EnvironmentalPlane::new(n, 0.5, 0.025).unwrap();
        let on = plane.point_on_plane();
        assert!(plane_signed_distance(&plane, &on).abs() < 1e-15);
        assert!((plane_signed_distance(&plane, &(on + n * 0.07)) - 0.07).abs() < 1e-12);
        assert!(EnvironmentalPlane::new(Vec3::new(1.0, 1.0, 0.0), 0.0, 0.0).is_err());
        assert!(EnvironmentalPlane::new(Vec3::x(), 0.0, -1.0).is_err());
    }

    #[test]
    fn plane_behind_object() {
        let obj = SuperquadricObject::new(
            SuperquadricParams::new(0.01, 0.01, 0.04, EPS_MIN, 1.0).unwrap(),
            Pose::identity(),
        );
        let plane = EnvironmentalPlane::behind(&obj, 0.025);
        assert!((plane.signed_distance(&Vec3::new(-0.01, 0.0, 0.0)) - 0.025).abs() < 1e-12);
        assert!(plane.signed_distance(&Vec3::new(-0.04, 0.0, 0.0)) < 0.0);
    }
}
