//! Fingertip contact detection and the quasi-static push model.

use crate::geometry::{EnvironmentalPlane, SuperquadricObject, SURFACE_BAND};
use crate::gripper::FingerContactState;
use crate::math::{Pose, Vec3};
use crate::web::rotation_about;

const REFINE_STEPS: usize = 4;
const PROJECTED_STEPS: usize = 24;
/// How far beyond the fingertip sphere the surface gap is still measured.
pub const GAP_RANGE: f64 = 0.005;

fn local_outward(object: &SuperquadricObject, q: &Vec3) -> Vec3 {
    match object.params.local_normal_direction(q) {
        Some(d) => d,
        None if q.norm() > 0.0 => q.normalize(),
        None => Vec3::z(),
    }
}

/// Bounds on `F` over the closed ball: the smallest and largest values found
/// among a handful of boundary candidates chosen along (refined) gradient,
/// radial and local axis directions. Every candidate lies in the ball, so the returned
/// minimum is an upper bound on the true minimum and vice versa.
pub fn ball_extremes(object: &SuperquadricObject, center: &Vec3, radius: f64) -> (f64, f64) {
    let p = &object.params;
    let q = object.pose.inverse_transform_point(center);
    let f0 = p.local_value(&q);
    let (mut lo, mut hi) = (f0, f0);
    let mut consider = |x: Vec3| {
        let f = p.local_value(&x);
        if f < lo {
            lo = f;
        }
        if f > hi {
            hi = f;
        }
    };
    if q.norm() > 0.0 {
        let radial = q.normalize();
        consider(q - radial * radius);
        consider(q + radial * radius);
    }
    for axis in [Vec3::x(), Vec3::y(), Vec3::z()] {
        consider(q + axis * radius);
        consider(q - axis * radius);
    }
    let mut down = q - local_outward(object, &q) * radius;
    let mut up = q + local_outward(object, &q) * radius;
    consider(down);
    consider(up);
    for _ in 0..REFINE_STEPS {
        down = q - local_outward(object, &down) * radius;
        up = q + local_outward(object, &up) * radius;
        consider(down);
        consider(up);
    }
    // G is a convex gauge for eps <= 2: projected descent from the deepest
    // candidate tightens the minimum near edges and corners
    let mut x = down;
    let mut step = radius;
    for _ in 0..PROJECTED_STEPS {
        let mut y = x - local_outward(object, &x) * step;
        let d = y - q;
        if d.norm() > radius {
            y = q + d * (radius / d.norm());
        }
        if p.local_value(&y) < p.local_value(&x) {
            x = y;
        } else {
            step *= 0.5;
        }
    }
    consider(x);
    (lo, hi)
}

/// A sphere is in contact when it intersects the surface band `|F - 1| <= 0.02`.
pub fn sphere_in_band(object: &SuperquadricObject, center: &Vec3, radius: f64) -> bool {
    let (lo, hi) = ball_extremes(object, center, radius);
    lo <= 1.0 + SURFACE_BAND && hi >= 1.0 - SURFACE_BAND
}

pub fn sphere_hits_plane(plane: &EnvironmentalPlane, center: &Vec3, radius: f64) -> bool {
    plane.signed_distance(center) < radius
}

/// Sets the contact flags of the bind finger, thumb and palm spheres and
/// reports whether any of them touches the environmental plane.
pub fn detect_contacts(
    object: &SuperquadricObject,
    plane: Option<&EnvironmentalPlane>,
    radius: f64,
    contacts: &mut FingerContactState,
) -> bool {
    let mut plane_hit = false;
    for cp in contacts.points.iter_mut() {
        cp.in_contact = sphere_in_band(object, &cp.position, radius);
        cp.gap = surface_distance(object, &cp.position, radius + GAP_RANGE).map(|d| d - radius);
        if let Some(pl) = plane {
            plane_hit |= sphere_hits_plane(pl, &cp.position, radius);
        }
    }
    plane_hit
}

const DEPTH_BISECTIONS: usize = 20;

/// Distance from `center` to the surface, positive outside: the radius at
/// which a ball around `center` first reaches `F = 1`, found by bisection on
/// the same ball bounds the contact test uses. `None` for outside points
/// farther than `max`; inside points deeper than `max` give `-max`.
pub fn surface_distance(object: &SuperquadricObject, center: &Vec3, max: f64) -> Option<f64> {
    let outside = object.params.local_value(&object.pose.inverse_transform_point(center)) >= 1.0;
    let reaches = |rho: f64| {
        let (lo, hi) = ball_extremes(object, center, rho);
        if outside {
            lo <= 1.0
        } else {
            hi >= 1.0
        }
    };
    if !reaches(max) {
        return if outside { None } else { Some(-max) };
    }
    let (mut a, mut b) = (0.0, max);
    for _ in 0..DEPTH_BISECTIONS {
        let m = 0.5 * (a + b);
        if reaches(m) {
            b = m;
        } else {
            a = m;
        }
    }
    Some(if outside { b } else { -b })
}

/// Depth by which a sphere penetrates the object and the inward direction it
/// pushes along, or `None` when it does not touch.
pub fn penetration(object: &SuperquadricObject, center: &Vec3, radius: f64) -> Option<(f64, Vec3)> {
    let sd = surface_distance(object, center, radius)?;
    if !(sd < radius) {
        return None;
    }
    let depth = (radius - sd).min(2.0 * radius);
    Some((depth, -object.outward_direction(center)))
}

/// Compliance model of the object under fingertip pushing: the net
/// penetration vector, restricted to the object's horizontal plane, translates
/// it by `compliance` times its length, and the net moment about the vertical
/// axis yaws it by `yaw_compliance` times the moment.
pub fn push_object(
    object: &SuperquadricObject,
    contacts: &FingerContactState,
    radius: f64,
    compliance: f64,
    yaw_compliance: f64,
) -> Pose {
    let up = object.pose.axis(2);
    let centre = object.pose.translation;
    let mut push = Vec3::zeros();
    let mut moment = 0.0;
    for cp in &contacts.points {
        if let Some((depth, dir)) = penetration(object, &cp.position, radius) {
            let v = dir * depth;
            push += v;
            moment += (cp.position - centre).cross(&v).dot(&up);
        }
    }
    let horizontal = push - up * push.dot(&up);
    if horizontal.norm() == 0.0 && moment == 0.0 {
        return object.pose;
    }
    let yaw = rotation_about(up, yaw_compliance * moment);
    Pose::new(centre + horizontal * compliance, yaw * object.pose.rotation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{SuperquadricParams, EPS_MIN};
    use crate::gripper::ContactPoint;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn canonical() -> SuperquadricObject {
        SuperquadricObject::new(
            SuperquadricParams::from_depth_width(0.04, 0.08, 1.0).unwrap(),
            Pose::identity(),
        )
    }

    /// Dense-sampling oracle: 500 points spread through the ball (its centre,
    /// a Fibonacci sphere at several radii).
    fn oracle(object: &SuperquadricObject, center: &Vec3, radius: f64) -> bool {
        let mut pts: Vec<Vec3> = alloc::vec![*center];
        let shells = [1.0, 0.75, 0.5, 0.25];
        let per = 499 / shells.len();
        let golden = (libm::sqrt(5.0) - 1.0) / 2.0;
        for s in shells {
            for k in 0..per {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / per as f64;
                let r = libm::sqrt(1.0 - z * z);
                let phi = core::f64::consts::TAU * (k as f64 * golden).fract();
                let d = Vec3::new(r * libm::cos(phi), r * libm::sin(phi), z);
                pts.push(center + d * radius * s);
            }
        }
        let vals: Vec<f64> = pts.iter().map(|p| object.inside_outside(p)).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        lo <= 1.0 + SURFACE_BAND && hi >= 1.0 - SURFACE_BAND
    }

    #[test]
    fn far_and_on_surface() {
        let obj = canonical();
        let r = 0.008;
        let far = Vec3::new(0.0, 0.2, 0.0);
        assert!(obj.inside_outside(&far) > 2.0);
        assert!(!sphere_in_band(&obj, &far, r));
        assert!(sphere_in_band(&obj, &Vec3::new(0.0, obj.params.a2, 0.0), r));
        assert!(!sphere_in_band(&obj, &Vec3::zeros(), r));
    }

    #[test]
    fn agrees_with_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = 0.008;
        let mut agree = 0;
        let total = 1000;
        let shapes = [
            SuperquadricParams::from_depth_width(0.04, 0.08, 1.0).unwrap(),
            SuperquadricParams::from_depth_width(0.06, 0.06, EPS_MIN).unwrap(),
            SuperquadricParams::from_depth_width(0.02, 0.10, 2.0).unwrap(),
        ];
        for i in 0..total {
            let obj = SuperquadricObject::new(shapes[i % 3], Pose::identity());
            // placements concentrated around the surface, where the answer is not obvious
            let dir = crate::web::random_unit(&mut rng);
            let surface = obj.project_radially(&(dir * 0.05));
            let offset: f64 = rng.random_range(-2.5..2.5) * r;
            let p = surface + obj.outward_direction(&surface) * offset;
            let ours = sphere_in_band(&obj, &p, r);
            if ours == oracle(&obj, &p, r) {
                agree += 1;
            } else {
                // our candidates lie in the ball, so a positive answer is witnessed;
                // the oracle can only miss a tangential touch between its samples
                assert!(ours, "missed contact at offset {offset}");
            }
        }
        assert!(agree as f64 >= 0.99 * total as f64, "{agree}/{total}");
    }

    #[test]
    fn antipodal_squeeze_does_not_translate() {
        let obj = canonical();
        let r = 0.008;
        let cp = |p: Vec3| ContactPoint {
            position: p,
            force_direction: Vec3::z(),
            in_contact: false,
            gap: None,
        };
        let state = FingerContactState {
            points: [
                cp(Vec3::new(0.0, 0.04 + r - 0.002, 0.0)),
                cp(Vec3::new(0.0, -0.04 - r + 0.002, 0.0)),
                cp(Vec3::new(0.0, 0.0, 0.5)),
            ],
        };
        let pose = push_object(&obj, &state, r, 0.5, 10.0);
        assert!((pose.translation - obj.pose.translation).norm() < 1e-12);
        let single = FingerContactState {
            points: [state.points[0], cp(Vec3::new(0.0, -0.5, 0.0)), state.points[2]],
        };
        let pose = push_object(&obj, &single, r, 0.5, 10.0);
        assert!((pose.translation - Vec3::new(0.0, -0.001, 0.0)).norm() < 1e-7, "{:?}", pose.translation);
    }

    #[test]
    fn pushing_spheres_are_in_contact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = 0.008;
        for eps1 in [EPS_MIN, 1.0] {
            let obj = SuperquadricObject::new(SuperquadricParams::new(0.02, 0.04, 0.04, eps1, 1.0).unwrap(), Pose::identity());
            for _ in 0..2000 {
                let c = Vec3::new(
                    rng.random_range(-0.035..0.035),
                    rng.random_range(-0.055..0.055),
                    rng.random_range(-0.055..0.055),
                );
                if let Some((depth, _)) = penetration(&obj, &c, r) {
                    assert!(depth > 0.0 && depth <= 2.0 * r);
                    // a fully buried sphere pushes at the cap without touching the band
                    if depth < 2.0 * r {
                        assert!(sphere_in_band(&obj, &c, r), "pushing without contact at {c:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn surface_distance_on_faces() {
        let obj = SuperquadricObject::new(SuperquadricParams::new(0.02, 0.04, 0.04, EPS_MIN, 1.0).unwrap(), Pose::identity());
        // flat top face of the near-box shape
        for d in [0.001, 0.003, -0.002] {
            let got = surface_distance(&obj, &Vec3::new(0.0, 0.0, 0.04 + d), 0.008).unwrap();
            assert!((got - d).abs() < 1e-6, "{d} {got}");
        }
        assert_eq!(surface_distance(&obj, &Vec3::new(0.0, 0.0, 0.06), 0.008), None);
    }
}
