//! Success tests run when every assigned finger has converged: the lift
//! (external-force resistance) test for force closures and the hook test for
//! the passive-form closure.
//!
//! The lift test is quasi-static. Each finger is a soft contact: a linearised
//! Coulomb cone with `friction_edges` generators plus a torsional moment of up
//! to `friction * torsion_radius` per unit normal force. The grasp passes when
//! a non-negative combination of contact wrenches cancels gravity, which is
//! decided by non-negative least squares.

use alloc::vec::Vec;
use core::f64::consts::TAU;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{EnvironmentalPlane, SuperquadricObject};
use crate::gripper::{Finger, FingerContactState};
use crate::math::{self, Vec3};
use crate::web::ContactWeb;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftTestConfig {
    /// Object mass, kg.
    pub mass: f64,
    /// Gravitational acceleration along the object's down axis, m/s^2.
    pub gravity: f64,
    /// Coulomb friction coefficient.
    pub friction: f64,
    /// Edges of the linearised friction cone.
    pub friction_edges: usize,
    /// Relative residual below which the force balance counts as exact.
    pub tolerance: f64,
}

impl Default for LiftTestConfig {
    fn default() -> Self {
        Self {
            mass: 0.2,
            gravity: 9.81,
            friction: 0.5,
            friction_edges: 8,
            tolerance: 1e-6,
        }
    }
}

/// A contact able to push along `normal` (unit, into the object).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchContact {
    pub point: Vec3,
    pub normal: Vec3,
}

fn tangents(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t1 = n.cross(&helper).normalize();
    (t1, n.cross(&t1))
}

/// Columns are unit-normal-force wrenches `[f; tau / length_scale]` about `centre`.
pub fn wrench_basis(
    contacts: &[WrenchContact],
    centre: &Vec3,
    friction: f64,
    torsion_radius: f64,
    edges: usize,
    length_scale: f64,
) -> DMatrix<f64> {
    let per = edges.max(1) + 2;
    let mut a = DMatrix::zeros(6, contacts.len() * per);
    let mut col = 0;
    let mut put = |a: &mut DMatrix<f64>, f: Vec3, tau: Vec3| {
        for k in 0..3 {
            a[(k, col)] = f[k];
            a[(k + 3, col)] = tau[k] / length_scale;
        }
        col += 1;
    };
    for c in contacts {
        let r = c.point - centre;
        let (t1, t2) = tangents(&c.normal);
        for k in 0..edges.max(1) {
            let phi = TAU * k as f64 / edges.max(1) as f64;
            let f = c.normal + (t1 * math::cos(phi) + t2 * math::sin(phi)) * friction;
            put(&mut a, f, r.cross(&f));
        }
        for s in [1.0, -1.0] {
            let tau = r.cross(&c.normal) + c.normal * (s * friction * torsion_radius);
            put(&mut a, c.normal, tau);
        }
    }
    a
}

/// Lawson–Hanson non-negative least squares: `argmin |A x - b|` over `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = alloc::vec![false; n];
    let scale = a.amax().max(1e-300) * b.amax().max(1e-300);
    let tol = 1e-12 * scale * n.max(1) as f64;
    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let j = match candidate {
            Some(j) if w[j] > tol => j,
            _ => break,
        };
        passive[j] = true;
        let mut inner = 0;
        loop {
            inner += 1;
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let sub = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
            let z = match sub.clone().svd(true, true).solve(b, 1e-12) {
                Ok(z) => z,
                Err(_) => return x,
            };
            if z.iter().all(|&v| v > 0.0) || inner > n + 5 {
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = z[k].max(0.0);
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &i) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    let denom = x[i] - z[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[i] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z[k] - x[i]);
                if x[i] <= tol {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    x
}

/// Whether the contacts can hold `external_force` applied at `centre`.
pub fn force_balance_feasible(
    contacts: &[WrenchContact],
    centre: &Vec3,
    external_force: &Vec3,
    friction: f64,
    torsion_radius: f64,
    edges: usize,
    length_scale: f64,
    tolerance: f64,
) -> bool {
    if contacts.is_empty() {
        return external_force.norm() == 0.0;
    }
    let a = wrench_basis(contacts, centre, friction, torsion_radius, edges, length_scale);
    let mut b = DVector::zeros(6);
    for k in 0..3 {
        b[k] = -external_force[k];
    }
    let x = nnls(&a, &b);
    let residual = (&a * &x - &b).norm();
    residual <= tolerance * b.norm().max(1e-12)
}

/// Surface contact realised by a fingertip sphere: the nearest surface point
/// (first order) and the inward normal there.
pub fn fingertip_contact(object: &SuperquadricObject, centre: &Vec3) -> WrenchContact {
    let out = object.outward_direction(centre);
    let point = centre - out * object.signed_distance(centre);
    WrenchContact {
        point,
        normal: -object.outward_direction(&point),
    }
}

fn directions_converged(contacts: &FingerContactState, web: &ContactWeb, theta: f64) -> bool {
    web.grasp_type.fingers().iter().zip(&web.contacts).all(|(f, c)| {
        let cp = contacts.get(*f);
        cp.in_contact && math::acos(cp.force_direction.dot(&c.direction).clamp(-1.0, 1.0)) < theta
    })
}

/// External-force resistance test for the force closures.
pub fn lift_test(
    object: &SuperquadricObject,
    contacts: &FingerContactState,
    web: &ContactWeb,
    theta: f64,
    torsion_radius: f64,
    config: &LiftTestConfig,
) -> bool {
    if !directions_converged(contacts, web, theta) {
        return false;
    }
    let wrenches: Vec<WrenchContact> = web
        .grasp_type
        .fingers()
        .iter()
        .map(|f| fingertip_contact(object, &contacts.get(*f).position))
        .collect();
    let down = -object.pose.axis(2);
    let gravity = down * (config.mass * config.gravity);
    let scale = object.params.half_extents().max();
    force_balance_feasible(
        &wrenches,
        &object.pose.translation,
        &gravity,
        config.friction,
        torsion_radius,
        config.friction_edges,
        scale,
        config.tolerance,
    )
}

/// Hook test for the passive-form closure: the bind fingertip sits in the gap
/// behind the object (past its back face, within its width, clear of the
/// plane), touches it, and its pad faces the pull direction within `theta`.
pub fn evaluate_form_closure(
    object: &SuperquadricObject,
    plane: &EnvironmentalPlane,
    contacts: &FingerContactState,
    web: &ContactWeb,
    theta: f64,
    radius: f64,
) -> bool {
    if !directions_converged(contacts, web, theta) {
        return false;
    }
    let tip = contacts.get(Finger::Bind).position;
    let local = object.pose.inverse_transform_point(&tip);
    let p = &object.params;
    local.x <= -p.a1 && local.y.abs() <= p.a2 + radius && plane.signed_distance(&tip) >= radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SuperquadricParams;
    use crate::gripper::ContactPoint;
    use crate::math::Pose;
    use crate::web::{place_web, GraspType};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: projected gradient descent on `|A x - b|^2`, `x >= 0`.
    fn pgd_feasible(a: &DMatrix<f64>, b: &DVector<f64>) -> bool {
        let ata = a.transpose() * a;
        let lip = ata.norm().max(1e-12);
        let mut x = DVector::from_element(a.ncols(), 0.0);
        for _ in 0..200_000 {
            let g = &ata * &x - a.transpose() * b;
            x -= g / lip;
            x.apply(|v| *v = v.max(0.0));
        }
        (a * &x - b).norm() < 1e-4 * b.norm()
    }

    fn antipodal(mu_pair_offset: f64) -> Vec<WrenchContact> {
        alloc::vec![
            WrenchContact {
                point: Vec3::new(0.0, 0.04, 0.02),
                normal: -Vec3::y(),
            },
            WrenchContact {
                point: Vec3::new(mu_pair_offset, -0.04, 0.02),
                normal: Vec3::y(),
            },
        ]
    }

    #[test]
    fn antipodal_contacts_hold_gravity() {
        let g = Vec3::new(0.0, 0.0, -0.2 * 9.81);
        assert!(force_balance_feasible(&antipodal(0.0), &Vec3::zeros(), &g, 0.5, 0.008, 8, 0.04, 1e-6));
        assert!(force_balance_feasible(&antipodal(0.005), &Vec3::zeros(), &g, 0.5, 0.008, 8, 0.04, 1e-6));
        let a = wrench_basis(&antipodal(0.0), &Vec3::zeros(), 0.5, 0.008, 8, 0.04);
        let mut b = DVector::zeros(6);
        b[2] = 0.2 * 9.81;
        assert!(pgd_feasible(&a, &b));
    }

    #[test]
    fn single_contact_and_frictionless_fail() {
        let g = Vec3::new(0.0, 0.0, -0.2 * 9.81);
        let one = &antipodal(0.0)[..1];
        assert!(!force_balance_feasible(one, &Vec3::zeros(), &g, 0.5, 0.008, 8, 0.04, 1e-6));
        assert!(!force_balance_feasible(&antipodal(0.0), &Vec3::zeros(), &g, 0.0, 0.008, 8, 0.04, 1e-6));
    }

    #[test]
    fn nnls_agrees_with_gradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        for _ in 0..40 {
            let k = rng.random_range(1..4);
            let contacts: Vec<WrenchContact> = (0..k)
                .map(|_| {
                    let n = crate::web::random_unit(&mut rng);
                    WrenchContact {
                        point: -n * 0.04 + crate::web::random_unit(&mut rng) * 0.01,
                        normal: n,
                    }
                })
                .collect();
            let mu = rng.random_range(0.0..1.0);
            let a = wrench_basis(&contacts, &Vec3::zeros(), mu, 0.008, 8, 0.04);
            let mut b = DVector::zeros(6);
            b[2] = 1.962;
            let x = nnls(&a, &b);
            assert!(x.iter().all(|v| *v >= 0.0));
            let ours = (&a * &x - &b).norm() <= 1e-6 * b.norm();
            if ours == pgd_feasible(&a, &b) {
                checked += 1;
            } else {
                // the oracle converges only approximately; disagreements must be borderline
                let r = (&a * &x - &b).norm() / b.norm();
                assert!(r < 5e-2, "disagreement with large residual {r}");
            }
        }
        assert!(checked >= 36, "{checked}");
    }

    fn cp(p: Vec3, f: Vec3) -> ContactPoint {
        ContactPoint {
            position: p,
            force_direction: f,
            in_contact: true,
            gap: Some(0.0),
        }
    }

    #[test]
    fn lift_on_placed_web() {
        let obj = SuperquadricObject::new(
            SuperquadricParams::from_depth_width(0.04, 0.08, 1.0).unwrap(),
            Pose::identity(),
        );
        let web = place_web(&obj, GraspType::ActiveForce).unwrap();
        let r = 0.008;
        let cfg = LiftTestConfig::default();
        let tip = |i: usize| web.contacts[i].position - web.contacts[i].direction * (r - 0.001);
        let mut state = FingerContactState {
            points: [
                cp(tip(0), web.contacts[0].direction),
                cp(tip(1), web.contacts[1].direction),
                cp(Vec3::new(0.0, 0.0, 0.3), Vec3::z()),
            ],
        };
        state.points[2].in_contact = false;
        assert!(lift_test(&obj, &state, &web, 0.3, r, &cfg));
        // one finger off the object
        let mut lost = state;
        lost.points[1].in_contact = false;
        assert!(!lift_test(&obj, &lost, &web, 0.3, r, &cfg));
        // misaligned pad
        let mut skew = state;
        skew.points[0].force_direction = Vec3::z();
        assert!(!lift_test(&obj, &skew, &web, 0.3, r, &cfg));
        let slick = LiftTestConfig {
            friction: 0.0,
            ..cfg
        };
        assert!(!lift_test(&obj, &state, &web, 0.3, r, &slick));
    }

    #[test]
    fn hook_behind_handle() {
        let obj = SuperquadricObject::new(
            SuperquadricParams::new(0.01, 0.01, 0.04, crate::geometry::EPS_MIN, 1.0).unwrap(),
            Pose::identity(),
        );
        let plane = EnvironmentalPlane::behind(&obj, 0.025);
        let web = place_web(&obj, GraspType::PassiveForm).unwrap();
        let r = 0.008;
        let c = web.contacts[0];
        let mut state = FingerContactState {
            points: [
                cp(c.position - c.direction * (r - 0.0005), c.direction),
                cp(Vec3::new(0.3, 0.0, 0.0), Vec3::z()),
                cp(Vec3::new(0.3, 0.0, 0.0), Vec3::z()),
            ],
        };
        assert!(evaluate_form_closure(&obj, &plane, &state, &web, 0.3, r));
        // in front of the handle instead of behind it
        state.points[0].position = Vec3::new(0.01 + r, 0.0, c.position.z);
        assert!(!evaluate_form_closure(&obj, &plane, &state, &web, 0.3, r));
    }
}
