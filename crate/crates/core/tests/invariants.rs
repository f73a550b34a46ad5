use graspweb_core::geometry::{inside_outside, surface_normal, SuperquadricParams};
use graspweb_core::gripper::Finger;
use graspweb_core::math::{Pose, Vec3};
use graspweb_core::ppo::compute_gae;
use graspweb_core::reward::{approach_reward, distance_df, GuidanceSchedule, Phase, RewardConfig, RewardEvent};
use graspweb_core::web::{rotation_about, WebContact};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = SuperquadricParams> {
    (0.01..0.06f64, 0.01..0.06f64, 0.01..0.06f64, 0.1..=2.0f64, 0.1..=2.0f64)
        .prop_map(|(a, b, c, e1, e2)| SuperquadricParams::new(a, b, c, e1, e2).unwrap())
}

fn unit() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 1e-3)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
}

fn pose() -> impl Strategy<Value = Pose> {
    (unit(), -3.0..3.0f64, -0.5..0.5f64, -0.5..0.5f64, -0.5..0.5f64)
        .prop_map(|(axis, angle, x, y, z)| Pose::new(Vec3::new(x, y, z), rotation_about(axis, angle)))
}

fn event() -> impl Strategy<Value = RewardEvent> {
    prop_oneof![
        Just(RewardEvent::FingerContacted { finger: Finger::Bind, anchor: Vec3::zeros() }),
        Just(RewardEvent::DriftPenalty { finger: Finger::Thumb }),
        Just(RewardEvent::LostContact { finger: Finger::Bind }),
        Just(RewardEvent::ApproachTimeout),
        Just(RewardEvent::ObjectMoved),
        Just(RewardEvent::PlaneCollision),
        Just(RewardEvent::Converged),
        Just(RewardEvent::GraspSucceeded),
        Just(RewardEvent::EvaluationFailed),
        Just(RewardEvent::Truncated),
    ]
}

proptest! {
    #[test]
    fn parametric_points_lie_on_the_surface(p in params(), pose in pose(), eta in -1.5..1.5f64, omega in -3.1..3.1f64) {
        let x = pose.transform_point(&p.parametric_point(eta, omega));
        prop_assert!((inside_outside(&p, &pose, &x) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn inside_outside_moves_with_the_object(p in params(), pose in pose(), motion in pose(), q in unit(), r in 0.0..0.1f64) {
        let x = pose.transform_point(&(q * r));
        let moved = motion.compose(&pose);
        let a = inside_outside(&p, &pose, &x);
        let b = inside_outside(&p, &moved, &motion.transform_point(&x));
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn normals_are_unit_and_rotate_with_the_object(p in params(), pose in pose(), motion in pose(), eta in -1.4..1.4f64, omega in -3.0..3.0f64) {
        let x = pose.transform_point(&p.parametric_point(eta, omega));
        let n = surface_normal(&p, &pose, &x).unwrap();
        prop_assert!((n.norm() - 1.0).abs() < 1e-12);
        let m = surface_normal(&p, &motion.compose(&pose), &motion.transform_point(&x)).unwrap();
        prop_assert!((motion.rotation * n - m).norm() < 1e-9);
    }

    #[test]
    fn df_is_a_bounded_symmetric_angle(a in unit(), b in unit()) {
        let d = distance_df(&a, &b).unwrap();
        prop_assert!((0.0..=std::f64::consts::PI).contains(&d));
        prop_assert!((d - distance_df(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn approach_reward_decreases_with_distance(d in 0.0..0.49f64, e in 0.0..0.49f64) {
        let cfg = RewardConfig::default();
        let (lo, hi) = if d < e { (d, e) } else { (e, d) };
        prop_assert!(approach_reward(lo, &cfg) >= approach_reward(hi, &cfg));
    }

    #[test]
    fn guiding_point_closes_in_on_the_contact(n in unit(), c in unit(), t in 0u32..100) {
        let s = GuidanceSchedule::default();
        let contact = WebContact { position: c * 0.05, direction: n };
        let gap = |t| (s.guiding_point(&contact, t) - contact.position).norm();
        prop_assert!((gap(t) - s.k(t)).abs() < 1e-12);
        prop_assert!(gap(t + 1) <= gap(t));
    }

    #[test]
    fn phases_never_move_backwards(events in prop::collection::vec(event(), 0..30)) {
        let mut p = Phase::Approach;
        for e in &events {
            let next = p.on_event(e);
            prop_assert!(next.index() >= p.index());
            if p.is_terminated() {
                prop_assert_eq!(next, p);
            }
            p = next;
        }
    }

    #[test]
    fn gae_matches_the_direct_sum(data in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, prop::bool::weighted(0.1)), 1..40), last in -1.0..1.0f64) {
        let rewards: Vec<f64> = data.iter().map(|d| d.0).collect();
        let mut values: Vec<f64> = data.iter().map(|d| d.1).collect();
        values.push(last);
        let dones: Vec<bool> = data.iter().map(|d| d.2).collect();
        let (gamma, lambda) = (0.99, 0.95);
        let (adv, ret) = compute_gae(&rewards, &values, &dones, gamma, lambda).unwrap();
        for t in 0..rewards.len() {
            let mut sum = 0.0;
            let mut w = 1.0;
            for l in t..rewards.len() {
                let next = if dones[l] { 0.0 } else { values[l + 1] };
                sum += w * (rewards[l] + gamma * next - values[l]);
                if dones[l] {
                    break;
                }
                w *= gamma * lambda;
            }
            prop_assert!((adv[t] - sum).abs() < 1e-9);
            prop_assert!((ret[t] - (sum + values[t])).abs() < 1e-9);
        }
    }
}
