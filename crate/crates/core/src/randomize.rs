//! Two-stage domain randomization and the curriculum that switches between
//! the stages.
//!
//! Stage 1 keeps the object shape fixed and randomizes the recognition noise
//! and the hand's start position on a sphere around the recognised web.
//! Stage 2 additionally draws the object shape. Every sample is a pure
//! function of `(seed, index)`: the index selects a ChaCha stream.

use alloc::collections::VecDeque;
use core::f64::consts::PI;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    EnvironmentalPlane, GeometryError, SuperquadricObject, SuperquadricParams,
    EPS_MAX, EPS_MIN,
};
use crate::math::{Pose, Vec3};
use crate::web::{
    perturb_web, place_web, ApproachDirection, ContactWeb, GraspType, WebError, WebNoise,
    MAX_NOISE_ROTATION, MAX_NOISE_TRANSLATION,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RandomizeError {
    #[error("invalid randomization range: {0}")]
    InvalidRange(&'static str),
    #[error(transparent)]
    Web(#[from] WebError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

/// Object shape by full depth and width (metres) and the top-surface exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    pub depth: f64,
    pub width: f64,
    pub eps2: f64,
}

impl ShapeSpec {
    pub fn params(&self) -> Result<SuperquadricParams, GeometryError> {
        SuperquadricParams::from_depth_width(self.depth, self.width, self.eps2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationConfig {
    /// Zenith range, degrees.
    pub zenith_deg: [f64; 2],
    /// Azimuth range, degrees.
    pub azimuth_deg: [f64; 2],
    /// Translation noise bound, metres.
    pub noise_translation: f64,
    /// Rotation noise bound, degrees.
    pub noise_rotation_deg: f64,
    /// Stage-1 object for the force closures.
    pub canonical: ShapeSpec,
    /// Stage-1 object for the passive-form closure.
    pub handle: ShapeSpec,
    /// Stage-2 full depth range, metres.
    pub depth: [f64; 2],
    /// Stage-2 full width range, metres.
    pub width: [f64; 2],
    /// Stage-2 top-surface exponent range.
    pub eps2: [f64; 2],
    /// Stage-2 handle depth/width range, metres.
    pub handle_size: [f64; 2],
    /// Gap between a passive-form object and the plane behind it, metres.
    pub plane_clearance: f64,
    /// Penalty-free episodes required before stage 2.
    pub curriculum_window: usize,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            zenith_deg: [0.0, 60.0],
            azimuth_deg: [-45.0, 45.0],
            noise_translation: MAX_NOISE_TRANSLATION,
            noise_rotation_deg: 1.5,
            canonical: ShapeSpec {
                depth: 0.04,
                width: 0.08,
                eps2: 1.0,
            },
            handle: ShapeSpec {
                depth: 0.02,
                width: 0.02,
                eps2: 1.0,
            },
            depth: [0.02, 0.06],
            width: [0.06, 0.10],
            eps2: [EPS_MIN, EPS_MAX],
            handle_size: [0.016, 0.024],
            plane_clearance: 0.025,
            curriculum_window: 200,
        }
    }
}

fn ordered(r: [f64; 2]) -> bool {
    r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]
}

impl RandomizationConfig {
    pub fn validate(&self) -> Result<(), RandomizeError> {
        if !ordered(self.zenith_deg) || self.zenith_deg[0] < 0.0 || self.zenith_deg[1] > 90.0 {
            return Err(RandomizeError::InvalidRange("zenith must lie in [0, 90] degrees"));
        }
        if !ordered(self.azimuth_deg) || self.azimuth_deg[0] <= -180.0 || self.azimuth_deg[1] > 180.0 {
            return Err(RandomizeError::InvalidRange("azimuth must lie in (-180, 180] degrees"));
        }
        if !(0.0..=MAX_NOISE_TRANSLATION).contains(&self.noise_translation)
            || !(0.0..=MAX_NOISE_ROTATION.to_degrees() + 1e-12).contains(&self.noise_rotation_deg)
        {
            return Err(RandomizeError::InvalidRange("noise must stay within 5 mm and 1.5 degrees"));
        }
        for r in [self.depth, self.width, self.handle_size] {
            if !ordered(r) || r[0] <= 0.0 {
                return Err(RandomizeError::InvalidRange("size ranges must be positive and ordered"));
            }
        }
        if !ordered(self.eps2) || self.eps2[0] < 0.0 || self.eps2[1] > EPS_MAX {
            return Err(RandomizeError::InvalidRange("eps2 range must lie in [0, 2]"));
        }
        if !(self.plane_clearance > 0.0) {
            return Err(RandomizeError::InvalidRange("plane clearance must be positive"));
        }
        if self.curriculum_window == 0 {
            return Err(RandomizeError::InvalidRange("curriculum window must be positive"));
        }
        self.canonical.params()?;
        self.handle.params()?;
        Ok(())
    }

    pub fn max_rotation(&self) -> f64 {
        self.noise_rotation_deg.to_radians().min(MAX_NOISE_ROTATION)
    }
}

/// Everything needed to reproduce one episode's initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationSample {
    pub object: SuperquadricObject,
    pub actual_web: ContactWeb,
    pub recognized_web: ContactWeb,
    pub approach: ApproachDirection,
    pub noise: WebNoise,
    pub plane: Option<EnvironmentalPlane>,
    pub stage: Stage,
    pub seed: u64,
}

impl RandomizationSample {
    /// The same scene under a rigid motion of the whole world.
    pub fn transformed(&self, motion: &Pose) -> Self {
        Self {
            object: SuperquadricObject::new(self.object.params, motion.compose(&self.object.pose)),
            actual_web: self.actual_web.transformed(motion),
            recognized_web: self.recognized_web.transformed(motion),
            plane: self.plane.map(|p| p.transformed(motion)),
            ..self.clone()
        }
    }
}

/// Builds a sample from explicit choices; used by the sweeps and by tests.
pub fn build_sample(
    params: SuperquadricParams,
    grasp_type: GraspType,
    approach: ApproachDirection,
    noise: WebNoise,
    plane_clearance: f64,
    stage: Stage,
    seed: u64,
) -> Result<RandomizationSample, RandomizeError> {
    params.validate()?;
    // the object stands on the z = 0 support surface
    let object = SuperquadricObject::new(params, Pose::from_translation(Vec3::new(0.0, 0.0, params.a3)));
    let actual_web = place_web(&object, grasp_type)?;
    let recognized_web = perturb_web(&actual_web, &noise)?;
    let plane = match grasp_type {
        GraspType::PassiveForm => Some(EnvironmentalPlane::behind(&object, plane_clearance)),
        _ => None,
    };
    Ok(RandomizationSample {
        object,
        actual_web,
        recognized_web,
        approach,
        noise,
        plane,
        stage,
        seed,
    })
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

fn sample_approach<R: Rng + ?Sized>(rng: &mut R, config: &RandomizationConfig) -> ApproachDirection {
    let zenith = uniform(rng, config.zenith_deg).to_radians();
    let mut azimuth = uniform(rng, config.azimuth_deg).to_radians();
    if azimuth <= -PI {
        azimuth += 2.0 * PI;
    }
    ApproachDirection { zenith, azimuth }
}

fn draw<R: Rng + ?Sized>(
    rng: &mut R,
    stage: Stage,
    grasp_type: GraspType,
    config: &RandomizationConfig,
) -> Result<RandomizationSample, RandomizeError> {
    let approach = sample_approach(rng, config);
    let noise = WebNoise::sample(rng, config.noise_translation, config.max_rotation());
    let params = match (stage, grasp_type) {
        (Stage::One, GraspType::PassiveForm) => config.handle.params()?,
        (Stage::One, _) => config.canonical.params()?,
        (Stage::Two, GraspType::PassiveForm) => {
            let depth = uniform(rng, config.handle_size);
            let width = uniform(rng, config.handle_size);
            SuperquadricParams::from_depth_width(depth, width, uniform(rng, config.eps2))?
        }
        (Stage::Two, _) => {
            let depth = uniform(rng, config.depth);
            let width = uniform(rng, config.width);
            SuperquadricParams::from_depth_width(depth, width, uniform(rng, config.eps2))?
        }
    };
    let seed = rng.next_u64();
    build_sample(params, grasp_type, approach, noise, config.plane_clearance, stage, seed)
}

/// Fixed canonical shape, random noise and approach direction.
pub fn sample_stage1<R: Rng + ?Sized>(
    rng: &mut R,
    grasp_type: GraspType,
    config: &RandomizationConfig,
) -> Result<RandomizationSample, RandomizeError> {
    draw(rng, Stage::One, grasp_type, config)
}

/// Stage 1 plus a uniformly drawn object shape.
pub fn sample_stage2<R: Rng + ?Sized>(
    rng: &mut R,
    grasp_type: GraspType,
    config: &RandomizationConfig,
) -> Result<RandomizationSample, RandomizeError> {
    draw(rng, Stage::Two, grasp_type, config)
}

/// The RNG stream for sample `index` of a run seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn sample_indexed(
    seed: u64,
    index: u64,
    stage: Stage,
    grasp_type: GraspType,
    config: &RandomizationConfig,
) -> Result<RandomizationSample, RandomizeError> {
    draw(&mut sample_rng(seed, index), stage, grasp_type, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub stage: Stage,
    /// Most recent episodes, `true` when penalized; at most `window_len` long.
    pub recent: VecDeque<bool>,
    pub window_len: usize,
    pub episodes: u64,
}

impl CurriculumState {
    pub fn new(window_len: usize) -> Self {
        Self {
            stage: Stage::One,
            recent: VecDeque::with_capacity(window_len),
            window_len,
            episodes: 0,
        }
    }

    pub fn penalty_rate(&self) -> f64 {
        if self.recent.is_empty() {
            0.0
        } else {
            self.recent.iter().filter(|p| **p).count() as f64 / self.recent.len() as f64
        }
    }
}

/// Records one finished episode. Stage 2 starts once the last `window_len`
/// episodes were all free of avoiding penalties; there is no way back.
pub fn update_curriculum(state: &CurriculumState, penalized: bool) -> CurriculumState {
    let mut next = state.clone();
    next.episodes += 1;
    if next.recent.len() == next.window_len {
        next.recent.pop_front();
    }
    next.recent.push_back(penalized);
    if next.stage == Stage::One
        && next.recent.len() == next.window_len
        && next.recent.iter().all(|p| !p)
    {
        next.stage = Stage::Two;
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DEFAULT_HALF_HEIGHT;
    use alloc::vec::Vec;

    /// Asymptotic Kolmogorov p-value for statistic `d` on `n` samples.
    fn ks_p_value(d: f64, n: usize) -> f64 {
        let sn = libm::sqrt(n as f64);
        let lambda = (sn + 0.12 + 0.11 / sn) * d;
        let mut sum = 0.0;
        for k in 1..200 {
            let k = k as f64;
            let sign = if (k as i64) % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * libm::exp(-2.0 * k * k * lambda * lambda);
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }

    #[test]
    fn stage1_bounds_and_zenith_uniformity() {
        let cfg = RandomizationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut zen: Vec<f64> = Vec::new();
        for _ in 0..10_000 {
            let s = sample_stage1(&mut rng, GraspType::ActiveForce, &cfg).unwrap();
            assert!(s.noise.translation.norm() <= 0.005);
            assert!(s.noise.rotation.norm() <= 1.5f64.to_radians() + 1e-15);
            assert_eq!(s.object.params, cfg.canonical.params().unwrap());
            let az = s.approach.azimuth.to_degrees();
            assert!((-45.0..=45.0).contains(&az));
            zen.push(s.approach.zenith.to_degrees());
        }
        zen.sort_by(f64::total_cmp);
        let n = zen.len();
        let d = zen
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let cdf = z / 60.0;
                (cdf - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks_p_value(d, n) > 0.01, "D = {d}");
    }

    #[test]
    fn collapsed_ranges_fix_the_approach() {
        let cfg = RandomizationConfig {
            zenith_deg: [10.0, 10.0],
            azimuth_deg: [-15.0, -15.0],
            noise_translation: 0.0,
            noise_rotation_deg: 0.0,
            ..RandomizationConfig::default()
        };
        let a = sample_indexed(3, 0, Stage::One, GraspType::ActiveForce, &cfg).unwrap();
        let b = sample_indexed(4, 9, Stage::One, GraspType::ActiveForce, &cfg).unwrap();
        assert_eq!(a.approach, b.approach);
        assert_eq!(a.actual_web, b.actual_web);
        assert_eq!(a.recognized_web, a.actual_web);
        assert_ne!(a.seed, b.seed);
    }

    #[test]
    fn stage2_shapes_stay_in_range() {
        let cfg = RandomizationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..10_000 {
            let g = GraspType::ALL[i % 2];
            let s = sample_stage2(&mut rng, g, &cfg).unwrap();
            let p = s.object.params;
            assert!((0.01..=0.03).contains(&p.a1), "{}", p.a1);
            assert!((0.03..=0.05).contains(&p.a2), "{}", p.a2);
            assert_eq!(p.a3, DEFAULT_HALF_HEIGHT);
            for c in &s.actual_web.contacts {
                assert!((s.object.inside_outside(&c.position) - 1.0).abs() < 0.02);
            }
        }
        let ellipses = RandomizationConfig {
            eps2: [1.0, 1.0],
            ..cfg
        };
        for _ in 0..100 {
            let s = sample_stage2(&mut rng, GraspType::ActiveForce, &ellipses).unwrap();
            assert_eq!(s.object.params.eps2, 1.0);
        }
    }

    #[test]
    fn indexed_sampling_is_reproducible() {
        let cfg = RandomizationConfig::default();
        for g in GraspType::ALL {
            for i in 0..20 {
                let a = sample_indexed(77, i, Stage::Two, g, &cfg).unwrap();
                let b = sample_indexed(77, i, Stage::Two, g, &cfg).unwrap();
                assert_eq!(a, b);
            }
        }
        let a = sample_indexed(77, 0, Stage::One, GraspType::ActiveForce, &cfg).unwrap();
        let b = sample_indexed(77, 1, Stage::One, GraspType::ActiveForce, &cfg).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn curriculum_switches_once() {
        let mut s = CurriculumState::new(5);
        for _ in 0..4 {
            s = update_curriculum(&s, false);
        }
        assert_eq!(s.stage, Stage::One);
        s = update_curriculum(&s, true);
        assert_eq!(s.stage, Stage::One);
        for _ in 0..4 {
            s = update_curriculum(&s, false);
        }
        assert_eq!(s.stage, Stage::One, "penalized episode still in the window");
        s = update_curriculum(&s, false);
        assert_eq!(s.stage, Stage::Two);
        for _ in 0..20 {
            s = update_curriculum(&s, true);
            assert_eq!(s.stage, Stage::Two);
        }
        assert_eq!(s.episodes, 30);
    }

    #[test]
    fn rejects_bad_ranges() {
        let mut cfg = RandomizationConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.zenith_deg = [30.0, 10.0];
        assert!(cfg.validate().is_err());
        let cfg = RandomizationConfig {
            noise_translation: 0.01,
            ..RandomizationConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
