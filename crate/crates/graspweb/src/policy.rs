use graspweb_core::env::GraspEnv;
use graspweb_core::eval::{EvalError, Policy};
use graspweb_core::gripper::ACTION_DIM;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform random normalised actions from a seeded stream.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, env: &GraspEnv) -> Result<[f64; ACTION_DIM], EvalError> {
        let mut a = [0.0; ACTION_DIM];
        for x in &mut a {
            *x = self.rng.random_range(-1.0..=1.0);
        }
        Ok(env.scale_action(&a))
    }
}
