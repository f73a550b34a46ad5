//! Generalised advantage estimation.

use alloc::vec::Vec;

use super::PpoError;

/// Advantages and value targets for a rollout of `T` steps.
///
/// `values` has `T + 1` entries: the value of every visited state and of the
/// state after the last step. `dones[t]` means step `t` ended its episode, so
/// neither the next value nor later TD errors flow back across it.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let t_len = rewards.len();
    if values.len() != t_len + 1 {
        return Err(PpoError::LengthMismatch {
            expected: t_len + 1,
            got: values.len(),
        });
    }
    if dones.len() != t_len {
        return Err(PpoError::LengthMismatch {
            expected: t_len,
            got: dones.len(),
        });
    }
    let mut adv = alloc::vec![0.0; t_len];
    let mut next = 0.0;
    for t in (0..t_len).rev() {
        let cont = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * cont - values[t];
        next = delta + gamma * lambda * cont * next;
        adv[t] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}
