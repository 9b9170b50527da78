//! Ground-truth baselines: exhaustive optimal allocation and the uniform
//! random policy.
//!
//! The oracle evaluates the exact `env::reward` code path for every joint
//! action, so oracle and environment cannot drift apart. It sees the true
//! realization (full CSI) and is never shown to learners; its per-step reward
//! is the normalizer behind the ARP metric.

use crate::env::{reward, ActionCodec, AllocationAction, ChannelRealization, RadioParams};
use rand::Rng;
use thiserror::Error;

/// Enumeration guard: refuse action spaces beyond this size.
pub const MAX_ENUMERABLE_ACTIONS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("action space of {0} joint actions exceeds the enumeration guard of {MAX_ENUMERABLE_ACTIONS}")]
    ActionSpaceTooLarge(usize),
}

/// Best joint allocation for one realization by exhaustive search over all
/// N^K actions. Ties resolve to the smallest canonical encoding.
pub fn brute_force_allocate(
    re: &ChannelRealization,
    radio: &RadioParams,
    codec: &ActionCodec,
) -> Result<(AllocationAction, f64), OracleError> {
    let count = codec.count();
    if count > MAX_ENUMERABLE_ACTIONS {
        return Err(OracleError::ActionSpaceTooLarge(count));
    }
    let mut best_idx = 0usize;
    let mut best_reward = f64::NEG_INFINITY;
    for idx in 0..count {
        let action = codec.decode(idx);
        let r = reward(re, radio, &action);
        if r > best_reward {
            best_reward = r;
            best_idx = idx;
        }
    }
    Ok((codec.decode(best_idx), best_reward))
}

/// Uniform random allocation: each V2V link picks a channel independently.
pub fn random_policy<R: Rng>(codec: &ActionCodec, rng: &mut R) -> AllocationAction {
    codec.random_action(rng)
}
