//! Deterministic RNG stream derivation.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] seeded
//! through [`derive_seed`], so a master seed fully determines an experiment
//! regardless of thread count or trial execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; stable across platforms and releases.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a master seed and a path of
/// indices (e.g. `[cell, trial]`).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0xa076_1d64_78bd_642f);
    for &p in path {
        state = splitmix64(state ^ splitmix64(p));
    }
    state
}

/// RNG for a derived stream.
pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
