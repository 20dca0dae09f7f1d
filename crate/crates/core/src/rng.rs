//! Deterministic seed derivation.
//!
//! Every randomized component draws from a `ChaCha8Rng` seeded through
//! [`derive_rng`], which mixes a master seed with a list of context labels
//! (dataset, repetition, fold, learner, tree index, ...). Streams derived
//! with different labels are independent, so adding a learner or reordering
//! work never perturbs the draws of another component.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; full-period mixer used to chain seed components.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit FNV-1a hash for string labels (std's hasher is not
/// guaranteed stable across releases).
pub fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Mixes `master` with the context `parts` into a single 64-bit seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = master;
    let mut out = splitmix64(&mut state);
    for &p in parts {
        state ^= p.wrapping_mul(0x2545_f491_4f6c_dd1d);
        out ^= splitmix64(&mut state);
    }
    out
}

/// A ChaCha8 generator for the given derivation context.
pub fn derive_rng(master: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, parts))
}
