//! Deterministic seed derivation.
//!
//! Every stochastic component gets its own ChaCha stream derived from a base
//! seed, a string salt, and an index, so runs are reproducible from the
//! (seed, component, index) triples recorded in manifests.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step; the standard finalizer used to decorrelate seed streams.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `(base, salt, index)`.
pub fn derive(base: u64, salt: &str, index: u64) -> u64 {
    let mut state = base;
    let mut out = splitmix64(&mut state);
    for b in salt.bytes() {
        state ^= u64::from(b);
        out ^= splitmix64(&mut state);
    }
    state ^= index;
    out ^ splitmix64(&mut state)
}

/// ChaCha stream for `(base, salt, index)`.
pub fn rng(base: u64, salt: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, salt, index))
}
