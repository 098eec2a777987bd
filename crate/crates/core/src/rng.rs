//! Seed derivation and seeded generators.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] seeded through
//! [`mix`], so results depend only on ids (seed, event, round, client, epoch)
//! and never on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. A bijection on `u64`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a sequence of ids.
///
/// `h = splitmix64(h ^ id)` is folded over the ids starting from
/// `h = splitmix64(base)`. For fixed other arguments the result is a bijection
/// in each single argument, so distinct ids at any one position never collide.
pub fn mix(base: u64, ids: &[u64]) -> u64 {
    ids.iter()
        .fold(splitmix64(base), |h, &id| splitmix64(h ^ id))
}

/// Per-client training seed for one federated round.
pub fn client_seed(base: u64, round: usize, client_id: usize) -> u64 {
    mix(base, &[0x6c6f_6361_6c00, round as u64, client_id as u64])
}

/// Per-event base seed.
pub fn event_seed(base: u64, event_idx: usize) -> u64 {
    mix(base, &[0x6576_656e_7400, event_idx as u64])
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
