//! Seeded random streams.
//!
//! Every stochastic routine takes a 64-bit seed and derives one ChaCha8
//! stream per logical unit of work (participant, replicate, chain) from the
//! seed and the unit's index path. Streams never depend on execution order,
//! so parallel and sequential runs produce identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a seed and an index path into a 256-bit ChaCha key.
fn derive_key(seed: u64, path: &[u64]) -> [u8; 32] {
    let mut state = splitmix64(seed);
    for (depth, &idx) in path.iter().enumerate() {
        state = splitmix64(state ^ splitmix64(idx.wrapping_add((depth as u64 + 1) << 56)));
    }
    let mut key = [0u8; 32];
    let mut s = state;
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    key
}

/// Independent stream for `(seed, path...)`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::from_seed(derive_key(seed, path))
}

/// Derive a child seed, for handing a seed to a routine that does its own
/// stream derivation.
pub fn child_seed(seed: u64, path: &[u64]) -> u64 {
    let key = derive_key(seed, path);
    u64::from_le_bytes(key[..8].try_into().unwrap())
}

/// Standard normal draw.
pub fn std_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
}
