//! Deterministic RNG streams. Every sampler takes an explicit seed, and
//! coupled constructions derive one independent stream per (label, site)
//! so that enlarging a volume adds events without perturbing existing ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a seed with salts into a new independent 64-bit seed.
pub fn derive_seed(seed: u64, salt_a: u64, salt_b: u64) -> u64 {
    let mut state = seed ^ salt_a.rotate_left(17) ^ salt_b.rotate_left(41);
    let mut out = splitmix64(&mut state);
    out ^= splitmix64(&mut state);
    out
}

/// An independent ChaCha stream for the given (seed, salt_a, salt_b) key.
pub fn substream(seed: u64, salt_a: u64, salt_b: u64) -> ChaCha12Rng {
    let mut state = seed ^ salt_a.rotate_left(17) ^ salt_b.rotate_left(41);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Poisson draw that tolerates a zero mean.
pub fn poisson_count<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("positive finite mean");
    let draw: f64 = dist.sample(rng);
    draw as u64
}
