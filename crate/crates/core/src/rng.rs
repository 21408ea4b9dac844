//! Seed derivation shared by every stochastic routine.
//!
//! Each independent unit of work (a chain path, an oracle draw) gets its own
//! ChaCha8 stream keyed by `(seed, index)`. Results therefore do not depend
//! on how the work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for unit `index` under the run seed `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a child seed, used where a subsystem needs its own family of
/// streams (for example the chain inside an allocation run).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
