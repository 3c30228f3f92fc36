//! Deterministic seed derivation.
//!
//! A run's seed is `mix(master ⊕ mix(index + 1))` where `mix` is the
//! SplitMix64 finalizer. Each run seed depends only on the master seed and
//! the run index, so appending runs never changes the streams of earlier
//! runs. Within a run, independent streams (one per channel, one for sensing
//! noise) are ChaCha8 streams keyed by the run seed and selected with
//! [`stream`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(master ^ mix(index.wrapping_add(1)))
}

/// Independent random stream `stream_id` of the run keyed by `seed`.
pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
