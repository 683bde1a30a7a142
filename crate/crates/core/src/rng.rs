//! Deterministic random streams.
//!
//! Every random choice in the pipeline flows from one global seed. Work units
//! (a seed entity, a question) get their own ChaCha stream keyed by a stable
//! hash of a string key, so they can run in any order or in parallel and still
//! reproduce the same draws.

use core::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stable 64-bit FNV-1a hash of `key`.
pub fn stable_hash(key: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(key.as_bytes());
    h.finish()
}

/// Rng stream for the unit of work named `key` under `global_seed`.
pub fn stream(global_seed: u64, key: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(global_seed);
    rng.set_stream(stable_hash(key));
    rng
}
