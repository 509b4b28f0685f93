//! Deterministic random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 generator
//! keyed by a user seed and a 64-bit stream id. ChaCha is counter based, so
//! the `k`-th draw of a stream is a pure function of `(seed, stream, k)` and
//! replicates can be scheduled on any number of threads without changing the
//! output. Multi-level identifiers such as `(study, sample size, replicate)`
//! are folded into one stream id with [`stream_id`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Folds a path of identifiers into a single stream id (splitmix64 mixing).
pub fn stream_id(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        h = splitmix(h ^ splitmix(p));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
