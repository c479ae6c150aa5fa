//! Counter-based random streams.
//!
//! Every independent unit of work (a trajectory, an umbrella window, a
//! generation block, an experiment) draws from its own ChaCha stream keyed by
//! the master seed and a path of indices. Results therefore do not depend on
//! scheduling order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds an index path into a single 64-bit stream id.
pub fn stream_id(path: &[u64]) -> u64 {
    path.iter().fold(0x6A09_E667_F3BC_C908, |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

/// Derives a child seed, used when a sub-component takes a plain `u64` seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    splitmix64(master ^ stream_id(path))
}

/// Stream for `(master, path)`.
pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream_id(path));
    rng
}
