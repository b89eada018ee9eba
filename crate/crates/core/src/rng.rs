//! Seed derivation. Every random stream is a ChaCha8 generator keyed by a
//! 64-bit seed; replication `r` of an experiment with master seed `m` uses
//! `derive(m, &[..., r])`, so streams are reproducible regardless of the
//! order or thread on which work items run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a master seed together with a path of stream indices.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019))))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream for `path` under `master`.
pub fn substream(master: u64, path: &[u64]) -> StreamRng {
    stream(derive(master, path))
}

/// Stable 64-bit key for a real parameter such as `n`, for use in seed paths.
pub fn real_key(x: f64) -> u64 {
    x.to_bits()
}
