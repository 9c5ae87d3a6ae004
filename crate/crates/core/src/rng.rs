//! Named, seedable random streams.
//!
//! Every consumer of randomness asks for `(seed, stream name)`; the same pair
//! always produces the same sequence, and different names give independent
//! ChaCha streams under one seed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const STREAM_REJECTION: &str = "rejection";

fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_rng(seed: u64, stream: &str) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(stream));
    rng
}

/// Child seed for item `index` of a labelled family (e.g. one Monte Carlo trial).
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(fnv1a(label) ^ splitmix64(index)))
}
