//! Seed derivation and generator construction.
//!
//! Every random draw in the harness comes from a `ChaCha8Rng` seeded by
//! [`derive`]: the master seed is mixed with a stream label and a list of
//! integer coordinates (simulation index, tree index, ...) through
//! SplitMix64 finalizers, so any cell can be reproduced in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// `derive(master, label, coords)`: fold label hash and coordinates into the master seed.
pub fn derive(master: u64, label: &str, coords: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ splitmix64(fnv1a(label)));
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}
