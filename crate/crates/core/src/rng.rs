//! Seeded random streams. Every consumer derives its own splitmix64 stream
//! from the scenario seed, a label and an index, so adding draws in one
//! place never shifts the numbers seen elsewhere.

use rand::SeedableRng;
use rand_xoshiro::SplitMix64;

pub type SimRng = SplitMix64;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

pub fn stream(seed: u64, label: &str, index: u64) -> SimRng {
    SimRng::seed_from_u64(mix(mix(seed ^ fnv1a(label)).wrapping_add(index)))
}
