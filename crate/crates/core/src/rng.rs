//! Keyed random streams.
//!
//! Every sampler draws from its own ChaCha stream derived from
//! `(seed, round, purpose, index)`. Adding draws to one sampler never shifts
//! another, which gives common random numbers across methods and `V` values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Placement = 1,
    Trust = 2,
    Mobility = 3,
    Channel = 4,
    DataSize = 5,
    Status = 6,
    Activity = 7,
    Pairing = 8,
    Selector = 9,
    Sghs = 10,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes the key components into a single 64-bit stream seed.
pub fn stream_seed(seed: u64, round: u64, purpose: Purpose, index: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ round);
    h = splitmix64(h ^ purpose as u64);
    splitmix64(h ^ index)
}

/// A fresh deterministic generator for one `(seed, round, purpose, index)` key.
pub fn stream(seed: u64, round: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, round, purpose, index))
}
