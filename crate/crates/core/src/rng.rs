//! Random number generation.
//!
//! Every stochastic step in the crate draws from [`Rng`], which is
//! xoshiro256++ seeded through SplitMix64 (`seed_from_u64`). Independent
//! streams for the same run are derived with [`stream`], so reordering one
//! stage never perturbs another.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

/// Purpose tags for derived streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 0x5EED_0001,
    Split = 0x5EED_0002,
    Init = 0x5EED_0003,
    Train = 0x5EED_0004,
    Eval = 0x5EED_0005,
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// A generator for `purpose` under `seed`, independent of the other purposes.
pub fn stream(seed: u64, purpose: Stream) -> Rng {
    Rng::seed_from_u64(splitmix(seed ^ splitmix(purpose as u64)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
