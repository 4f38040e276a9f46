//! Seed derivation. Every random stream in the workbench is a ChaCha8 stream
//! keyed by a 64-bit seed, and child seeds are derived by mixing a parent
//! seed with an ordinal so that parallel work reproduces serial output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `ordinal` under `master`.
pub fn derive_seed(master: u64, ordinal: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(ordinal.wrapping_add(0x5EED)))
}

/// Child seed under a labelled stream, e.g. `("fold", 3)`.
pub fn derive_labelled(master: u64, label: &str, ordinal: u64) -> u64 {
    let tag = label
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3));
    derive_seed(derive_seed(master, tag), ordinal)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
