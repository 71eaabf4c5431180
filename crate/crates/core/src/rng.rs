//! Labelled, counter-based random streams.
//!
//! Every consumer of randomness derives its own ChaCha8 stream from a master
//! seed, a domain label and an index. Streams for different `(label, index)`
//! pairs are independent, so sketch matrices can be generated in any order
//! (or in parallel) and still come out bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain labels. Values are arbitrary but frozen: changing one changes every
/// structure built from a given seed.
pub mod label {
    pub const SKETCH: u64 = 0x534b_4554_4348;
    pub const QUERY: u64 = 0x0051_5545_5259;
    pub const PROBE: u64 = 0x0050_524f_4245;
    pub const MED_P: u64 = 0x4d45_4450;
    pub const TAIL: u64 = 0x5441_494c;
    pub const DIRECTION: u64 = 0x0044_4952;
    pub const DATA: u64 = 0x4441_5441;
    pub const ORACLE: u64 = 0x4f52_4143;
    pub const BENCH: u64 = 0x4245_4e43;
}

pub fn stream(master_seed: u64, label: u64, index: u64) -> StreamRng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&label.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(index);
    rng
}

/// Derives a child seed, for handing a sub-experiment its own master seed.
pub fn derive_seed(master_seed: u64, label: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(master_seed, label, index).next_u64()
}
