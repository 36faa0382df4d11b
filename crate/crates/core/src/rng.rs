//! Seeded generators. Every sampling routine takes a seed (or a generator)
//! explicitly; there is no global state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for item `index` of a stream rooted at `master`.
///
/// A pure function of its arguments: ChaCha keyed by `master`, with
/// `index` selecting an independent 64-bit stream.
pub fn stream_rng(master: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Purpose tags so that different consumers of one seed never share a stream.
pub mod purpose {
    pub const POOLS: u64 = 0x706f_6f6c;
    pub const SYNTH: u64 = 0x7379_6e74;
    pub const TRAIN: u64 = 0x7472_6e00;
    pub const INIT: u64 = 0x696e_6974;
    pub const EVAL: u64 = 0x6576_616c;
    pub const DUMP: u64 = 0x6475_6d70;
}

/// Mixes a purpose tag into a seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
