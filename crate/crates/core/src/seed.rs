//! Deterministic seed derivation for parallel Monte-Carlo work.
//!
//! Every random stream is addressed by a path of labels from a master seed,
//! e.g. `(master, experiment, trial)`. Children are derived with a SplitMix64
//! finalizer so that the stream for a given path does not depend on how many
//! other streams were created or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator behind every derived stream.
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedTree(u64);

impl SeedTree {
    pub fn new(master: u64) -> Self {
        SeedTree(master)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn child(self, label: u64) -> Self {
        SeedTree(splitmix64(self.0 ^ splitmix64(label.wrapping_add(0x6a09_e667_f3bc_c909))))
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
