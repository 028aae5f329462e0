//! Seeded, stream-separated random number generation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A 64-bit seed plus a stream id. Equal pairs give bit-identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct RandomSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RandomSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Seed for the `index`-th independent sub-experiment.
    pub fn fork(&self, index: u64) -> Self {
        Self {
            seed: self.seed ^ self.stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17),
            stream: index,
        }
    }
}
