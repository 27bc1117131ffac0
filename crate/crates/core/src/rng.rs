//! Deterministic random streams keyed by `(seed, stream index)`.
//!
//! Every stochastic routine takes an [`RngStream`] rather than a live
//! generator, so work can be split into independent substreams whose draws do
//! not depend on how the work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub index: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, index: 0 }
    }

    pub fn with_index(seed: u64, index: u64) -> Self {
        Self { seed, index }
    }

    /// Child stream `i` of this stream. Children of distinct parents never collide
    /// as long as indices stay below 2^32.
    pub fn substream(&self, i: u64) -> Self {
        Self { seed: self.seed, index: (self.index << 32) ^ (i + 1) }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}
