//! Seeded, stream-addressable random number generation.
//!
//! Every sampler in the crate draws from a [`ChaCha8Rng`] obtained through an
//! [`RngHandle`]. ChaCha is counter based with a 64-bit stream selector, so
//! independent per-cell or per-row streams can be handed to worker threads
//! and the resulting draws do not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngHandle {
    pub seed: u64,
    pub stream: u64,
}

impl RngHandle {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// A fresh generator positioned at the start of this (seed, stream) pair.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Handle for a sub-stream addressed by `(iteration, step, lane)`.
    ///
    /// The layout reserves 16 bits for `lane` (rows, factors, cells), 8 bits
    /// for `step` and the remaining 40 bits for the iteration counter. The
    /// parent stream is mixed in so that distinct parents never collide.
    pub fn substream(&self, iteration: u64, step: u8, lane: u16) -> Self {
        let local = (iteration << 24) | ((step as u64) << 16) | lane as u64;
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(local)),
        }
    }
}

/// SplitMix64 finaliser; used to derive well-spread seeds and stream ids.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
