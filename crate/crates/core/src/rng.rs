//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, stream, position)`: the state of a
//! stream is just an offset into a SplitMix64 sequence whose starting point is
//! derived from the seed and the stream index. Any partition of work across
//! threads therefore reproduces the same numbers, as long as each logical unit
//! (a pure state, a replica, a Monte Carlo chunk) owns its stream.

use rand::RngCore;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A SplitMix64 stream keyed by `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct StreamRng {
    base: u64,
    counter: u64,
}

impl StreamRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let base = mix64(mix64(seed ^ 0x5851_f42d_4c95_7f2d).wrapping_add(stream.wrapping_mul(GOLDEN)));
        Self { base, counter: 0 }
    }

    /// Stream for a nested key, e.g. `(seed, experiment, replica)`.
    pub fn nested(seed: u64, outer: u64, inner: u64) -> Self {
        Self::new(mix64(seed.wrapping_add(outer.wrapping_mul(GOLDEN)) ^ 0x2545_f491_4f6c_dd1d), inner)
    }

    /// Number of 64-bit words consumed so far.
    pub fn position(&self) -> u64 {
        self.counter
    }
}

impl RngCore for StreamRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.base.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Derives the seed of the `index`-th disorder replica from a base seed.
pub fn replica_seed(base_seed: u64, index: u64) -> u64 {
    base_seed.wrapping_add(index)
}
