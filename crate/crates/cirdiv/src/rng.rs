//! Reproducible per-path random number streams.
//!
//! Every Monte-Carlo path draws from its own `xoshiro256++` generator whose
//! state is derived by SplitMix64 from the pair `(seed, stream)`. Streams
//! are therefore independent of scheduling: path `i` sees the same numbers
//! whether the reduction runs on one thread or many, and a single recorded
//! 64-bit seed reproduces an entire experiment bit for bit.

use rand::RngCore;

const GOLDEN: u64 = 0x9E3779B97F4A7C15;

#[inline(always)]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// xoshiro256++ (Blackman–Vigna), seeded per `(seed, stream)` pair.
#[derive(Debug, Clone)]
pub struct PathRng {
    s: [u64; 4],
}

impl PathRng {
    /// Generator for stream `stream` of experiment `seed`.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut sm = seed ^ stream.wrapping_mul(GOLDEN) ^ 0x6A09E667F3BCC908;
        let mut s = [0u64; 4];
        for slot in &mut s {
            *slot = splitmix64(&mut sm);
        }
        // the all-zero state is invalid for xoshiro
        if s == [0, 0, 0, 0] {
            s[0] = GOLDEN;
        }
        PathRng { s }
    }
}

impl RngCore for PathRng {
    #[inline(always)]
    fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    #[inline(always)]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
