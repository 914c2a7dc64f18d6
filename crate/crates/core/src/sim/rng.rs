//! Seeded draws for task perturbation and maze layout.
//!
//! The generator is PCG32 (`Lcg64Xsh32`, XSH-RR output). Bounded draws use
//! rejection against `2^32 mod n` so every value in `0..n` is equally likely
//! and the sequence is fully determined by `(seed, stream)`.

use rand_core::Rng;
use rand_pcg::Pcg32;

/// Stream used for drawing task parameters from a seed.
pub const STREAM_TASK: u64 = 0x7461_736b;
/// Stream used for carving a maze from its layout seed.
pub const STREAM_LAYOUT: u64 = 0x6d61_7a65;

pub struct SeededRng(Pcg32);

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self(Pcg32::new(seed, stream))
    }

    pub fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    /// Uniform draw from `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u32) -> u32 {
        assert!(n > 0, "empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.0.next_u32();
            if x >= threshold {
                return x % n;
            }
        }
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len() as u32) as usize]
    }
}
