//! Seeded randomness.
//!
//! Every random decision in the pipeline draws from [`SeededRng`], a ChaCha8
//! stream keyed with `rand_core`'s `seed_from_u64` expansion. Bounded integers
//! use Lemire's multiply-shift method with rejection and subsets are drawn by a
//! partial Fisher-Yates shuffle, so a mask plan can be reproduced from its seed
//! by any implementation of those three documented pieces.
//!
//! Sub-seeds are derived as `seed + stage` (wrapping), with the stage
//! constants below.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identifier written into mask plan files.
pub const RNG_ALGORITHM: &str = "chacha8-seed_from_u64/lemire-u64/partial-fisher-yates";

/// Stage offsets added to a master seed.
pub mod stage {
    /// Mask plan sampling uses the master seed unchanged.
    pub const MASK: u64 = 0;
    /// Phantom voxel noise.
    pub const PHANTOM: u64 = 0x5048_414e;
    /// Pretext model initialization.
    pub const INIT: u64 = 0x494e_4954;
    /// Mask plans used to score a trained model on held-out masks.
    pub const HELDOUT: u64 = 0x484f_4c44;
    /// Spacing between per-volume mask seeds during training.
    pub const VOLUME_STRIDE: u64 = 1 << 32;
}

pub fn derive_seed(seed: u64, stage: u64) -> u64 {
    seed.wrapping_add(stage)
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..bound`. `bound` must be non-zero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        // Lemire, "Fast Random Integer Generation in an Interval" (2019).
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = (self.next_u64() as u128) * (bound as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Uniform float in `[0, 1)` with 53 random bits.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Draw `k` distinct elements of `items` without replacement.
    ///
    /// Runs the first `k` steps of a forward Fisher-Yates shuffle on a copy
    /// of `items`: step `i` swaps position `i` with `i + below(len - i)`.
    pub fn choose_k<T: Copy>(&mut self, items: &[T], k: usize) -> Vec<T> {
        assert!(k <= items.len());
        let mut pool = items.to_vec();
        let len = pool.len();
        for i in 0..k {
            let j = i + self.below((len - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }

    pub(crate) fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}
