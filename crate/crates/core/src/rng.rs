//! Seeded random streams.
//!
//! The generator is fixed so matrices can be reproduced from `(seed, stream)`
//! by any reimplementation:
//!
//! * core: ChaCha20 (`rand_chacha::ChaCha20Rng`), keyed by
//!   `SeedableRng::seed_from_u64(seed)` (PCG32 key expansion) and positioned on
//!   the 64-bit stream id of the consumer (see [`Stream`]);
//! * uniform: `(next_u64 >> 11) * 2^-53`, giving `[0, 1)`;
//! * normal: Box-Muller on two uniforms `u1, u2` with `u1 -> 1 - u1`, emitting
//!   the cosine variate first and the sine variate on the next draw;
//! * bounded integers: `(next_u64 * n) >> 64` (Lemire multiply, no rejection);
//! * shuffles: Fisher-Yates from the last index down.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

/// 64-bit seed for a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct RngSeed(pub u64);

/// Distinct consumers draw from distinct ChaCha streams so one seed can
/// feed several of them without correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Matrix = 0,
    Init = 1,
    Shuffle = 2,
    Augment = 3,
    Plan = 4,
    Data = 5,
    Split = 6,
}

pub struct SeededRng {
    inner: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: RngSeed, stream: Stream) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed.0);
        inner.set_stream(stream as u64);
        Self {
            inner,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform index in `0..n`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}
