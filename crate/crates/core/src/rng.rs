//! Counter-based pseudo-random numbers.
//!
//! Every random tensor in the crate is drawn from a stream identified by a
//! 64-bit seed and a string key (usually a parameter path such as
//! `neck.up0.gate.conv.weight`):
//!
//! ```text
//! stream   = seed XOR fnv1a64(key)
//! word(i)  = splitmix64_mix(stream + (i + 1) * 0x9E3779B97F4A7C15)
//! unit(i)  = (word(i) >> 11) * 2^-53                    in [0, 1)
//! uniform  = lo + (hi - lo) * unit(i)
//! ```
//!
//! `splitmix64_mix(z)` is the SplitMix64 finalizer:
//! `z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9; z = (z ^ (z >> 27)) * 0x94D049BB133111EB; z ^ (z >> 31)`
//! with wrapping arithmetic. Element `i` of a tensor is `uniform(i)` in
//! row-major order, computed in f64 and then rounded to the tensor's scalar
//! type. Because values depend only on (seed, key, index), the order in which
//! parameters are created never changes them.

use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[inline]
pub fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// A keyed, random-access stream of uniform numbers.
#[derive(Debug, Clone, Copy)]
pub struct Stream {
    base: u64,
}

impl Stream {
    #[inline]
    pub fn word(&self, i: u64) -> u64 {
        splitmix64_mix(self.base.wrapping_add((i.wrapping_add(1)).wrapping_mul(GOLDEN_GAMMA)))
    }

    #[inline]
    pub fn unit(&self, i: u64) -> f64 {
        (self.word(i) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform(&self, i: u64, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit(i)
    }
}

/// Root of all randomness for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, key: &str) -> Stream {
        Stream {
            base: self.seed ^ fnv1a64(key.as_bytes()),
        }
    }

    pub fn uniform<T: Scalar>(&self, key: &str, dims: impl Into<Dims>, lo: f64, hi: f64) -> Tensor<T> {
        let dims = dims.into();
        let s = self.stream(key);
        let data = (0..dims.numel() as u64)
            .map(|i| T::from_f64(s.uniform(i, lo, hi)))
            .collect();
        Tensor::new(dims, data).expect("uniform dims")
    }
}
