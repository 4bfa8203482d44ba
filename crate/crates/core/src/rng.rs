//! Counter-based random streams.
//!
//! Every draw is a pure function of `(key, counter)`, where the key is a hash
//! of a seed and a path of stream ids (replication, time index, ...). Results
//! therefore never depend on how work is scheduled across threads.

use rand_core::RngCore;
use rand_distr::{Distribution, Exp1, StandardNormal};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed and a path of stream ids into a stream key.
pub fn stream_key(seed: u64, path: &[u64]) -> u64 {
    let mut h = mix64(seed ^ 0x6A09_E667_F3BC_C909);
    for &id in path {
        h = mix64(h.wrapping_add(GOLDEN) ^ mix64(id.wrapping_add(0x3C6E_F372_FE94_F82B)));
    }
    h
}

#[derive(Debug, Clone)]
pub struct SimRng {
    key: u64,
    counter: u64,
}

impl SimRng {
    pub fn new(seed: u64, path: &[u64]) -> Self {
        Self { key: stream_key(seed, path), counter: 0 }
    }

    pub fn from_key(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    #[inline]
    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(self)
    }

    #[inline]
    pub fn sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl RngCore for SimRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}
