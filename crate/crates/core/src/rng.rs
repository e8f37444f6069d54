//! Counter-based random number streams.
//!
//! A [`Stream`] maps `(key, counter)` deterministically to output words, so
//! any number of independent sub-streams can be derived by name or index
//! without coordination. Simulation fan-out gives each work item its own
//! stream, making results independent of scheduling and thread count.

use rand_core::RngCore;

use crate::scalar::Scalar;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic counter-based generator with named sub-streams.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            key: mix(seed ^ GOLDEN),
            counter: 0,
        }
    }

    /// Independent sub-stream identified by a label.
    pub fn derive(&self, label: &str) -> Stream {
        Stream {
            key: mix(self.key ^ mix(fnv1a(label.as_bytes()) ^ 0x517c_c1b7_2722_0a95)),
            counter: 0,
        }
    }

    /// Independent sub-stream identified by an index (e.g. simulation number).
    pub fn derive_index(&self, index: u64) -> Stream {
        Stream {
            key: mix(self.key ^ mix(index.wrapping_add(GOLDEN) ^ 0x6a09_e667_f3bc_c909)),
            counter: 0,
        }
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn u01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[0, 1)` as the scalar type.
    #[inline]
    pub fn uniform<F: Scalar>(&mut self) -> F {
        F::of(self.u01())
    }

    /// Standard normal draw (ziggurat via `rand_distr`).
    #[inline]
    pub fn normal<F: Scalar>(&mut self) -> F {
        use rand_distr::Distribution;
        let z: f64 = rand_distr::StandardNormal.sample(self);
        F::of(z)
    }

    /// Poisson draw with the given rate; returns the count as a scalar.
    pub fn poisson<F: Scalar>(&mut self, rate: f64) -> crate::error::Result<F> {
        use rand_distr::Distribution;
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(crate::CoreError::InvalidConfig(format!(
                "poisson rate must be finite and nonnegative, got {rate}"
            )));
        }
        if rate == 0.0 {
            return Ok(F::zero());
        }
        let d = rand_distr::Poisson::new(rate)
            .map_err(|e| crate::CoreError::InvalidConfig(format!("poisson rate {rate}: {e}")))?;
        Ok(F::of(d.sample(self)))
    }

    /// Draw a seed word for handing off to components that take plain
    /// integer seeds.
    #[inline]
    pub fn next_seed(&mut self) -> u64 {
        self.next_u64()
    }

    /// Fisher-Yates shuffle of indices `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            idx.swap(i, j);
        }
        idx
    }
}

impl RngCore for Stream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        let mut i = 0;
        while i < dest.len() {
            let chunk = self.next_u64().to_le_bytes();
            let n = (dest.len() - i).min(8);
            dest[i..i + n].copy_from_slice(&chunk[..n]);
            i += n;
        }
    }
}
