//! Counter-based random streams.
//!
//! Every draw is a pure function of `(key, counter)`, where the key is mixed
//! from a channel tag and the caller's coordinates (seed, epoch, batch, ...).
//! Any stream can be recomputed from its key alone, and two channels never
//! share state.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Channel tags. Each randomness source hashes its own tag into the key.
pub mod channel {
    pub const INIT: u64 = 0x494e_4954;
    pub const ORDER: u64 = 0x4f52_4445;
    pub const AUGMENT: u64 = 0x4155_474d;
    pub const BLOBS: u64 = 0x424c_4f42;
    pub const DERIVE: u64 = 0x4445_5256;
}

#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a coordinate tuple into one stream key.
pub fn mix_key(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6a09_e667_f3bc_c908, |h, &p| splitmix64(h ^ splitmix64(p)))
}

#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    pub fn keyed(parts: &[u64]) -> Self {
        Self::new(mix_key(parts))
    }

    /// Draw number `i` of this stream, independent of any prior draws.
    #[inline]
    pub fn at(&self, i: u64) -> u64 {
        splitmix64(self.key.wrapping_add(i.wrapping_mul(GOLDEN)) ^ self.key.rotate_left(17))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = self.at(self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`, safe for `ln`.
    fn next_open_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Unbiased integer in `[0, n)` (Lemire's multiply-and-reject).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Standard normal via Box–Muller (one variate per two uniforms).
    pub fn gaussian(&mut self) -> f64 {
        let u1 = self.next_open_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
