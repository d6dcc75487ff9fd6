//! Seedable, stream-splittable PRNG.
//!
//! A splitmix64 expansion of `(seed, stream_id)` fills the 256-bit state of a
//! xoshiro256** generator. Normal variates come from Box–Muller with the
//! second output cached, so a call sequence is fully determined by the seed.

use crate::error::{Result, VipError};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a label; used to give each
/// protocol split its own independent seed.
pub fn derive_seed(master: u64, label: u64) -> u64 {
    let mut s = master ^ label.wrapping_mul(0xD1B5_4A32_D192_ED03);
    splitmix64(&mut s)
}

/// Fixed stream ids, one per purpose, so that e.g. changing the number of
/// epochs never perturbs a data split.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const DRAWS: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const PREDICT: u64 = 5;
    pub const SYNTH: u64 = 6;
}

#[derive(Clone, Debug)]
pub struct Rng {
    s: [u64; 4],
    stream_id: u64,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut sm = seed ^ stream_id.wrapping_mul(0xA076_1D64_78BD_642F).rotate_left(17);
        // One extra mix so stream 0 does not start from the raw seed.
        splitmix64(&mut sm);
        let mut s = [0u64; 4];
        for w in &mut s {
            *w = splitmix64(&mut sm);
        }
        if s.iter().all(|&w| w == 0) {
            s[0] = GOLDEN;
        }
        Rng { s, stream_id, spare_normal: None }
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent generator on another stream, seeded from this one's output.
    pub fn split(&mut self, stream_id: u64) -> Rng {
        let seed = self.next_u64();
        Rng::new(seed, stream_id)
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn standard_normal(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_normal()).collect()
    }

    pub fn uniform(&mut self, n: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(VipError::Parameter(format!("uniform range [{lo}, {hi}) is empty")));
        }
        let width = hi - lo;
        Ok((0..n)
            .map(|_| {
                let v = lo + width * self.next_f64();
                // rounding can land exactly on hi for tiny widths
                if v >= hi { lo } else { v }
            })
            .collect())
    }

    /// Fisher–Yates shuffle.
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
