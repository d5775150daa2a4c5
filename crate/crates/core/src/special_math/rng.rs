//! Counter-based pseudo-random numbers (Philox4x32-10) and the samplers built on them.
//!
//! A generator is a key (`seed`), a stream id and a block counter. Every block
//! of output is a pure function of those three values, so a generator can be
//! cloned, replayed or forked into sub-streams without sharing state.

use crate::error::{domain, Result};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// One Philox4x32 block with 10 rounds.
pub fn philox4x32_10(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = ctr;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// SplitMix64 finalizer; used for seed derivation only.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically combines a base seed with a path of indices.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |h, &p| splitmix64(h ^ splitmix64(p.wrapping_add(0xA076_1D64_78BD_642F))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rng {
    seed: u64,
    stream: u64,
    counter: u64,
    buf: [u32; 4],
    buf_pos: usize,
    spare_normal: Option<f64>,
    forks: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Self {
            seed,
            stream,
            counter: 0,
            buf: [0; 4],
            buf_pos: 4,
            spare_normal: None,
            forks: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 128-bit blocks consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Splits off an independent sub-stream. The parent advances its fork
    /// index, so successive forks differ and the parent's own sequence is
    /// unaffected.
    pub fn fork(&mut self) -> Rng {
        self.forks += 1;
        let stream = splitmix64(self.stream ^ splitmix64(self.forks.wrapping_mul(0xD1B5_4A32_D192_ED03)));
        Rng::with_stream(self.seed, stream)
    }

    fn refill(&mut self) {
        let ctr = [
            self.counter as u32,
            (self.counter >> 32) as u32,
            self.stream as u32,
            (self.stream >> 32) as u32,
        ];
        self.buf = philox4x32_10(ctr, [self.seed as u32, (self.seed >> 32) as u32]);
        self.counter = self.counter.wrapping_add(1);
        self.buf_pos = 0;
    }

    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        if self.buf_pos >= 4 {
            self.refill();
        }
        let v = self.buf[self.buf_pos];
        self.buf_pos += 1;
        v
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let lo = self.next_u32() as u64;
        let hi = self.next_u32() as u64;
        (hi << 32) | lo
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1].
    #[inline]
    pub fn uniform_pos(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (unbiased, by rejection).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Box–Muller; the second variate of each pair is cached.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let (z0, z1) = self.normal_pair();
        self.spare_normal = Some(z1);
        z0
    }

    #[inline]
    fn normal_pair(&mut self) -> (f64, f64) {
        let r = (-2.0 * self.uniform_pos().ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * self.uniform()).sin_cos();
        (r * c, r * s)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        let mut i = 0;
        if let Some(z) = self.spare_normal.take() {
            if let Some(slot) = out.first_mut() {
                *slot = z;
                i = 1;
            } else {
                self.spare_normal = Some(z);
                return;
            }
        }
        while i + 1 < out.len() {
            let (a, b) = self.normal_pair();
            out[i] = a;
            out[i + 1] = b;
            i += 2;
        }
        if i < out.len() {
            out[i] = self.standard_normal();
        }
    }

    /// Marsaglia–Tsang; shapes below one use the `U^(1/shape)` boost.
    pub fn gamma(&mut self, shape: f64, rate: f64) -> f64 {
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0, rate);
            return g * self.uniform_pos().powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.standard_normal();
            let t = 1.0 + c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.uniform_pos();
            if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
                return d * v / rate;
            }
        }
    }
}

pub fn sample_standard_normal(rng: &mut Rng, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    rng.fill_standard_normal(&mut out);
    out
}

/// Gamma draws in the shape–rate convention (mean `shape / rate`).
pub fn sample_gamma(rng: &mut Rng, shape: f64, rate: f64, n: usize) -> Result<Vec<f64>> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(domain("sample_gamma", format!("shape must be positive, got {shape}")));
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(domain("sample_gamma", format!("rate must be positive, got {rate}")));
    }
    Ok((0..n).map(|_| rng.gamma(shape, rate)).collect())
}
