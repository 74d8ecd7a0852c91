//! Reproducible Gaussian increments keyed by `(seed, path index, step)`.
//!
//! Each path owns a ChaCha8 stream selected by its index; step `k` reads a
//! fixed window of the keystream starting at a word position derived from `k`,
//! so any step can be regenerated in isolation.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// 32-bit words consumed per Gaussian pair (two 64-bit uniforms).
const WORDS_PER_PAIR: u128 = 4;

#[inline]
fn uniform_open(x: u64) -> f64 {
    // 53 random bits mapped into (0, 1].
    ((x >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Gaussian generator for one `(seed, path)` stream.
#[derive(Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
    per_step: usize,
}

impl GaussianStream {
    /// `per_step` normals are reserved for every step.
    pub fn new(seed: u64, path_index: u64, per_step: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self { rng, per_step }
    }

    fn pairs(&self) -> usize {
        self.per_step.div_ceil(2)
    }

    /// Writes the standard normals of `step` into `out` (length `per_step`).
    pub fn fill_step(&mut self, step: u64, out: &mut [f64]) {
        let pairs = self.pairs();
        self.rng
            .set_word_pos(step as u128 * pairs as u128 * WORDS_PER_PAIR);
        let mut i = 0;
        while i < out.len() {
            let u1 = uniform_open(self.rng.next_u64());
            let u2 = uniform_open(self.rng.next_u64());
            let r = (-2.0 * u1.ln()).sqrt();
            let th = std::f64::consts::TAU * u2;
            out[i] = r * th.cos();
            if i + 1 < out.len() {
                out[i + 1] = r * th.sin();
            }
            i += 2;
        }
    }
}

/// Increment table of a `q`-dimensional Wiener process on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrownianPath {
    pub seed: u64,
    pub path_index: u64,
    pub dt: f64,
    pub steps: usize,
    pub q: usize,
    /// Step-major increments, `steps * q` values.
    pub increments: Vec<f64>,
}

impl BrownianPath {
    #[inline]
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.q..(k + 1) * self.q]
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    /// Path on the grid with step `factor * dt`, built by summing fine increments.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return Err(Error::HorizonNotAligned {
                horizon: self.horizon(),
                dt: self.dt * factor as f64,
            });
        }
        let steps = self.steps / factor;
        let mut inc = vec![0.0; steps * self.q];
        for k in 0..steps {
            for f in 0..factor {
                let src = self.increment(k * factor + f);
                for i in 0..self.q {
                    inc[k * self.q + i] += src[i];
                }
            }
        }
        Ok(Self {
            seed: self.seed,
            path_index: self.path_index,
            dt: self.dt * factor as f64,
            steps,
            q: self.q,
            increments: inc,
        })
    }

    /// All-zero increments (deterministic runs).
    pub fn zero(dt: f64, steps: usize, q: usize) -> Self {
        Self {
            seed: 0,
            path_index: 0,
            dt,
            steps,
            q,
            increments: vec![0.0; steps * q],
        }
    }
}

/// Reproducible increments keyed by `(seed, path_index, step)`.
pub fn sample_brownian(seed: u64, path_index: u64, dt: f64, horizon: f64, q: usize) -> Result<BrownianPath> {
    if !(dt > 0.0) || !(horizon >= dt * (1.0 - 1e-12)) {
        return Err(Error::HorizonNotAligned { horizon, dt });
    }
    let r = horizon / dt;
    let steps = r.round() as usize;
    if (r - steps as f64).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::HorizonNotAligned { horizon, dt });
    }
    let mut stream = GaussianStream::new(seed, path_index, q);
    let sd = dt.sqrt();
    let mut increments = vec![0.0; steps * q];
    for k in 0..steps {
        let out = &mut increments[k * q..(k + 1) * q];
        stream.fill_step(k as u64, out);
        out.iter_mut().for_each(|v| *v *= sd);
    }
    Ok(BrownianPath {
        seed,
        path_index,
        dt,
        steps,
        q,
        increments,
    })
}

/// Mixes a base seed with a tag so that independent experiments draw from
/// unrelated key spaces (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
