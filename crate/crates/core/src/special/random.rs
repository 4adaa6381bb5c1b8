use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::gamma::ln_gamma_unchecked;
use crate::error::{Error, Result};

/// Deterministic, splittable random stream.
///
/// Backed by ChaCha8. A child stream's key is the SHA-256 digest of the
/// parent key and the child index, so children of one parent never share a
/// key and do not depend on how much of the parent has been consumed.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    key: [u8; 32],
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        let key = ChaCha8Rng::seed_from_u64(seed).get_seed();
        Self::from_key(seed, key)
    }

    fn from_key(seed: u64, key: [u8; 32]) -> Self {
        Self {
            seed,
            key,
            rng: ChaCha8Rng::from_seed(key),
            spare_normal: None,
        }
    }

    /// The root seed this stream descends from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream number `index`.
    pub fn split(&self, index: u64) -> RandomSource {
        let digest = Sha256::new()
            .chain_update(self.key)
            .chain_update(index.to_le_bytes())
            .finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        Self::from_key(self.seed, key)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `(0, 1]`, safe to take logarithms of.
    pub fn uniform_pos(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }

    /// Standard normal by the Marsaglia polar method.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * f);
                return u * f;
            }
        }
    }
}

/// One Gamma(shape, scale) variate (mean `shape·scale`).
///
/// Marsaglia–Tsang squeeze/rejection for shape ≥ 1; smaller shapes are
/// boosted to `shape + 1` and multiplied by `U^{1/shape}`.
pub fn sample_gamma(shape: f64, scale: f64, rng: &mut RandomSource) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::InvalidShape { shape });
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidScale { scale });
    }
    Ok(scale * standard_gamma(shape, rng))
}

fn standard_gamma(shape: f64, rng: &mut RandomSource) -> f64 {
    if shape < 1.0 {
        let boost = rng.uniform_pos().powf(1.0 / shape);
        return standard_gamma(shape + 1.0, rng) * boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.standard_normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.uniform_pos();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// One Poisson(mean) variate. Mean 0 returns 0 without consuming randomness.
pub fn sample_poisson(mean: f64, rng: &mut RandomSource) -> Result<u64> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::NegativeMean { mean });
    }
    if mean == 0.0 {
        return Ok(0);
    }
    if mean < 10.0 {
        Ok(poisson_multiplication(mean, rng))
    } else {
        Ok(poisson_ptrs(mean, rng))
    }
}

fn poisson_multiplication(mean: f64, rng: &mut RandomSource) -> u64 {
    let limit = (-mean).exp();
    let mut k = 0;
    let mut p = rng.uniform();
    while p > limit {
        k += 1;
        p *= rng.uniform();
    }
    k
}

// Hörmann's transformed rejection with squeeze (PTRS), valid for mean ≥ 10.
fn poisson_ptrs(mean: f64, rng: &mut RandomSource) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.uniform() - 0.5;
        let v = rng.uniform_pos();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_gamma_unchecked(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Noncentral chi-square variate as a Poisson(noncentrality/2) mixture of
/// central chi-squares, i.e. `Gamma(df/2 + J, 2)`.
pub fn sample_noncentral_chisq(df: f64, noncentrality: f64, rng: &mut RandomSource) -> Result<f64> {
    if !(df > 0.0 && df.is_finite()) {
        return Err(Error::InvalidDf { df });
    }
    if !(noncentrality >= 0.0 && noncentrality.is_finite()) {
        return Err(Error::NegativeNoncentrality { noncentrality });
    }
    let j = sample_poisson(0.5 * noncentrality, rng)?;
    Ok(2.0 * standard_gamma(0.5 * df + j as f64, rng))
}
