//! Halton sequences and the per-observation draw store used by simulated
//! likelihood.
//!
//! Observation `i` owns the contiguous block of sequence indices
//! `burn + i*R + 1 ..= burn + (i+1)*R` in every dimension, so draws stay fixed
//! across optimizer iterations and never overlap between observations.

use serde::{Deserialize, Serialize};

use crate::normal::inverse_normal_cdf;
use crate::{Error, Result};

pub const DEFAULT_DRAWS: usize = 400;
pub const DEFAULT_BURN: u64 = 50;
/// Default upper bound on the draw store allocation (2 GiB).
pub const DEFAULT_MEMORY_CAP: usize = 2 << 30;

/// Radical inverse of `index` in `base`: the base-`b` digits of `index`
/// mirrored about the radix point.
///
/// The mirrored digits are accumulated as an integer numerator over `base^m`
/// and divided once, so the result is correctly rounded.
///
/// # Panics
/// If `index == 0` or `base < 2`.
pub fn radical_inverse(index: u64, base: u32) -> f64 {
    assert!(index >= 1, "radical inverse index must be >= 1");
    assert!(base >= 2, "radical inverse base must be >= 2");
    let b = base as u128;
    let mut n = index as u128;
    let mut reversed: u128 = 0;
    let mut denom: u128 = 1;
    while n > 0 {
        reversed = reversed * b + n % b;
        denom *= b;
        n /= b;
    }
    reversed as f64 / denom as f64
}

pub fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// The first `count` primes (2, 3, 5, 7, ...).
pub fn first_primes(count: usize) -> Vec<u32> {
    (2u32..).filter(|&p| is_prime(p)).take(count).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HaltonConfig {
    /// One distinct prime per random-coefficient dimension.
    pub bases: Vec<u32>,
    /// Leading sequence points discarded.
    pub burn: u64,
    /// Draws per observation (R).
    pub draws: usize,
}

impl HaltonConfig {
    /// Configuration with the first `dims` primes as bases.
    pub fn new(dims: usize, draws: usize, burn: u64) -> Self {
        Self {
            bases: first_primes(dims),
            burn,
            draws,
        }
    }

    pub fn dims(&self) -> usize {
        self.bases.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::Domain("draws per observation must be >= 1".into()));
        }
        for (i, &b) in self.bases.iter().enumerate() {
            if !is_prime(b) {
                return Err(Error::Domain(format!("Halton base {b} is not prime")));
            }
            if self.bases[..i].contains(&b) {
                return Err(Error::Domain(format!("Halton base {b} is repeated")));
            }
        }
        Ok(())
    }
}

impl Default for HaltonConfig {
    fn default() -> Self {
        Self::new(1, DEFAULT_DRAWS, DEFAULT_BURN)
    }
}

/// Uniform Halton points for observation `obs`, row-major `R x D`.
pub fn halton_block(config: &HaltonConfig, obs: usize) -> Vec<f64> {
    let r = config.draws as u64;
    let start = config.burn + obs as u64 * r;
    let mut out = Vec::with_capacity(config.draws * config.dims());
    for j in 1..=r {
        for &base in &config.bases {
            out.push(radical_inverse(start + j, base));
        }
    }
    out
}

/// Standard-normal draws `z[i][r][d]`, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawStore {
    n: usize,
    r: usize,
    d: usize,
    z: Vec<f64>,
    config: Option<HaltonConfig>,
}

impl DrawStore {
    /// A store with no random dimensions and a single (empty) draw per
    /// observation; used when a model has no random coefficients.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            r: 1,
            d: 0,
            z: Vec::new(),
            config: None,
        }
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn draws(&self) -> usize {
        self.r
    }

    pub fn dims(&self) -> usize {
        self.d
    }

    pub fn config(&self) -> Option<&HaltonConfig> {
        self.config.as_ref()
    }

    /// All draws of observation `i`, row-major `R x D`.
    #[inline]
    pub fn observation(&self, i: usize) -> &[f64] {
        let len = self.r * self.d;
        &self.z[i * len..(i + 1) * len]
    }

    #[inline]
    pub fn get(&self, i: usize, r: usize, d: usize) -> f64 {
        self.z[(i * self.r + r) * self.d + d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.z
    }
}

/// Build the draw store for `n` observations with the default memory cap.
pub fn build_draw_store(n: usize, config: &HaltonConfig) -> Result<DrawStore> {
    build_draw_store_capped(n, config, DEFAULT_MEMORY_CAP)
}

pub fn build_draw_store_capped(n: usize, config: &HaltonConfig, cap: usize) -> Result<DrawStore> {
    config.validate()?;
    if n == 0 {
        return Err(Error::Domain(
            "draw store needs at least one observation".into(),
        ));
    }
    if config.dims() == 0 {
        return Err(Error::Domain(
            "draw store needs at least one Halton base".into(),
        ));
    }
    let count = n
        .checked_mul(config.draws)
        .and_then(|v| v.checked_mul(config.dims()))
        .ok_or(Error::DrawStoreTooLarge {
            bytes: usize::MAX,
            cap,
        })?;
    let bytes = count.saturating_mul(std::mem::size_of::<f64>());
    if bytes > cap {
        return Err(Error::DrawStoreTooLarge { bytes, cap });
    }
    let mut z = Vec::with_capacity(count);
    for i in 0..n {
        for u in halton_block(config, i) {
            z.push(inverse_normal_cdf(u)?);
        }
    }
    Ok(DrawStore {
        n,
        r: config.draws,
        d: config.dims(),
        z,
        config: Some(config.clone()),
    })
}
