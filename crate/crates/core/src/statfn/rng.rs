//! Deterministic random streams and the samplers the simulations need.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Result};

/// A single-owner random stream identified by `(master_seed, stream_id)`.
///
/// Two streams built from the same pair produce identical sequences no
/// matter which thread consumes them.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self { rng, stream_id }
    }

    /// Stream whose id is derived from a tuple of labels.
    pub fn derived(master_seed: u64, labels: &[u64]) -> Self {
        Self::new(master_seed, stream_id(labels))
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes an ordered tuple of labels into a 64-bit stream id.
pub fn stream_id(labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(0x6A09_E667_F3BC_C909, |h, &l| splitmix64(h ^ splitmix64(l)))
}

pub fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> Result<f64> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(domain(format!(
            "uniform needs finite lo <= hi (lo={lo}, hi={hi})"
        )));
    }
    if lo == hi {
        return Ok(lo);
    }
    Ok(lo + (hi - lo) * rng.random::<f64>())
}

/// Student-t draw as `N(0,1) / sqrt(χ²_ν / ν)`.
pub fn sample_t<R: Rng + ?Sized>(df: u32, rng: &mut R) -> Result<f64> {
    if df == 0 {
        return Err(domain("t distribution needs df >= 1"));
    }
    let z = sample_std_normal(rng);
    let chi2: f64 = (0..df)
        .map(|_| {
            let g = sample_std_normal(rng);
            g * g
        })
        .sum();
    Ok(z / (chi2 / df as f64).sqrt())
}

/// Poisson draw by sequential-search inversion.
///
/// Means above 30 are split into chunks of at most 30 so `e^{-λ}` never
/// underflows.
pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<u64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(domain(format!(
            "Poisson needs finite lambda >= 0 (lambda={lambda})"
        )));
    }
    const CHUNK: f64 = 30.0;
    let mut remaining = lambda;
    let mut total = 0;
    while remaining > 0.0 {
        let l = remaining.min(CHUNK);
        remaining -= l;
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = (-l).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= l / k as f64;
            cdf += p;
            if p == 0.0 {
                break;
            }
        }
        total += k;
    }
    Ok(total)
}

pub fn sample_bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<u8> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("Bernoulli needs p in [0, 1] (p={p})")));
    }
    Ok(u8::from(rng.random::<f64>() < p))
}
