use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ConditioningBundle, Denoiser, NoiseLevel, SIGMA_MAX, SIGMA_MIN};
use crate::error::{Error, Result};

/// `n_steps + 1` noise levels, log-spaced from `SIGMA_MAX` down to `SIGMA_MIN`.
pub fn sigma_schedule(n_steps: usize) -> Vec<f64> {
    let (hi, lo) = (SIGMA_MAX.ln(), SIGMA_MIN.ln());
    (0..=n_steps)
        .map(|i| match i {
            0 => SIGMA_MAX,
            i if i == n_steps => SIGMA_MIN,
            i => (hi + (lo - hi) * i as f64 / n_steps as f64).exp(),
        })
        .collect()
}

/// `(1 - w)·D_uncond + w·D_cond`, so `w = 0` and `w = 1` reproduce either
/// branch exactly.
pub fn guided_denoise(denoiser: &impl Denoiser, x: &[f64], sigma: NoiseLevel, cond: &ConditioningBundle, w: f64) -> Vec<f64> {
    let uncond = denoiser.denoise(x, sigma, &cond.dropped());
    if cond.drop_flag {
        return uncond;
    }
    let c = denoiser.denoise(x, sigma, cond);
    uncond.iter().zip(&c).map(|(u, c)| (1.0 - w) * u + w * c).collect()
}

/// Deterministic first-order sampler. Noise enters only through the initial
/// draw `x = SIGMA_MAX·ε`; each step moves along `(x - D)/σ`.
pub fn sample(denoiser: &impl Denoiser, cond: &ConditioningBundle, n_steps: usize, guidance_w: f64, rng_seed: u64) -> Result<Vec<f64>> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("sampler needs at least one step".into()));
    }
    if !guidance_w.is_finite() {
        return Err(Error::InvalidArgument(format!("guidance weight {guidance_w}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut x: Vec<f64> = (0..denoiser.data_len())
        .map(|_| SIGMA_MAX * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let sigmas = sigma_schedule(n_steps);
    for pair in sigmas.windows(2) {
        let (s, next) = (pair[0], pair[1]);
        let d = guided_denoise(denoiser, &x, NoiseLevel::clamped(s), cond, guidance_w);
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += (next - s) * (*xi - di) / s;
        }
    }
    Ok(x)
}
