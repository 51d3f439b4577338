//! Toy EDM diffusion over short 1-D sequences.
//!
//! A small MLP `F` is wrapped in the EDM preconditioner
//! `D(x; σ) = c_skip(σ)·x + c_out(σ)·F(c_in(σ)·x; c_noise(σ), cond)` and trained
//! with denoising score matching. Conditioning carries a camera code and
//! optional boundary values, and can be replaced by a learned null token so
//! that one network serves both branches of classifier-free guidance.

mod data;
mod net;
mod sample;
mod train;

pub use data::{endpoint_conditioning, toy_trajectory_dataset, ConditioningMode};
pub use net::{ToyDenoiser, ToyDenoiserConfig};
pub use sample::{guided_denoise, sample, sigma_schedule};
pub use train::{dsm_loss, train, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIGMA_MIN: f64 = 0.002;
pub const SIGMA_MAX: f64 = 80.0;
pub const SIGMA_DATA: f64 = 0.5;
/// Log-normal training noise: `ln σ ~ N(P_MEAN, P_STD²)`.
pub const P_MEAN: f64 = -1.2;
pub const P_STD: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NoiseLevel(f64);

impl NoiseLevel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(SIGMA_MIN..=SIGMA_MAX).contains(&sigma) {
            return Err(Error::InvalidArgument(format!("sigma {sigma} outside [{SIGMA_MIN}, {SIGMA_MAX}]")));
        }
        Ok(NoiseLevel(sigma))
    }

    /// Clamps into the valid range.
    pub fn clamped(sigma: f64) -> Self {
        NoiseLevel(sigma.clamp(SIGMA_MIN, SIGMA_MAX))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preconditioner {
    pub sigma_data: f64,
}

impl Default for Preconditioner {
    fn default() -> Self {
        Preconditioner { sigma_data: SIGMA_DATA }
    }
}

impl Preconditioner {
    pub fn c_skip(&self, sigma: f64) -> f64 {
        let sd2 = self.sigma_data * self.sigma_data;
        sd2 / (sigma * sigma + sd2)
    }

    pub fn c_out(&self, sigma: f64) -> f64 {
        sigma * self.sigma_data / (sigma * sigma + self.sigma_data * self.sigma_data).sqrt()
    }

    pub fn c_in(&self, sigma: f64) -> f64 {
        1.0 / (sigma * sigma + self.sigma_data * self.sigma_data).sqrt()
    }

    pub fn c_noise(&self, sigma: f64) -> f64 {
        sigma.ln() / 4.0
    }
}

/// What the denoiser is told besides the noisy input.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConditioningBundle {
    pub camera_code: Vec<f64>,
    pub boundary_start: Option<Vec<f64>>,
    pub boundary_end: Option<Vec<f64>>,
    /// Replace everything above with the learned null token.
    pub drop_flag: bool,
}

impl ConditioningBundle {
    pub fn single_view(camera_code: Vec<f64>, start: Vec<f64>) -> Self {
        ConditioningBundle {
            camera_code,
            boundary_start: Some(start),
            boundary_end: None,
            drop_flag: false,
        }
    }

    pub fn interpolation(camera_code: Vec<f64>, start: Vec<f64>, end: Vec<f64>) -> Self {
        ConditioningBundle {
            camera_code,
            boundary_start: Some(start),
            boundary_end: Some(end),
            drop_flag: false,
        }
    }

    /// The same bundle with conditioning dropped.
    pub fn dropped(&self) -> Self {
        ConditioningBundle { drop_flag: true, ..self.clone() }
    }

    pub fn validate(&self, camera_dim: usize, boundary_dim: usize) -> Result<()> {
        if self.camera_code.len() != camera_dim {
            return Err(Error::ShapeMismatch(format!("camera code of length {}, expected {camera_dim}", self.camera_code.len())));
        }
        for b in [&self.boundary_start, &self.boundary_end].into_iter().flatten() {
            if b.len() != boundary_dim {
                return Err(Error::ShapeMismatch(format!("boundary of length {}, expected {boundary_dim}", b.len())));
            }
        }
        if self.boundary_end.is_some() && self.boundary_start.is_none() {
            return Err(Error::InvalidArgument("end boundary without a start boundary".into()));
        }
        Ok(())
    }
}

/// A full denoiser `D(x; σ, cond)`.
pub trait Denoiser {
    fn data_len(&self) -> usize;
    fn denoise(&self, x: &[f64], sigma: NoiseLevel, cond: &ConditioningBundle) -> Vec<f64>;
}

/// Wraps a raw network output `F` into `D`.
pub fn precondition(pre: &Preconditioner, x: &[f64], sigma: NoiseLevel, raw: &[f64]) -> Vec<f64> {
    let s = sigma.get();
    let (skip, out) = (pre.c_skip(s), pre.c_out(s));
    x.iter().zip(raw).map(|(x, f)| skip * x + out * f).collect()
}
