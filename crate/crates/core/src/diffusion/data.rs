use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ConditioningBundle, SIGMA_DATA};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    /// Start value only.
    SingleView,
    /// Start and end values.
    #[default]
    Interpolation,
}

/// `n` smooth sequences of length `length`: Gaussian noise integrated twice,
/// scaled so the average per-position variance is `SIGMA_DATA²`.
pub fn toy_trajectory_dataset(n: usize, length: usize, rng_seed: u64) -> Result<Array2<f64>> {
    if length < 3 {
        return Err(Error::InvalidArgument(format!("sequence length must be at least 3, got {length}")));
    }
    // Var(x_t) = sum_{k=1}^{t+1} k²
    let mean_var = (0..length).map(|t| (1..=t + 1).map(|k| (k * k) as f64).sum::<f64>()).sum::<f64>() / length as f64;
    let scale = SIGMA_DATA / mean_var.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Array2::zeros((n, length));
    for mut row in out.rows_mut() {
        let (mut vel, mut pos) = (0.0, 0.0);
        for v in row.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            vel += e;
            pos += vel;
            *v = pos * scale;
        }
    }
    Ok(out)
}

/// Boundary conditioning taken from a sequence's own endpoints.
pub fn endpoint_conditioning(sequence: &[f64], mode: ConditioningMode, camera_code: Vec<f64>) -> ConditioningBundle {
    let start = vec![sequence[0]];
    match mode {
        ConditioningMode::SingleView => ConditioningBundle::single_view(camera_code, start),
        ConditioningMode::Interpolation => ConditioningBundle::interpolation(camera_code, start, vec![sequence[sequence.len() - 1]]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let a = toy_trajectory_dataset(5, 8, 1).unwrap();
        assert_eq!(a.dim(), (5, 8));
        assert_eq!(a, toy_trajectory_dataset(5, 8, 1).unwrap());
        assert_ne!(a, toy_trajectory_dataset(5, 8, 2).unwrap());
        assert!(toy_trajectory_dataset(5, 2, 1).is_err());
    }

    #[test]
    fn empirical_std_matches_sigma_data() {
        let a = toy_trajectory_dataset(10_000, 16, 7).unwrap();
        let n = a.len() as f64;
        let mean = a.sum() / n;
        let std = (a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - SIGMA_DATA).abs() < 0.1 * SIGMA_DATA, "{std}");
    }

    #[test]
    fn conditioning_modes() {
        let s = [1.0, 2.0, 3.0];
        let c = endpoint_conditioning(&s, ConditioningMode::Interpolation, vec![]);
        assert_eq!((c.boundary_start, c.boundary_end), (Some(vec![1.0]), Some(vec![3.0])));
        let c = endpoint_conditioning(&s, ConditioningMode::SingleView, vec![]);
        assert!(c.boundary_end.is_none());
    }
}
