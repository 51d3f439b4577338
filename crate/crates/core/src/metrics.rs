//! Image quality and camera-pose accuracy metrics.
//!
//! Pose errors compare trajectories after expressing both relative to their
//! first frame. Translations are additionally divided by the norm of the
//! furthest frame so that reconstructions with arbitrary scale compare fairly.

use serde::Serialize;

use crate::camera::{make_relative, Trajectory};
use crate::error::{Error, Result};
use crate::image::Image;

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    psnr_with_max(a, b, 1.0)
}

/// `10 log10(max² / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr_with_max(a: &Image, b: &Image, max_value: f64) -> Result<f64> {
    let mse = a.mse(b)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (max_value * max_value / mse).log10()).min(PSNR_CAP))
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter over the fully covered ("valid") region.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with_max(a, b, 1.0)
}

/// Mean local SSIM per channel, averaged over channels.
pub fn ssim_with_max(a: &Image, b: &Image, max_value: f64) -> Result<f64> {
    a.check_same_shape(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: a.width,
            height: a.height,
            window: SSIM_WINDOW,
        });
    }
    let c1 = (0.01 * max_value).powi(2);
    let c2 = (0.03 * max_value).powi(2);
    let k = gaussian_window();
    let (w, h) = (a.width, a.height);
    let mut total = 0.0;
    for c in 0..a.channels {
        let x = a.channel(c).data;
        let y = b.channel(c).data;
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
        let mx = filter_valid(&x, w, h, &k);
        let my = filter_valid(&y, w, h, &k);
        let sxx = filter_valid(&prod(&x, &x), w, h, &k);
        let syy = filter_valid(&prod(&y, &y), w, h, &k);
        let sxy = filter_valid(&prod(&x, &y), w, h, &k);
        let mut sum = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            sum += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += sum / mx.len() as f64;
    }
    if a.data == b.data {
        // rounding in the variance terms can leave a last-ulp deficit
        return Ok(1.0);
    }
    Ok(total / a.channels as f64)
}

/// First-frame relative trajectory with translations divided by the largest
/// translation norm.
pub fn normalize_trajectory(trajectory: &Trajectory) -> Result<Trajectory> {
    if trajectory.len() < 2 {
        return Err(Error::InvalidFrameCount(trajectory.len()));
    }
    let rel = make_relative(trajectory)?;
    let max = rel.translations().iter().map(|t| t.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::StaticTrajectory);
    }
    Ok(rel.map_poses(|p| crate::camera::Pose {
        rotation: p.rotation,
        translation: p.translation / max,
    }))
}

fn check_lengths(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    Ok(())
}

/// Geodesic angle of `R_a R_bᵀ` per frame.
pub fn rotation_errors(generated: &Trajectory, ground_truth: &Trajectory) -> Result<Vec<f64>> {
    check_lengths(generated, ground_truth)?;
    let g = make_relative(generated)?;
    let t = make_relative(ground_truth)?;
    Ok(g.poses()
        .zip(t.poses())
        .map(|(a, b)| {
            let c = ((a.rotation * b.rotation.transpose()).trace() - 1.0) / 2.0;
            c.clamp(-1.0, 1.0).acos()
        })
        .collect())
}

/// Sum of per-frame rotation angles, radians.
pub fn rotation_error(generated: &Trajectory, ground_truth: &Trajectory) -> Result<f64> {
    Ok(rotation_errors(generated, ground_truth)?.iter().sum())
}

pub fn translation_errors(generated: &Trajectory, ground_truth: &Trajectory) -> Result<Vec<f64>> {
    check_lengths(generated, ground_truth)?;
    let g = normalize_trajectory(generated)?;
    let t = normalize_trajectory(ground_truth)?;
    Ok(g.translations().iter().zip(t.translations()).map(|(a, b)| (a - b).norm()).collect())
}

/// Sum of per-frame distances between normalized translations.
pub fn translation_error(generated: &Trajectory, ground_truth: &Trajectory) -> Result<f64> {
    Ok(translation_errors(generated, ground_truth)?.iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FramePoseError {
    pub rotation: f64,
    pub translation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoseErrorReport {
    pub r_dist: f64,
    pub t_dist: f64,
    pub r_dist_mean: f64,
    pub t_dist_mean: f64,
    pub per_frame: Vec<FramePoseError>,
}

pub fn pose_error_report(generated: &Trajectory, ground_truth: &Trajectory) -> Result<PoseErrorReport> {
    let r = rotation_errors(generated, ground_truth)?;
    let t = translation_errors(generated, ground_truth)?;
    let n = r.len() as f64;
    Ok(PoseErrorReport {
        r_dist: r.iter().sum(),
        t_dist: t.iter().sum(),
        r_dist_mean: r.iter().sum::<f64>() / n,
        t_dist_mean: t.iter().sum::<f64>() / n,
        per_frame: r
            .into_iter()
            .zip(t)
            .map(|(rotation, translation)| FramePoseError { rotation, translation })
            .collect(),
    })
}
