use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::{Gaussian3D, GaussianCloud, Provenance};
use crate::camera::{rays::pixel_ray_unchecked, Trajectory};
use crate::error::{Error, Result};

/// Pre-activation Gaussian parameters, one 12-vector per pixel of each frame.
///
/// Channel layout: `[0..3)` RGB, `[3..6)` log-scale, `[6..10)` quaternion
/// `(w, x, y, z)`, `[10]` opacity logit, `[11]` ray distance (pre-softplus).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFeatureMap {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl GaussianFeatureMap {
    pub const CHANNELS: usize = 12;

    pub fn zeros(frames: usize, height: usize, width: usize) -> Self {
        GaussianFeatureMap {
            frames,
            height,
            width,
            data: vec![0.0; frames * height * width * Self::CHANNELS],
        }
    }

    pub fn from_data(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * height * width * Self::CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {frames}x{height}x{width}x12 feature map",
                data.len()
            )));
        }
        Ok(GaussianFeatureMap {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub fn texel(&self, t: usize, y: usize, x: usize) -> &[f64] {
        let i = ((t * self.height + y) * self.width + x) * Self::CHANNELS;
        &self.data[i..i + Self::CHANNELS]
    }

    pub fn texel_mut(&mut self, t: usize, y: usize, x: usize) -> &mut [f64] {
        let i = ((t * self.height + y) * self.width + x) * Self::CHANNELS;
        &mut self.data[i..i + Self::CHANNELS]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeOptions {
    /// Upper clamp for activated scales, world units.
    pub scale_max: f64,
}

pub const SCALE_MIN: f64 = 1e-6;

/// Keeps decoded opacity strictly inside `(0, 1)`.
const OPACITY_EPS: f64 = 1e-12;

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions { scale_max: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecodeStats {
    /// Raw quaternions with zero norm, replaced by the identity rotation.
    pub zero_quaternions: usize,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
#[inline]
pub fn inverse_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Turns each texel into a Gaussian placed along its pixel ray and merges the
/// primitives of all frames.
pub fn decode_gaussians(map: &GaussianFeatureMap, trajectory: &Trajectory, opts: &DecodeOptions) -> Result<(GaussianCloud, DecodeStats)> {
    if trajectory.len() != map.frames {
        return Err(Error::ShapeMismatch(format!(
            "{} trajectory frames for {} feature-map frames",
            trajectory.len(),
            map.frames
        )));
    }
    if map.data.len() != map.rows() * GaussianFeatureMap::CHANNELS {
        return Err(Error::ShapeMismatch("feature map data length".into()));
    }
    let mut stats = DecodeStats::default();
    let n = map.rows();
    let mut gaussians = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    let mut anchors = Vec::with_capacity(n);
    for (t, frame) in trajectory.frames.iter().enumerate() {
        if frame.width() as usize != map.width || frame.height() as usize != map.height {
            return Err(Error::ShapeMismatch(format!(
                "frame {t} is {}x{}, feature map is {}x{}",
                frame.width(),
                frame.height(),
                map.width,
                map.height
            )));
        }
        for y in 0..map.height {
            for x in 0..map.width {
                let f = map.texel(t, y, x);
                let ray = pixel_ray_unchecked(frame, x as f64, y as f64);
                let q = Quaternion::new(f[6], f[7], f[8], f[9]);
                let rotation = if q.norm() < 1e-12 {
                    stats.zero_quaternions += 1;
                    UnitQuaternion::identity()
                } else {
                    UnitQuaternion::from_quaternion(q)
                };
                let scale = |v: f64| v.exp().clamp(SCALE_MIN, opts.scale_max);
                gaussians.push(Gaussian3D {
                    mean: ray.at(softplus(f[11])),
                    scales: Vector3::new(scale(f[3]), scale(f[4]), scale(f[5])),
                    rotation,
                    opacity: sigmoid(f[10]).clamp(OPACITY_EPS, 1.0 - OPACITY_EPS),
                    color: [sigmoid(f[0]), sigmoid(f[1]), sigmoid(f[2])],
                });
                provenance.push(Provenance {
                    frame: t as u32,
                    pixel: (y * map.width + x) as u32,
                });
                anchors.push(ray);
            }
        }
    }
    Ok((
        GaussianCloud {
            gaussians,
            provenance,
            anchors: Some(anchors),
        },
        stats,
    ))
}
