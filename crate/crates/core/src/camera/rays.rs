use nalgebra::Vector3;

use super::CameraFrame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Unit length.
    pub direction: Vector3<f64>,
}

impl Ray {
    /// Plücker coordinates `(o × d, d)`.
    pub fn plucker(&self) -> [f64; 6] {
        let m = self.origin.cross(&self.direction);
        let d = self.direction;
        [m.x, m.y, m.z, d.x, d.y, d.z]
    }

    pub fn at(&self, distance: f64) -> Vector3<f64> {
        self.origin + self.direction * distance
    }
}

/// Ray through the center of pixel `(u, v)`.
///
/// `u` and `v` are pixel indices and may be fractional; the ray passes
/// through the image point `(u + 0.5, v + 0.5)`. The camera translation is
/// the ray origin and does not enter the direction.
pub fn pixel_ray(frame: &CameraFrame, u: f64, v: f64) -> Result<Ray> {
    let k = &frame.intrinsics;
    let inside = u >= 0.0 && v >= 0.0 && u < k.width as f64 && v < k.height as f64;
    if !inside {
        return Err(Error::PixelOutOfBounds {
            u,
            v,
            width: k.width,
            height: k.height,
        });
    }
    Ok(pixel_ray_unchecked(frame, u, v))
}

pub(crate) fn pixel_ray_unchecked(frame: &CameraFrame, u: f64, v: f64) -> Ray {
    let local = frame.intrinsics.unproject(u + 0.5, v + 0.5);
    Ray {
        origin: frame.pose.center(),
        direction: (frame.pose.rotation * local).normalize(),
    }
}

/// Per-pixel 6-channel Plücker embedding, stored row-major as `H x W x 6`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayEmbeddingMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RayEmbeddingMap {
    pub const CHANNELS: usize = 6;

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * Self::CHANNELS;
        &self.data[i..i + Self::CHANNELS]
    }

    pub fn moment(&self, x: usize, y: usize) -> Vector3<f64> {
        let p = self.pixel(x, y);
        Vector3::new(p[0], p[1], p[2])
    }

    pub fn direction(&self, x: usize, y: usize) -> Vector3<f64> {
        let p = self.pixel(x, y);
        Vector3::new(p[3], p[4], p[5])
    }
}

/// Ray embedding at the camera's native resolution.
pub fn ray_embedding_map(frame: &CameraFrame) -> RayEmbeddingMap {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let mut data = Vec::with_capacity(w * h * RayEmbeddingMap::CHANNELS);
    for y in 0..h {
        for x in 0..w {
            let ray = pixel_ray_unchecked(frame, x as f64, y as f64);
            data.extend_from_slice(&ray.plucker());
        }
    }
    RayEmbeddingMap {
        width: w,
        height: h,
        data,
    }
}

/// Ray embedding sampled at another resolution (e.g. a latent grid); the
/// intrinsics are rescaled to `width x height` first.
pub fn ray_embedding_map_at(frame: &CameraFrame, width: u32, height: u32) -> RayEmbeddingMap {
    ray_embedding_map(&frame.rescaled(width, height))
}
