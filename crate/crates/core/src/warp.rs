//! Forward warping of a reference view through its depth map.
//!
//! Source pixels are lifted to 3D, projected into the target camera and
//! splatted with a nearest-depth z-buffer. Pixels nobody lands on stay at the
//! background color and are reported invalid.

use nalgebra::Point2;

use crate::camera::{CameraFrame, Trajectory};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scale::{unproject_pixel, DepthConvention, MetricDepthMap};

/// Hole fill color.
pub const BACKGROUND: [f64; 3] = [0.5, 0.5, 0.5];

pub const DEFAULT_SPLAT_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WarpResult {
    pub image: Image,
    pub validity: Vec<bool>,
    /// Nearest depth per pixel; NaN where invalid.
    pub depth_buffer: Vec<f64>,
}

impl WarpResult {
    pub fn valid_count(&self) -> usize {
        self.validity.iter().filter(|v| **v).count()
    }

    /// Mean of the depth buffer over valid pixels.
    pub fn mean_depth(&self) -> Option<f64> {
        let n = self.valid_count();
        (n > 0).then(|| self.depth_buffer.iter().filter(|d| d.is_finite()).sum::<f64>() / n as f64)
    }
}

/// A source pixel and where it lands in the destination camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub src_pixel: (usize, usize),
    /// Continuous destination image coordinate.
    pub dst: Point2<f64>,
    /// Destination camera-space depth.
    pub depth: f64,
}

/// Projects every valid source pixel into `dst_frame`, in source row-major
/// order. Points at or behind the destination camera are dropped.
pub fn forward_correspondences(src_frame: &CameraFrame, src_depth: &MetricDepthMap, dst_frame: &CameraFrame) -> Result<Vec<Correspondence>> {
    src_depth.check_matches(src_frame)?;
    let mut out = Vec::with_capacity(src_depth.valid_count());
    for y in 0..src_depth.height {
        for x in 0..src_depth.width {
            let Some(d) = src_depth.get(x, y) else { continue };
            let world = unproject_pixel(src_frame, x, y, d, DepthConvention::ZDepth);
            if let Some(p) = dst_frame.project(&world) {
                out.push(Correspondence {
                    src_pixel: (x, y),
                    dst: p.pixel,
                    depth: p.depth,
                });
            }
        }
    }
    Ok(out)
}

/// Renders the source view from `dst_frame`.
///
/// Each point covers the destination pixel containing it plus every pixel
/// whose center lies within `splat_radius` pixels. The nearest point wins;
/// equal depths keep the earlier source pixel.
pub fn warp_frame(
    src_frame: &CameraFrame,
    src_image: &Image,
    src_depth: &MetricDepthMap,
    dst_frame: &CameraFrame,
    splat_radius: f64,
) -> Result<WarpResult> {
    if src_image.width != src_depth.width || src_image.height != src_depth.height || src_image.channels != 3 {
        return Err(Error::ShapeMismatch(format!(
            "image {}x{}x{} vs depth {}x{}",
            src_image.width, src_image.height, src_image.channels, src_depth.width, src_depth.height
        )));
    }
    if !(splat_radius >= 0.0) {
        return Err(Error::InvalidArgument(format!("splat radius must be non-negative, got {splat_radius}")));
    }
    let corr = forward_correspondences(src_frame, src_depth, dst_frame)?;
    let (w, h) = (dst_frame.width() as usize, dst_frame.height() as usize);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut owner = vec![usize::MAX; w * h];
    let r2 = splat_radius * splat_radius;
    for (i, c) in corr.iter().enumerate() {
        let (u, v) = (c.dst.x, c.dst.y);
        let x0 = (u - splat_radius - 1.0).floor().max(0.0);
        let y0 = (v - splat_radius - 1.0).floor().max(0.0);
        let x1 = (u + splat_radius + 1.0).ceil().min(w as f64 - 1.0);
        let y1 = (v + splat_radius + 1.0).ceil().min(h as f64 - 1.0);
        if x1 < x0 || y1 < y0 {
            continue;
        }
        let (cx, cy) = (u.floor(), v.floor());
        for py in y0 as usize..=y1 as usize {
            for px in x0 as usize..=x1 as usize {
                let (fx, fy) = (px as f64, py as f64);
                let containing = fx == cx && fy == cy;
                let (dx, dy) = (fx + 0.5 - u, fy + 0.5 - v);
                if !containing && dx * dx + dy * dy > r2 {
                    continue;
                }
                let j = py * w + px;
                if c.depth < zbuf[j] {
                    zbuf[j] = c.depth;
                    owner[j] = i;
                }
            }
        }
    }
    let mut image = Image::filled_rgb(w, h, BACKGROUND);
    let mut validity = vec![false; w * h];
    let mut depth_buffer = vec![f64::NAN; w * h];
    for j in 0..w * h {
        if owner[j] == usize::MAX {
            continue;
        }
        let (sx, sy) = corr[owner[j]].src_pixel;
        image.pixel_mut(j % w, j / w).copy_from_slice(src_image.pixel(sx, sy));
        validity[j] = true;
        depth_buffer[j] = zbuf[j];
    }
    Ok(WarpResult {
        image,
        validity,
        depth_buffer,
    })
}

/// One warp per trajectory frame, in order.
pub fn warp_sequence(
    src_frame: &CameraFrame,
    src_image: &Image,
    src_depth: &MetricDepthMap,
    trajectory: &Trajectory,
    splat_radius: f64,
) -> Result<Vec<WarpResult>> {
    if trajectory.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    trajectory
        .frames
        .iter()
        .map(|dst| warp_frame(src_frame, src_image, src_depth, dst, splat_radius))
        .collect()
}
