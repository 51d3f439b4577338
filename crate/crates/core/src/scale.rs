//! Metric scale recovery for up-to-scale reconstructions.
//!
//! A sparse structure-from-motion cloud is projected into a reference frame
//! that also has a metric depth map. Each projected point votes with the
//! ratio of metric depth to reconstructed depth; the median vote is the
//! scale factor.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraFrame, Trajectory};
use crate::error::{Error, Result};
use crate::image::Image;

/// Default upper bound for valid depths, in meters.
pub const DEFAULT_DEPTH_MAX: f64 = 1.0e4;

/// Minimum number of usable sparse points for a scale estimate.
pub const MIN_OVERLAP_POINTS: usize = 10;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub colors: Option<Vec<[f64; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        PointCloud { points, colors: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidArgument("point cloud has non-finite coordinates".into()));
        }
        if let Some(c) = &self.colors {
            if c.len() != self.points.len() {
                return Err(Error::ShapeMismatch(format!("{} colors for {} points", c.len(), self.points.len())));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| p * k).collect(),
            colors: self.colors.clone(),
        }
    }
}

/// Dense depth with a validity mask. Invalid entries never enter statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricDepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub valid: Vec<bool>,
}

impl MetricDepthMap {
    /// Validity derived from the values: finite and in `(0, DEFAULT_DEPTH_MAX]`.
    pub fn from_depths(width: usize, height: usize, depth: Vec<f64>) -> Result<Self> {
        if depth.len() != width * height {
            return Err(Error::ShapeMismatch(format!("{} depths for {width}x{height} map", depth.len())));
        }
        let valid = depth.iter().map(|&d| d.is_finite() && d > 0.0 && d <= DEFAULT_DEPTH_MAX).collect();
        Ok(MetricDepthMap {
            width,
            height,
            depth,
            valid,
        })
    }

    pub fn new(width: usize, height: usize, depth: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if depth.len() != width * height || valid.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} depths / {} flags for {width}x{height} map",
                depth.len(),
                valid.len()
            )));
        }
        for (d, v) in depth.iter().zip(&valid) {
            if *v && !(d.is_finite() && *d > 0.0 && *d <= DEFAULT_DEPTH_MAX) {
                return Err(Error::InvalidArgument(format!("valid depth {d} outside (0, {DEFAULT_DEPTH_MAX}]")));
            }
        }
        Ok(MetricDepthMap {
            width,
            height,
            depth,
            valid,
        })
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        Self::from_depths(width, height, vec![depth; width * height]).expect("shape is consistent")
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.depth[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub(crate) fn check_matches(&self, frame: &CameraFrame) -> Result<()> {
        if self.width != frame.width() as usize || self.height != frame.height() as usize {
            return Err(Error::ShapeMismatch(format!(
                "depth map {}x{} vs camera {}x{}",
                self.width,
                self.height,
                frame.width(),
                frame.height()
            )));
        }
        Ok(())
    }
}

/// How depth-map values relate to camera geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthConvention {
    /// Distance along the optical axis.
    #[default]
    ZDepth,
    /// Euclidean distance from the camera center along the pixel ray.
    RayDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactor {
    pub s: f64,
    pub inlier_count: usize,
    pub inlier_ratio: f64,
    /// Number of ratios that entered the median.
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleOptions {
    pub convention: DepthConvention,
    /// Ratios within `[s / band, s * band]` count as inliers. Reporting only.
    pub inlier_band: f64,
    pub min_points: usize,
}

impl Default for ScaleOptions {
    fn default() -> Self {
        ScaleOptions {
            convention: DepthConvention::ZDepth,
            inlier_band: 1.5,
            min_points: MIN_OVERLAP_POINTS,
        }
    }
}

/// Median metric-to-reconstruction depth ratio in a single reference frame.
pub fn estimate_scale(sparse: &PointCloud, ref_frame: &CameraFrame, metric_depth: &MetricDepthMap) -> Result<ScaleFactor> {
    estimate_scale_pooled(sparse, &[(*ref_frame, metric_depth)], &ScaleOptions::default())
}

/// Pools depth ratios from several reference frames before taking the median.
pub fn estimate_scale_pooled(
    sparse: &PointCloud,
    views: &[(CameraFrame, &MetricDepthMap)],
    opts: &ScaleOptions,
) -> Result<ScaleFactor> {
    let mut usable = 0usize;
    let mut ratios = Vec::new();
    for (frame, depth) in views {
        depth.check_matches(frame)?;
        for p in &sparse.points {
            let Some(proj) = frame.project(p) else { continue };
            let Some((x, y)) = proj.pixel_index(&frame.intrinsics) else { continue };
            let Some(metric) = depth.get(x as usize, y as usize) else { continue };
            usable += 1;
            let reconstructed = match opts.convention {
                DepthConvention::ZDepth => proj.depth,
                DepthConvention::RayDistance => (p - frame.pose.center()).norm(),
            };
            let r = metric / reconstructed;
            if r.is_finite() && r > 0.0 {
                ratios.push(r);
            }
        }
    }
    if usable < opts.min_points {
        return Err(Error::InsufficientOverlap {
            found: usable,
            required: opts.min_points,
        });
    }
    if ratios.is_empty() {
        return Err(Error::DegenerateDepth);
    }
    let s = median(&mut ratios);
    let inlier_count = ratios
        .iter()
        .filter(|&&r| r >= s / opts.inlier_band && r <= s * opts.inlier_band)
        .count();
    Ok(ScaleFactor {
        s,
        inlier_count,
        inlier_ratio: inlier_count as f64 / ratios.len() as f64,
        samples: ratios.len(),
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Multiplies every translation by the scale factor.
pub fn apply_scale(trajectory: &Trajectory, s: &ScaleFactor) -> Trajectory {
    scale_translations(trajectory, s.s)
}

pub fn scale_translations(trajectory: &Trajectory, s: f64) -> Trajectory {
    trajectory.map_poses(|p| crate::camera::Pose {
        rotation: p.rotation,
        translation: p.translation * s,
    })
}

/// Lifts every valid depth pixel to a world point through its pixel center.
pub fn unproject_depth(frame: &CameraFrame, depth: &MetricDepthMap, colors: Option<&Image>) -> Result<PointCloud> {
    unproject_depth_with(frame, depth, colors, DepthConvention::ZDepth)
}

pub fn unproject_depth_with(
    frame: &CameraFrame,
    depth: &MetricDepthMap,
    colors: Option<&Image>,
    convention: DepthConvention,
) -> Result<PointCloud> {
    depth.check_matches(frame)?;
    if let Some(img) = colors {
        if img.width != depth.width || img.height != depth.height || img.channels != 3 {
            return Err(Error::ShapeMismatch(format!(
                "color image {}x{}x{} vs depth {}x{}",
                img.width, img.height, img.channels, depth.width, depth.height
            )));
        }
    }
    let mut points = Vec::new();
    let mut rgb = colors.map(|_| Vec::new());
    for y in 0..depth.height {
        for x in 0..depth.width {
            let Some(d) = depth.get(x, y) else { continue };
            points.push(unproject_pixel(frame, x, y, d, convention));
            if let (Some(out), Some(img)) = (rgb.as_mut(), colors) {
                let p = img.pixel(x, y);
                out.push([p[0], p[1], p[2]]);
            }
        }
    }
    Ok(PointCloud { points, colors: rgb })
}

#[inline]
pub(crate) fn unproject_pixel(frame: &CameraFrame, x: usize, y: usize, d: f64, convention: DepthConvention) -> Vector3<f64> {
    let local = frame.intrinsics.unproject(x as f64 + 0.5, y as f64 + 0.5);
    let local = match convention {
        DepthConvention::ZDepth => local * d,
        DepthConvention::RayDistance => local.normalize() * d,
    };
    frame.pose.transform_point(&local)
}
