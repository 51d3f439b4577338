//! 3D Gaussian primitives: decoding from per-pixel feature maps, software
//! splatting with analytic gradients, the reconstruction loss and a small
//! fitting loop.

mod decode;
mod fit;
mod loss;
mod render;

pub use decode::{decode_gaussians, inverse_softplus, sigmoid, softplus, DecodeOptions, DecodeStats, GaussianFeatureMap};
pub use fit::{fit, FitConfig, FitResult, MeanParam, SupervisionView};
pub use loss::{composite_loss, composite_loss_grad, LossBreakdown, LossGrad, LossWeights, PerceptualDistance};
pub use render::{render, render_backward, GaussianGrads, ProjectedGaussian, RenderOutput, RenderStats, ALPHA_MAX};

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::camera::{pixel_ray, CameraFrame, Ray};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian3D {
    pub mean: Vector3<f64>,
    pub scales: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub opacity: f64,
    pub color: [f64; 3],
}

impl Gaussian3D {
    pub fn isotropic(mean: Vector3<f64>, scale: f64, opacity: f64, color: [f64; 3]) -> Self {
        Gaussian3D {
            mean,
            scales: Vector3::repeat(scale),
            rotation: UnitQuaternion::identity(),
            opacity,
            color,
        }
    }

    /// `R diag(s²) Rᵀ`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation.to_rotation_matrix().into_inner();
        let s2 = Matrix3::from_diagonal(&self.scales.component_mul(&self.scales));
        r * s2 * r.transpose()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.scales.iter().all(|s| *s > 0.0 && s.is_finite())
            && self.opacity > 0.0
            && self.opacity < 1.0
            && (self.rotation.norm() - 1.0).abs() < 1e-7
            && self.mean.iter().all(|m| m.is_finite())
            && self.color.iter().all(|c| (0.0..=1.0).contains(c));
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid gaussian {self:?}")))
        }
    }
}

/// Source frame and row-major pixel index of a decoded primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Provenance {
    pub frame: u32,
    pub pixel: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianCloud {
    pub gaussians: Vec<Gaussian3D>,
    pub provenance: Vec<Provenance>,
    /// Pixel ray each primitive was decoded along, when known.
    pub anchors: Option<Vec<Ray>>,
}

impl GaussianCloud {
    /// Cloud with sequential provenance `(0, i)` and no anchors.
    pub fn from_gaussians(gaussians: Vec<Gaussian3D>) -> Self {
        let provenance = (0..gaussians.len())
            .map(|i| Provenance {
                frame: 0,
                pixel: i as u32,
            })
            .collect();
        GaussianCloud {
            gaussians,
            provenance,
            anchors: None,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.provenance.len() != self.gaussians.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} provenance entries for {} gaussians",
                self.provenance.len(),
                self.gaussians.len()
            )));
        }
        if let Some(a) = &self.anchors {
            if a.len() != self.gaussians.len() {
                return Err(Error::ShapeMismatch(format!("{} anchors for {} gaussians", a.len(), self.gaussians.len())));
            }
        }
        let unique: std::collections::HashSet<_> = self.provenance.iter().collect();
        if unique.len() != self.provenance.len() {
            return Err(Error::InvalidArgument("duplicate provenance".into()));
        }
        self.gaussians.iter().try_for_each(Gaussian3D::validate)
    }

    /// Concatenates clouds, keeping provenance.
    pub fn merge(clouds: impl IntoIterator<Item = GaussianCloud>) -> GaussianCloud {
        let mut out = GaussianCloud {
            anchors: Some(Vec::new()),
            ..Default::default()
        };
        for c in clouds {
            match (&mut out.anchors, c.anchors) {
                (Some(all), Some(a)) => all.extend(a),
                (anchors, _) => *anchors = None,
            }
            out.gaussians.extend(c.gaussians);
            out.provenance.extend(c.provenance);
        }
        out
    }

    /// Subset in the given order.
    pub fn select(&self, indices: &[usize]) -> GaussianCloud {
        GaussianCloud {
            gaussians: indices.iter().map(|&i| self.gaussians[i]).collect(),
            provenance: indices.iter().map(|&i| self.provenance[i]).collect(),
            anchors: self.anchors.as_ref().map(|a| indices.iter().map(|&i| a[i]).collect()),
        }
    }
}

/// One isotropic Gaussian per `stride x stride` pixel block of `camera`,
/// placed on the ray through the block's center pixel at distance `depth`,
/// with anchors set for ray-distance fitting.
pub fn ray_grid_cloud(camera: &CameraFrame, stride: usize, depth: f64, scale: f64, opacity: f64, color: [f64; 3]) -> Result<GaussianCloud> {
    if stride == 0 || !(depth > 0.0) {
        return Err(Error::InvalidArgument(format!("stride {stride} and depth {depth} must be positive")));
    }
    let (w, h) = (camera.width() as usize, camera.height() as usize);
    let mut cloud = GaussianCloud {
        anchors: Some(Vec::new()),
        ..Default::default()
    };
    for py in (stride / 2..h).step_by(stride) {
        for px in (stride / 2..w).step_by(stride) {
            let ray = pixel_ray(camera, px as f64, py as f64)?;
            cloud.gaussians.push(Gaussian3D::isotropic(ray.at(depth), scale, opacity, color));
            cloud.provenance.push(Provenance {
                frame: camera.frame_index as u32,
                pixel: (py * w + px) as u32,
            });
            cloud.anchors.as_mut().expect("anchors set").push(ray);
        }
    }
    cloud.validate()?;
    Ok(cloud)
}
