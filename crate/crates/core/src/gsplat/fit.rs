//! Fitting Gaussian color, opacity and position to supervision views.

use log::debug;
use nalgebra::Vector3;

use super::loss::{composite_loss_grad, LossBreakdown, LossWeights, PerceptualDistance};
use super::render::{render, render_backward};
use super::{inverse_softplus, sigmoid, softplus, GaussianCloud};
use crate::camera::CameraFrame;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::optim::{Adam, AdamConfig};
use crate::scale::MetricDepthMap;

/// How primitive positions are optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanParam {
    /// Free 3D position.
    Free,
    /// Distance along the anchor ray, through a softplus. Needs anchors.
    #[default]
    AlongRay,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub iterations: usize,
    pub lr_color: f64,
    pub lr_opacity: f64,
    pub lr_mean: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Adam denominator offset. Gradients of a per-pixel mean are small, so
    /// this sets the step gain near the optimum.
    pub eps: f64,
    /// Learning rates decay exponentially to this fraction of their initial
    /// value over the run.
    pub final_lr_ratio: f64,
    pub mean_param: MeanParam,
    pub weights: LossWeights,
    pub background: [f64; 3],
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 500,
            lr_color: 0.05,
            lr_opacity: 0.05,
            lr_mean: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
            final_lr_ratio: 0.01,
            mean_param: MeanParam::AlongRay,
            weights: LossWeights::default(),
            background: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SupervisionView {
    pub camera: CameraFrame,
    pub image: Image,
    pub depth: Option<MetricDepthMap>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub cloud: GaussianCloud,
    /// Mean loss over views before each update, plus the final loss.
    pub losses: Vec<f64>,
    pub final_breakdown: LossBreakdown,
}

impl FitResult {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().unwrap()
    }
}

/// Loss is "diverged" once it exceeds this multiple of the initial loss.
const DIVERGENCE_FACTOR: f64 = 10.0;
/// Floor for the divergence reference so a perfect start can still move a
/// little.
const DIVERGENCE_FLOOR: f64 = 1e-9;
const LOGIT_CLAMP: f64 = 1e-6;

fn logit(p: f64) -> f64 {
    let p = p.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP);
    (p / (1.0 - p)).ln()
}

struct Params {
    color: Vec<f64>,
    opacity: Vec<f64>,
    mean: Vec<f64>,
}

impl Params {
    fn from_cloud(cloud: &GaussianCloud, mode: MeanParam) -> Result<Self> {
        let mean = match mode {
            MeanParam::Free => cloud.gaussians.iter().flat_map(|g| g.mean.iter().copied().collect::<Vec<_>>()).collect(),
            MeanParam::AlongRay => {
                let anchors = cloud
                    .anchors
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("ray-parameterized fit needs anchor rays".into()))?;
                cloud
                    .gaussians
                    .iter()
                    .zip(anchors)
                    .map(|(g, r)| inverse_softplus((g.mean - r.origin).dot(&r.direction).max(1e-6)))
                    .collect()
            }
        };
        Ok(Params {
            color: cloud.gaussians.iter().flat_map(|g| g.color.map(logit)).collect(),
            opacity: cloud.gaussians.iter().map(|g| logit(g.opacity)).collect(),
            mean,
        })
    }

    fn apply(&self, base: &GaussianCloud, mode: MeanParam) -> GaussianCloud {
        let mut out = base.clone();
        for (i, g) in out.gaussians.iter_mut().enumerate() {
            g.color = [0, 1, 2].map(|c| sigmoid(self.color[3 * i + c]));
            g.opacity = sigmoid(self.opacity[i]).clamp(1e-12, 1.0 - 1e-12);
            g.mean = match mode {
                MeanParam::Free => Vector3::new(self.mean[3 * i], self.mean[3 * i + 1], self.mean[3 * i + 2]),
                MeanParam::AlongRay => base.anchors.as_ref().unwrap()[i].at(softplus(self.mean[i])),
            };
        }
        out
    }
}

/// Mean loss over views and the gradient, chained back to the parameters.
fn evaluate(
    params: &Params,
    base: &GaussianCloud,
    views: &[SupervisionView],
    cfg: &FitConfig,
    perceptual: Option<&dyn PerceptualDistance>,
) -> Result<(f64, LossBreakdown, Params)> {
    let cloud = params.apply(base, cfg.mean_param);
    let n = cloud.len();
    let mut grad = Params {
        color: vec![0.0; 3 * n],
        opacity: vec![0.0; n],
        mean: vec![0.0; params.mean.len()],
    };
    let mut total = 0.0;
    let mut last = LossBreakdown::default();
    let scale = 1.0 / views.len() as f64;
    for view in views {
        let out = render(&cloud, &view.camera, cfg.background)?;
        let (b, lg) = composite_loss_grad(&out.image, &out.depth, &view.image, view.depth.as_ref(), &cfg.weights, perceptual)?;
        total += b.total * scale;
        last = b;
        let depth_grad = view.depth.as_ref().map(|_| lg.depth.as_slice());
        let g = render_backward(&cloud, &view.camera, &out, &lg.image, depth_grad)?;
        for (i, gs) in cloud.gaussians.iter().enumerate() {
            for c in 0..3 {
                let s = gs.color[c];
                grad.color[3 * i + c] += scale * g.color[i][c] * s * (1.0 - s);
            }
            grad.opacity[i] += scale * g.opacity[i] * gs.opacity * (1.0 - gs.opacity);
            match cfg.mean_param {
                MeanParam::Free => {
                    for a in 0..3 {
                        grad.mean[3 * i + a] += scale * g.mean[i][a];
                    }
                }
                MeanParam::AlongRay => {
                    let dir = base.anchors.as_ref().unwrap()[i].direction;
                    grad.mean[i] += scale * g.mean[i].dot(&dir) * sigmoid(params.mean[i]);
                }
            }
        }
    }
    Ok((total, last, grad))
}

/// Runs Adam on color, opacity and mean for `cfg.iterations` steps. Every
/// iteration uses all views. Scales and rotations are left untouched.
pub fn fit(
    cloud: &GaussianCloud,
    views: &[SupervisionView],
    cfg: &FitConfig,
    perceptual: Option<&dyn PerceptualDistance>,
) -> Result<FitResult> {
    if views.is_empty() {
        return Err(Error::InvalidArgument("fit needs at least one supervision view".into()));
    }
    cfg.weights.validate()?;
    cloud.validate()?;
    let mut params = Params::from_cloud(cloud, cfg.mean_param)?;
    let (initial, breakdown, mut grad) = evaluate(&params, cloud, views, cfg, perceptual)?;
    if cfg.iterations == 0 {
        return Ok(FitResult {
            cloud: cloud.clone(),
            losses: vec![initial],
            final_breakdown: breakdown,
        });
    }
    let adam = |lr: f64, n: usize| {
        Adam::new(
            AdamConfig {
                lr,
                beta1: cfg.beta1,
                beta2: cfg.beta2,
                eps: cfg.eps,
            },
            n,
        )
    };
    let mut opt_color = adam(cfg.lr_color, params.color.len());
    let mut opt_opacity = adam(cfg.lr_opacity, params.opacity.len());
    let mut opt_mean = adam(cfg.lr_mean, params.mean.len());
    let limit = DIVERGENCE_FACTOR * initial.max(DIVERGENCE_FLOOR);
    let mut losses = vec![initial];
    let mut last_breakdown = breakdown;
    for iteration in 1..=cfg.iterations {
        let decay = cfg.final_lr_ratio.powf((iteration - 1) as f64 / cfg.iterations as f64);
        opt_color.config.lr = cfg.lr_color * decay;
        opt_opacity.config.lr = cfg.lr_opacity * decay;
        opt_mean.config.lr = cfg.lr_mean * decay;
        opt_color.step(&mut params.color, &grad.color);
        opt_opacity.step(&mut params.opacity, &grad.opacity);
        opt_mean.step(&mut params.mean, &grad.mean);
        let (loss, b, g) = evaluate(&params, cloud, views, cfg, perceptual)?;
        if !loss.is_finite() || loss > limit {
            return Err(Error::Divergence {
                iteration,
                loss,
                initial,
            });
        }
        if iteration % 100 == 0 {
            debug!("fit iteration {iteration}: loss {loss:.6e}");
        }
        losses.push(loss);
        last_breakdown = b;
        grad = g;
    }
    Ok(FitResult {
        cloud: params.apply(cloud, cfg.mean_param),
        losses,
        final_breakdown: last_breakdown,
    })
}
