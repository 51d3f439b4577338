//! Reconstruction loss for rendered views.
//!
//! `L = λ₁·MSE(image) + λ₂·perceptual + λ₃·mean|depth - target_depth|`, with the
//! depth term averaged over pixels where the target depth is valid.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scale::MetricDepthMap;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 0.0,
            lambda3: 0.1,
        }
    }
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let w = LossWeights { lambda1, lambda2, lambda3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.lambda3];
        if all.iter().any(|l| !(*l >= 0.0 && l.is_finite())) || all.iter().all(|l| *l == 0.0) {
            return Err(Error::InvalidArgument(format!("loss weights must be non-negative with one positive, got {all:?}")));
        }
        Ok(())
    }
}

/// Pluggable image distance, e.g. a learned perceptual metric.
pub trait PerceptualDistance: Sync {
    fn distance(&self, rendered: &Image, target: &Image) -> f64;

    /// `d distance / d rendered`. Without it the term contributes to the
    /// reported loss but not to gradients.
    fn gradient(&self, _rendered: &Image, _target: &Image) -> Option<Image> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub perceptual: f64,
    pub depth: f64,
    /// Depth was requested (`λ₃ > 0`) but no target pixel was valid.
    pub depth_missing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub image: Image,
    pub depth: Vec<f64>,
}

fn check(rendered: &Image, rendered_depth: &[f64], target: &Image, target_depth: Option<&MetricDepthMap>) -> Result<()> {
    rendered.check_same_shape(target)?;
    if rendered_depth.len() != rendered.width * rendered.height {
        return Err(Error::ShapeMismatch(format!(
            "{} depth values for a {}x{} render",
            rendered_depth.len(),
            rendered.width,
            rendered.height
        )));
    }
    if let Some(td) = target_depth {
        if td.width != rendered.width || td.height != rendered.height {
            return Err(Error::ShapeMismatch(format!(
                "target depth {}x{} vs render {}x{}",
                td.width, td.height, rendered.width, rendered.height
            )));
        }
    }
    Ok(())
}

fn depth_term(rendered_depth: &[f64], target_depth: Option<&MetricDepthMap>) -> Option<(f64, usize)> {
    let td = target_depth?;
    let mut sum = 0.0;
    let mut n = 0;
    for (i, d) in rendered_depth.iter().enumerate() {
        if td.valid[i] {
            sum += (d - td.depth[i]).abs();
            n += 1;
        }
    }
    (n > 0).then(|| (sum / n as f64, n))
}

pub fn composite_loss(
    rendered: &Image,
    rendered_depth: &[f64],
    target: &Image,
    target_depth: Option<&MetricDepthMap>,
    weights: &LossWeights,
    perceptual: Option<&dyn PerceptualDistance>,
) -> Result<LossBreakdown> {
    check(rendered, rendered_depth, target, target_depth)?;
    let mse = rendered.mse(target)?;
    let perceptual = perceptual.map_or(0.0, |p| p.distance(rendered, target));
    let depth = depth_term(rendered_depth, target_depth);
    let depth_missing = weights.lambda3 > 0.0 && depth.is_none();
    let depth = depth.map_or(0.0, |d| d.0);
    Ok(LossBreakdown {
        total: weights.lambda1 * mse + weights.lambda2 * perceptual + weights.lambda3 * depth,
        mse,
        perceptual,
        depth,
        depth_missing,
    })
}

/// [`composite_loss`] together with its gradient with respect to the rendered
/// image and depth. The L1 subgradient at zero residual is taken as 0.
pub fn composite_loss_grad(
    rendered: &Image,
    rendered_depth: &[f64],
    target: &Image,
    target_depth: Option<&MetricDepthMap>,
    weights: &LossWeights,
    perceptual: Option<&dyn PerceptualDistance>,
) -> Result<(LossBreakdown, LossGrad)> {
    let breakdown = composite_loss(rendered, rendered_depth, target, target_depth, weights, perceptual)?;
    let n = rendered.data.len() as f64;
    let mut image = Image::new(rendered.width, rendered.height, rendered.channels, 0.0);
    for ((g, r), t) in image.data.iter_mut().zip(&rendered.data).zip(&target.data) {
        *g = weights.lambda1 * 2.0 * (r - t) / n;
    }
    if let (Some(p), true) = (perceptual, weights.lambda2 > 0.0) {
        if let Some(pg) = p.gradient(rendered, target) {
            pg.check_same_shape(rendered)?;
            for (g, v) in image.data.iter_mut().zip(&pg.data) {
                *g += weights.lambda2 * v;
            }
        }
    }
    let mut depth = vec![0.0; rendered_depth.len()];
    if let (Some(td), Some((_, count))) = (target_depth, depth_term(rendered_depth, target_depth)) {
        for (i, g) in depth.iter_mut().enumerate() {
            if td.valid[i] {
                let r = rendered_depth[i] - td.depth[i];
                let sign = if r > 0.0 { 1.0 } else if r < 0.0 { -1.0 } else { 0.0 };
                *g = weights.lambda3 * sign / count as f64;
            }
        }
    }
    Ok((breakdown, LossGrad { image, depth }))
}
