use ndarray::{concatenate, Array2, Array4, Axis};

use super::{Linear, TokenLayout, TokenSequence};
use crate::camera::RayEmbeddingMap;
use crate::error::{Error, Result};
use crate::scale::MetricDepthMap;

/// `T x H x W x C` feature volume.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVolume {
    pub data: Array4<f64>,
}

impl LatentVolume {
    pub fn new(data: Array4<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("latent volume has non-finite entries".into()));
        }
        Ok(LatentVolume { data })
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }
}

/// Stacks depth maps into a one-channel volume; invalid pixels become 0.
pub fn depth_volume(depths: &[MetricDepthMap]) -> Result<LatentVolume> {
    let first = depths.first().ok_or(Error::EmptyTrajectory)?;
    let (h, w) = (first.height, first.width);
    if depths.iter().any(|d| d.height != h || d.width != w) {
        return Err(Error::ShapeMismatch("depth maps differ in size".into()));
    }
    let data = Array4::from_shape_fn((depths.len(), h, w, 1), |(t, y, x, _)| {
        let d = &depths[t];
        if d.valid[y * w + x] {
            d.depth[y * w + x]
        } else {
            0.0
        }
    });
    Ok(LatentVolume { data })
}

/// Spatial patches flattened as `(dy, dx, c)`; width `patch² · C`.
pub fn patchify_latent(z: &LatentVolume, patch: usize) -> Result<TokenSequence> {
    let (t, h, w, c) = z.dims();
    let layout = TokenLayout::new(t, h, w, patch, 1)?;
    let (_, hp, wp) = layout.grid();
    let d = patch * patch * c;
    let mut tokens = Array2::zeros((layout.len(), d));
    for f in 0..t {
        for r in 0..hp {
            for col in 0..wp {
                let mut row = tokens.row_mut(layout.index(f, r, col));
                let mut k = 0;
                for dy in 0..patch {
                    for dx in 0..patch {
                        for ch in 0..c {
                            row[k] = z.data[[f, r * patch + dy, col * patch + dx, ch]];
                            k += 1;
                        }
                    }
                }
            }
        }
    }
    TokenSequence::new(tokens, layout)
}

pub fn unpatchify_latent(seq: &TokenSequence) -> Result<LatentVolume> {
    let l = seq.layout;
    let p2 = l.patch * l.patch * l.temporal_patch;
    if l.temporal_patch != 1 || seq.width() % p2 != 0 {
        return Err(Error::LayoutMismatch(format!("token width {} is not patch²·C", seq.width())));
    }
    let c = seq.width() / p2;
    let mut data = Array4::zeros((l.frames, l.height, l.width, c));
    for (i, row) in seq.tokens.axis_iter(Axis(0)).enumerate() {
        let (f, r, col) = l.position(i);
        let mut k = 0;
        for dy in 0..l.patch {
            for dx in 0..l.patch {
                for ch in 0..c {
                    data[[f, r * l.patch + dy, col * l.patch + dx, ch]] = row[k];
                    k += 1;
                }
            }
        }
    }
    Ok(LatentVolume { data })
}

/// Spatio-temporal patches of Plücker maps flattened as `(dt, dy, dx, ch)`;
/// width `temporal_patch · patch² · 6`.
pub fn patchify_rays(rays: &[RayEmbeddingMap], patch: usize, temporal_patch: usize) -> Result<TokenSequence> {
    let first = rays.first().ok_or(Error::EmptyTrajectory)?;
    let (h, w) = (first.height, first.width);
    if rays.iter().any(|r| r.height != h || r.width != w || r.data.len() != h * w * 6) {
        return Err(Error::ShapeMismatch("ray maps differ in size".into()));
    }
    let layout = TokenLayout::new(rays.len(), h, w, patch, temporal_patch)?;
    let d = temporal_patch * patch * patch * 6;
    let mut tokens = Array2::zeros((layout.len(), d));
    for i in 0..layout.len() {
        let (g, r, col) = layout.position(i);
        let mut k = 0;
        for dt in 0..temporal_patch {
            let map = &rays[g * temporal_patch + dt];
            for dy in 0..patch {
                for dx in 0..patch {
                    for v in map.pixel(col * patch + dx, r * patch + dy) {
                        tokens[[i, k]] = *v;
                        k += 1;
                    }
                }
            }
        }
    }
    TokenSequence::new(tokens, layout)
}

pub fn unpatchify_rays(seq: &TokenSequence) -> Result<Vec<RayEmbeddingMap>> {
    let l = seq.layout;
    if seq.width() != l.temporal_patch * l.patch * l.patch * 6 {
        return Err(Error::LayoutMismatch(format!("token width {} is not a ray patch", seq.width())));
    }
    let mut maps = vec![
        RayEmbeddingMap {
            width: l.width,
            height: l.height,
            data: vec![0.0; l.width * l.height * 6],
        };
        l.frames
    ];
    for (i, row) in seq.tokens.axis_iter(Axis(0)).enumerate() {
        let (g, r, col) = l.position(i);
        let mut k = 0;
        for dt in 0..l.temporal_patch {
            let map = &mut maps[g * l.temporal_patch + dt];
            for dy in 0..l.patch {
                for dx in 0..l.patch {
                    let base = ((r * l.patch + dy) * l.width + col * l.patch + dx) * 6;
                    for ch in 0..6 {
                        map.data[base + ch] = row[k];
                        k += 1;
                    }
                }
            }
        }
    }
    Ok(maps)
}

/// Concatenates latent, pose and depth tokens channel-wise and projects to
/// the model width.
pub fn fuse_tokens(z: &TokenSequence, p: &TokenSequence, d: &TokenSequence, proj: &Linear) -> Result<TokenSequence> {
    for (name, other) in [("pose", p), ("depth", d)] {
        if other.layout.grid() != z.layout.grid() || other.len() != z.len() {
            return Err(Error::LayoutMismatch(format!(
                "{name} token grid {:?} vs latent grid {:?}",
                other.layout.grid(),
                z.layout.grid()
            )));
        }
    }
    let width = z.width() + p.width() + d.width();
    if proj.inputs() != width {
        return Err(Error::ShapeMismatch(format!("projection takes {} inputs, tokens have {width}", proj.inputs())));
    }
    let x = concatenate(Axis(1), &[z.tokens.view(), p.tokens.view(), d.tokens.view()]).expect("equal row counts");
    Ok(z.with_tokens(proj.forward(&x)))
}
