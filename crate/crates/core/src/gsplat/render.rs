//! Software rasterizer for 3D Gaussians and its analytic backward pass.
//!
//! Forward: every primitive is projected with the first-order (Jacobian)
//! approximation `Σ' = J W Σ Wᵀ Jᵀ`, primitives are sorted by camera depth
//! (ties broken by provenance) and each pixel composites front to back:
//!
//! ```text
//! C = Σ cᵢ αᵢ Tᵢ + bg · T_N,   Tᵢ = Π_{j<i} (1 - αⱼ),   αᵢ = min(oᵢ exp(-½ δᵀ Σ'⁻¹ δ), 0.999)
//! ```
//!
//! Depth uses the same weights without a background term.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use super::GaussianCloud;
use crate::camera::CameraFrame;
use crate::error::{Error, Result};
use crate::image::Image;

pub const ALPHA_MAX: f64 = 0.999;
/// Primitives whose opacity is below this can never reach `1/255` anywhere.
const ALPHA_VISIBLE: f64 = 1.0 / 255.0;
/// Footprints are cut where the unclamped alpha drops below this value. The
/// resulting step is far below finite-difference resolution.
const ALPHA_FOOTPRINT: f64 = 1e-12;
const NEAR_PLANE: f64 = 1e-2;
const MAX_CONDITION: f64 = 1e12;
/// Rows per accumulation chunk in the backward pass. Fixed so the reduction
/// order does not depend on the thread count.
const BACKWARD_ROWS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    /// Index into the cloud.
    pub index: usize,
    pub camera_mean: Vector3<f64>,
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub conic: Matrix2<f64>,
    pub jacobian: Matrix2x3<f64>,
    pub camera_cov: Matrix3<f64>,
    /// Inclusive pixel bounds `(x0, y0, x1, y1)`.
    pub bbox: (usize, usize, usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RenderStats {
    pub culled_behind: usize,
    pub culled_faint: usize,
    pub culled_offscreen: usize,
    pub skipped_ill_conditioned: usize,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: Image,
    /// Composited depth per pixel.
    pub depth: Vec<f64>,
    /// Accumulated opacity `1 - T_N` per pixel.
    pub alpha: Vec<f64>,
    /// Visible primitives, front to back.
    pub sorted: Vec<ProjectedGaussian>,
    pub stats: RenderStats,
    pub background: [f64; 3],
}

/// Per-primitive gradients of a scalar loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGrads {
    pub color: Vec<[f64; 3]>,
    pub opacity: Vec<f64>,
    pub mean: Vec<Vector3<f64>>,
}

impl GaussianGrads {
    pub fn zeros(n: usize) -> Self {
        GaussianGrads {
            color: vec![[0.0; 3]; n],
            opacity: vec![0.0; n],
            mean: vec![Vector3::zeros(); n],
        }
    }

    pub fn max_abs(&self) -> f64 {
        let c = self.color.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let o = self.opacity.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let p = self.mean.iter().fold(0.0f64, |m, v| m.max(v.abs().max()));
        c.max(o).max(p)
    }
}

fn project(cloud: &GaussianCloud, camera: &CameraFrame, stats: &mut RenderStats) -> Vec<ProjectedGaussian> {
    let k = &camera.intrinsics;
    let (w, h) = (k.width as f64, k.height as f64);
    let world_to_cam = camera.pose.rotation.transpose();
    let mut out = Vec::with_capacity(cloud.len());
    for (index, g) in cloud.gaussians.iter().enumerate() {
        let pc = camera.pose.world_to_camera(&g.mean);
        if pc.z <= NEAR_PLANE {
            stats.culled_behind += 1;
            continue;
        }
        if g.opacity < ALPHA_VISIBLE {
            stats.culled_faint += 1;
            continue;
        }
        let (x, y, z) = (pc.x, pc.y, pc.z);
        let jacobian = Matrix2x3::new(
            k.fx / z, 0.0, -k.fx * x / (z * z), //
            0.0, k.fy / z, -k.fy * y / (z * z),
        );
        let camera_cov = world_to_cam * g.covariance() * world_to_cam.transpose();
        let cov2d = jacobian * camera_cov * jacobian.transpose();
        let det = cov2d.determinant();
        let tr = cov2d.trace();
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        let (l_max, l_min) = (tr / 2.0 + disc, tr / 2.0 - disc);
        if !(det > 0.0 && l_min > 0.0 && l_max / l_min <= MAX_CONDITION) {
            stats.skipped_ill_conditioned += 1;
            continue;
        }
        let conic = Matrix2::new(cov2d[(1, 1)], -cov2d[(0, 1)], -cov2d[(1, 0)], cov2d[(0, 0)]) / det;
        let mean2d = Vector2::new(k.fx * x / z + k.cx, k.fy * y / z + k.cy);
        // Mahalanobis radius where o·exp(-m²/2) reaches the footprint cutoff
        let m = (2.0 * (g.opacity / ALPHA_FOOTPRINT).ln()).max(0.0).sqrt();
        let (rx, ry) = (m * cov2d[(0, 0)].sqrt(), m * cov2d[(1, 1)].sqrt());
        // pixel i has its center at i + 0.5
        let x0 = (mean2d.x - rx - 0.5).ceil().max(0.0);
        let x1 = (mean2d.x + rx - 0.5).floor().min(w - 1.0);
        let y0 = (mean2d.y - ry - 0.5).ceil().max(0.0);
        let y1 = (mean2d.y + ry - 0.5).floor().min(h - 1.0);
        if !(x0 <= x1 && y0 <= y1) {
            stats.culled_offscreen += 1;
            continue;
        }
        out.push(ProjectedGaussian {
            index,
            camera_mean: pc,
            mean2d,
            cov2d,
            conic,
            jacobian,
            camera_cov,
            bbox: (x0 as usize, y0 as usize, x1 as usize, y1 as usize),
        });
    }
    out.sort_by(|a, b| {
        a.camera_mean
            .z
            .total_cmp(&b.camera_mean.z)
            .then_with(|| cloud.provenance[a.index].cmp(&cloud.provenance[b.index]))
    });
    out
}

/// One primitive's contribution at one pixel.
#[derive(Clone, Copy)]
struct Hit {
    slot: usize,
    raw_alpha: f64,
    alpha: f64,
    gauss: f64,
    delta: Vector2<f64>,
}

#[inline]
fn hit(p: &ProjectedGaussian, slot: usize, opacity: f64, px: f64, py: f64) -> Hit {
    let delta = Vector2::new(px - p.mean2d.x, py - p.mean2d.y);
    let q = delta.dot(&(p.conic * delta));
    let gauss = (-0.5 * q).exp();
    let raw_alpha = opacity * gauss;
    Hit {
        slot,
        raw_alpha,
        alpha: raw_alpha.min(ALPHA_MAX),
        gauss,
        delta,
    }
}

fn row_candidates(sorted: &[ProjectedGaussian], y: usize) -> Vec<usize> {
    sorted
        .iter()
        .enumerate()
        .filter(|(_, p)| p.bbox.1 <= y && y <= p.bbox.3)
        .map(|(i, _)| i)
        .collect()
}

/// Renders the cloud into `camera`. Output does not depend on the order of
/// primitives in the cloud.
pub fn render(cloud: &GaussianCloud, camera: &CameraFrame, background: [f64; 3]) -> Result<RenderOutput> {
    if cloud.provenance.len() != cloud.len() {
        return Err(Error::ShapeMismatch("provenance length".into()));
    }
    let mut stats = RenderStats::default();
    let sorted = project(cloud, camera, &mut stats);
    let (w, h) = (camera.width() as usize, camera.height() as usize);
    let mut image = Image::new(w, h, 3, 0.0);
    let mut depth = vec![0.0; w * h];
    let mut alpha = vec![0.0; w * h];

    image
        .data
        .par_chunks_mut(w * 3)
        .zip(depth.par_chunks_mut(w))
        .zip(alpha.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, ((img_row, depth_row), alpha_row))| {
            let cands = row_candidates(&sorted, y);
            let py = y as f64 + 0.5;
            for x in 0..w {
                let px = x as f64 + 0.5;
                let mut t = 1.0;
                let mut c = [0.0; 3];
                let mut d = 0.0;
                for &slot in &cands {
                    let p = &sorted[slot];
                    if x < p.bbox.0 || x > p.bbox.2 {
                        continue;
                    }
                    let g = &cloud.gaussians[p.index];
                    let hh = hit(p, slot, g.opacity, px, py);
                    let wgt = hh.alpha * t;
                    for ch in 0..3 {
                        c[ch] += g.color[ch] * wgt;
                    }
                    d += p.camera_mean.z * wgt;
                    t *= 1.0 - hh.alpha;
                }
                for ch in 0..3 {
                    img_row[x * 3 + ch] = c[ch] + background[ch] * t;
                }
                depth_row[x] = d;
                alpha_row[x] = 1.0 - t;
            }
        });

    Ok(RenderOutput {
        image,
        depth,
        alpha,
        sorted,
        stats,
        background,
    })
}

#[derive(Clone, Copy, Default)]
struct Accum {
    color: [f64; 3],
    opacity: f64,
    mean2d: Vector2<f64>,
    conic: Matrix2<f64>,
    depth: f64,
}

/// Gradients of a loss with respect to primitive color, opacity and mean,
/// given `dL/dimage` and optionally `dL/ddepth` for a previous [`render`]
/// of the same cloud and camera. Culled primitives get zero gradient.
pub fn render_backward(
    cloud: &GaussianCloud,
    camera: &CameraFrame,
    forward: &RenderOutput,
    grad_image: &Image,
    grad_depth: Option<&[f64]>,
) -> Result<GaussianGrads> {
    let (w, h) = (camera.width() as usize, camera.height() as usize);
    if grad_image.width != w || grad_image.height != h || grad_image.channels != 3 {
        return Err(Error::ShapeMismatch("upstream image gradient".into()));
    }
    if let Some(gd) = grad_depth {
        if gd.len() != w * h {
            return Err(Error::ShapeMismatch("upstream depth gradient".into()));
        }
    }
    let sorted = &forward.sorted;
    let bg = forward.background;
    let n_slots = sorted.len();

    let chunks: Vec<Vec<Accum>> = (0..h.div_ceil(BACKWARD_ROWS))
        .into_par_iter()
        .map(|chunk| {
            let mut acc = vec![Accum::default(); n_slots];
            let mut hits: Vec<Hit> = Vec::new();
            let mut trans: Vec<f64> = Vec::new();
            for y in chunk * BACKWARD_ROWS..((chunk + 1) * BACKWARD_ROWS).min(h) {
                let cands = row_candidates(sorted, y);
                let py = y as f64 + 0.5;
                for x in 0..w {
                    let gc = grad_image.pixel(x, y);
                    let gd = grad_depth.map_or(0.0, |g| g[y * w + x]);
                    if gc.iter().all(|v| *v == 0.0) && gd == 0.0 {
                        continue;
                    }
                    let px = x as f64 + 0.5;
                    hits.clear();
                    trans.clear();
                    let mut t = 1.0;
                    for &slot in &cands {
                        let p = &sorted[slot];
                        if x < p.bbox.0 || x > p.bbox.2 {
                            continue;
                        }
                        let hh = hit(p, slot, cloud.gaussians[p.index].opacity, px, py);
                        trans.push(t);
                        t *= 1.0 - hh.alpha;
                        hits.push(hh);
                    }
                    // contributions of everything behind the current primitive
                    let mut after_c = [bg[0] * t, bg[1] * t, bg[2] * t];
                    let mut after_d = 0.0;
                    for (hh, &ti) in hits.iter().zip(&trans).rev() {
                        let p = &sorted[hh.slot];
                        let g = &cloud.gaussians[p.index];
                        let z = p.camera_mean.z;
                        let wgt = hh.alpha * ti;
                        let a = &mut acc[hh.slot];
                        let inv = 1.0 / (1.0 - hh.alpha);
                        let mut d_alpha = gd * (z * ti - after_d * inv);
                        for ch in 0..3 {
                            a.color[ch] += gc[ch] * wgt;
                            d_alpha += gc[ch] * (g.color[ch] * ti - after_c[ch] * inv);
                            after_c[ch] += g.color[ch] * wgt;
                        }
                        after_d += z * wgt;
                        a.depth += gd * wgt;
                        if hh.raw_alpha >= ALPHA_MAX {
                            continue;
                        }
                        a.opacity += d_alpha * hh.gauss;
                        // alpha = o·exp(-q/2), q = δᵀ A δ, δ = p - m
                        let d_q = -0.5 * hh.raw_alpha * d_alpha;
                        a.mean2d -= p.conic * hh.delta * (2.0 * d_q);
                        a.conic += hh.delta * hh.delta.transpose() * d_q;
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = vec![Accum::default(); n_slots];
    for chunk in &chunks {
        for (t, a) in total.iter_mut().zip(chunk) {
            for ch in 0..3 {
                t.color[ch] += a.color[ch];
            }
            t.opacity += a.opacity;
            t.mean2d += a.mean2d;
            t.conic += a.conic;
            t.depth += a.depth;
        }
    }

    let k = &camera.intrinsics;
    let mut grads = GaussianGrads::zeros(cloud.len());
    for (p, a) in sorted.iter().zip(&total) {
        let (x, y, z) = (p.camera_mean.x, p.camera_mean.y, p.camera_mean.z);
        // A = Σ'⁻¹  =>  dΣ' = -A dA A
        let d_cov2d = -(p.conic.transpose() * a.conic * p.conic.transpose());
        let d_jac = (d_cov2d + d_cov2d.transpose()) * p.jacobian * p.camera_cov;
        let mut d_cam = p.jacobian.transpose() * a.mean2d;
        d_cam.z += a.depth;
        let (z2, z3) = (z * z, z * z * z);
        d_cam.x += d_jac[(0, 2)] * (-k.fx / z2);
        d_cam.y += d_jac[(1, 2)] * (-k.fy / z2);
        d_cam.z += d_jac[(0, 0)] * (-k.fx / z2)
            + d_jac[(0, 2)] * (2.0 * k.fx * x / z3)
            + d_jac[(1, 1)] * (-k.fy / z2)
            + d_jac[(1, 2)] * (2.0 * k.fy * y / z3);
        grads.color[p.index] = a.color;
        grads.opacity[p.index] = a.opacity;
        grads.mean[p.index] = camera.pose.rotation * d_cam;
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Intrinsics, Pose};
    use crate::gsplat::Gaussian3D;
    use nalgebra::UnitQuaternion;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const BG: [f64; 3] = [0.1, 0.2, 0.3];

    fn camera(n: u32) -> CameraFrame {
        CameraFrame::new(Intrinsics::centered(n as f64, n, n).unwrap(), Pose::identity(), 0)
    }

    fn random_scene(rng: &mut impl Rng, n: usize) -> GaussianCloud {
        let gs = (0..n)
            .map(|_| Gaussian3D {
                mean: Vector3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(1.5..3.0)),
                scales: Vector3::new(rng.random_range(0.05..0.2), rng.random_range(0.05..0.2), rng.random_range(0.05..0.2)),
                rotation: UnitQuaternion::from_euler_angles(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                opacity: rng.random_range(0.2..0.9),
                color: [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
            })
            .collect();
        GaussianCloud::from_gaussians(gs)
    }

    #[test]
    fn empty_cloud_is_background() {
        let out = render(&GaussianCloud::default(), &camera(8), BG).unwrap();
        for px in out.image.data.chunks(3) {
            assert_eq!(px, &BG);
        }
        assert!(out.depth.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn centered_gaussian_peaks_at_principal_pixel() {
        // principal point (4.5, 4.5) is the center of pixel (4, 4)
        let cam = CameraFrame::new(Intrinsics::new(9.0, 9.0, 4.5, 4.5, 9, 9).unwrap(), Pose::identity(), 0);
        let cloud = GaussianCloud::from_gaussians(vec![Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 2.0), 0.2, 0.99, [1.0; 3])]);
        let out = render(&cloud, &cam, [0.0; 3]).unwrap();
        let lum: Vec<f64> = out.image.data.chunks(3).map(|p| p.iter().sum()).collect();
        let argmax = (0..lum.len()).max_by(|&a, &b| lum[a].total_cmp(&lum[b])).unwrap();
        assert_eq!(argmax, 4 * 9 + 4);
    }

    #[test]
    fn front_gaussian_wins() {
        let front = Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 1.0), 0.5, 0.9999, [1.0, 0.0, 0.0]);
        let back = Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 2.0), 1.0, 0.9999, [0.0, 0.0, 1.0]);
        let cloud = GaussianCloud::from_gaussians(vec![back, front]);
        let cam = CameraFrame::new(Intrinsics::new(9.0, 9.0, 4.5, 4.5, 9, 9).unwrap(), Pose::identity(), 0);
        let out = render(&cloud, &cam, [0.0; 3]).unwrap();
        let center = out.image.pixel(4, 4);
        // front alpha is clamped to 0.999: rear weight <= 0.001
        assert!(center[0] > 0.99 && center[2] <= 0.001 + 1e-12, "{center:?}");
    }

    #[test]
    fn weights_with_background_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = random_scene(&mut rng, 10);
        let cam = camera(16);
        let white = render(&GaussianCloud::from_gaussians(cloud.gaussians.iter().map(|g| Gaussian3D { color: [1.0; 3], ..*g }).collect()), &cam, [1.0; 3]).unwrap();
        for v in &white.image.data {
            assert!((v - 1.0).abs() < 1e-6);
        }
        let out = render(&cloud, &cam, BG).unwrap();
        assert!(out.alpha.iter().all(|a| *a >= 0.0 && *a <= 1.0));
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cloud = random_scene(&mut rng, 12);
        let cam = camera(16);
        let base = render(&cloud, &cam, BG).unwrap();
        for _ in 0..2 {
            let mut idx: Vec<usize> = (0..cloud.len()).collect();
            idx.shuffle(&mut rng);
            let out = render(&cloud.select(&idx), &cam, BG).unwrap();
            assert_eq!(out.image, base.image);
            assert_eq!(out.depth, base.depth);
        }
    }

    #[test]
    fn behind_camera_culled() {
        let cloud = GaussianCloud::from_gaussians(vec![Gaussian3D::isotropic(Vector3::new(0.0, 0.0, -1.0), 0.5, 0.9, [1.0; 3])]);
        let out = render(&cloud, &camera(8), BG).unwrap();
        assert_eq!(out.stats.culled_behind, 1);
        assert!(out.sorted.is_empty());
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud = random_scene(&mut rng, 5);
        let cam = camera(16);
        let out = render(&cloud, &cam, BG).unwrap();
        let g = render_backward(&cloud, &cam, &out, &Image::new(16, 16, 3, 0.0), None).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    fn loss(cloud: &GaussianCloud, cam: &CameraFrame, w: &Image, wd: &[f64]) -> f64 {
        let out = render(cloud, cam, BG).unwrap();
        let a: f64 = out.image.data.iter().zip(&w.data).map(|(x, y)| x * y).sum();
        let b: f64 = out.depth.iter().zip(wd).map(|(x, y)| x * y).sum();
        a + b
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cam = CameraFrame::new(
            Intrinsics::centered(16.0, 16, 16).unwrap(),
            Pose::new(nalgebra::Rotation3::from_euler_angles(0.05, -0.03, 0.02).into_inner(), Vector3::new(0.02, -0.01, 0.0)).unwrap(),
            0,
        );
        let cloud = random_scene(&mut rng, 6);
        let wi = Image::from_fn(16, 16, 3, |_, _, _| rng.random_range(-1.0..1.0));
        let wd: Vec<f64> = (0..256).map(|_| rng.random_range(-0.2..0.2)).collect();
        let out = render(&cloud, &cam, BG).unwrap();
        let g = render_backward(&cloud, &cam, &out, &wi, Some(&wd)).unwrap();
        let h = 1e-5;
        for i in 0..cloud.len() {
            for axis in 0..3 {
                let mut plus = cloud.clone();
                plus.gaussians[i].mean[axis] += h;
                let mut minus = cloud.clone();
                minus.gaussians[i].mean[axis] -= h;
                let fd = (loss(&plus, &cam, &wi, &wd) - loss(&minus, &cam, &wi, &wd)) / (2.0 * h);
                let an = g.mean[i][axis];
                assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-3), "mean {i} {axis}: {fd} vs {an}");
            }
            let mut plus = cloud.clone();
            plus.gaussians[i].opacity += h;
            let mut minus = cloud.clone();
            minus.gaussians[i].opacity -= h;
            let fd = (loss(&plus, &cam, &wi, &wd) - loss(&minus, &cam, &wi, &wd)) / (2.0 * h);
            assert!((fd - g.opacity[i]).abs() <= 1e-4 * fd.abs().max(1e-3), "opacity {i}: {fd} vs {}", g.opacity[i]);
            for ch in 0..3 {
                let mut plus = cloud.clone();
                plus.gaussians[i].color[ch] += h;
                let mut minus = cloud.clone();
                minus.gaussians[i].color[ch] -= h;
                let fd = (loss(&plus, &cam, &wi, &wd) - loss(&minus, &cam, &wi, &wd)) / (2.0 * h);
                assert!((fd - g.color[i][ch]).abs() <= 1e-4 * fd.abs().max(1e-3), "color {i}: {fd} vs {}", g.color[i][ch]);
            }
        }
    }
}
