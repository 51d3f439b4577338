//! Two-view epipolar geometry and attention masks.
//!
//! For a pixel `p` in frame `i`, the matching pixel in frame `k` lies on the
//! line `F_ik · p̃`. Masks keep a destination pixel when its center is within
//! `tau` pixels of that line.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::bitmask::BitMatrix;
use crate::camera::{skew, CameraFrame, Intrinsics, Pose, Trajectory};
use crate::error::{Error, Result};

/// Default mask threshold in feature-resolution pixels.
pub const DEFAULT_TAU: f64 = 2.0;

const BASELINE_EPS: f64 = 1e-12;
const DEGENERATE_F_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix(pub Matrix3<f64>);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix(pub Matrix3<f64>);

/// `a·u + b·v + c = 0` with `a² + b² = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpipolarLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl EpipolarLine {
    #[inline]
    pub fn distance(&self, u: f64, v: f64) -> f64 {
        (self.a * u + self.b * v + self.c).abs()
    }
}

/// Pose of camera `i` expressed in the camera coordinates of `k`.
pub fn relative_pose(pose_i: &Pose, pose_k: &Pose) -> Pose {
    pose_k.inverse().compose(pose_i)
}

/// `E = [t]_x R` for the relative pose mapping camera `i` into camera `k`,
/// so that `x_kᵀ E x_i = 0` for normalized coordinates.
pub fn essential_from_poses(pose_i: &Pose, pose_k: &Pose) -> Result<EssentialMatrix> {
    let rel = relative_pose(pose_i, pose_k);
    if rel.translation.norm() < BASELINE_EPS {
        return Err(Error::DegenerateBaseline);
    }
    Ok(EssentialMatrix(skew(&rel.translation) * rel.rotation))
}

/// `F = K_k⁻ᵀ E K_i⁻¹`.
pub fn fundamental_from_essential(e: &EssentialMatrix, k_i: &Intrinsics, k_k: &Intrinsics) -> FundamentalMatrix {
    fundamental_from_matrices(e, &k_i.inverse_matrix(), &k_k.inverse_matrix())
}

/// As [`fundamental_from_essential`], taking the inverse calibration matrices
/// directly.
pub fn fundamental_from_matrices(e: &EssentialMatrix, k_i_inv: &Matrix3<f64>, k_k_inv: &Matrix3<f64>) -> FundamentalMatrix {
    FundamentalMatrix(k_k_inv.transpose() * e.0 * k_i_inv)
}

/// Fundamental matrix between two frames. `Err(DegenerateBaseline)` when the
/// camera centers coincide.
pub fn fundamental_between(frame_i: &CameraFrame, frame_k: &CameraFrame) -> Result<FundamentalMatrix> {
    let e = essential_from_poses(&frame_i.pose, &frame_k.pose)?;
    Ok(fundamental_from_essential(&e, &frame_i.intrinsics, &frame_k.intrinsics))
}

impl FundamentalMatrix {
    pub fn is_degenerate(&self) -> bool {
        self.0.iter().all(|x| x.abs() < DEGENERATE_F_EPS)
    }

    /// `p̃_kᵀ F p̃_i` for continuous image coordinates.
    pub fn residual(&self, p_i: (f64, f64), p_k: (f64, f64)) -> f64 {
        let a = Vector3::new(p_i.0, p_i.1, 1.0);
        let b = Vector3::new(p_k.0, p_k.1, 1.0);
        b.dot(&(self.0 * a))
    }
}

/// Epipolar line in frame `k` of the image point `p = (u, v)` in frame `i`.
pub fn epipolar_line(f: &FundamentalMatrix, p: (f64, f64)) -> Result<EpipolarLine> {
    let l = f.0 * Vector3::new(p.0, p.1, 1.0);
    let scale = f.0.abs().max() * (1.0 + p.0.abs() + p.1.abs());
    let n = l.x.hypot(l.y);
    if n <= 1e-14 * scale {
        return Err(Error::EpipoleQuery);
    }
    Ok(EpipolarLine {
        a: l.x / n,
        b: l.y / n,
        c: l.z / n,
    })
}

/// Mask between one ordered pair of frames.
///
/// Row `p` is a source pixel (row-major index at source resolution), column
/// `q` a destination pixel. A set bit means the destination pixel center lies
/// within `tau` of the source pixel's epipolar line.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMask {
    pub src_frame: usize,
    pub dst_frame: usize,
    /// Set when the geometry gave no constraint and the mask is all-true.
    pub degenerate: bool,
    pub bits: BitMatrix,
}

impl PairMask {
    #[inline]
    pub fn allows(&self, src_pixel: usize, dst_pixel: usize) -> bool {
        self.bits.get(src_pixel, dst_pixel)
    }
}

/// `(height, width)` of a pixel grid.
pub type Resolution = (usize, usize);

/// Builds the `src x dst` mask for one fundamental matrix. Pixel centers
/// `(x + 0.5, y + 0.5)` are used at both resolutions; `f` must be expressed
/// in those pixel units. Returns the mask and whether `f` was degenerate.
pub fn build_mask(f: &FundamentalMatrix, src_res: Resolution, dst_res: Resolution, tau: f64) -> Result<(BitMatrix, bool)> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let (sh, sw) = src_res;
    let (dh, dw) = dst_res;
    if sh == 0 || sw == 0 || dh == 0 || dw == 0 {
        return Err(Error::InvalidArgument("mask resolution must be at least 1x1".into()));
    }
    let n_dst = dh * dw;
    if f.is_degenerate() {
        return Ok((BitMatrix::filled(sh * sw, n_dst), true));
    }
    let mut bits = BitMatrix::new(sh * sw, n_dst);
    bits.row_words_mut().enumerate().par_bridge().for_each(|(p, words)| {
        let (x, y) = ((p % sw) as f64 + 0.5, (p / sw) as f64 + 0.5);
        let line = match epipolar_line(f, (x, y)) {
            Ok(line) => line,
            Err(_) => {
                // epipole: the ray projects to a point, no constraint
                fill_words(words, n_dst);
                return;
            }
        };
        for q in 0..n_dst {
            let (u, v) = ((q % dw) as f64 + 0.5, (q / dw) as f64 + 0.5);
            if line.distance(u, v) <= tau {
                words[q / 64] |= 1u64 << (q % 64);
            }
        }
    });
    Ok((bits, false))
}

fn fill_words(words: &mut [u64], n: usize) {
    words.fill(u64::MAX);
    if n % 64 != 0 {
        if let Some(last) = words.last_mut() {
            *last = (1u64 << (n % 64)) - 1;
        }
    }
}

/// Masks for every ordered frame pair of a trajectory at one feature
/// resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EpipolarMaskSet {
    pub height: usize,
    pub width: usize,
    pub tau: f64,
    pub n_frames: usize,
    /// Ordered pairs `(i, k)` in row-major order over `i`, then `k`.
    pub pairs: Vec<PairMask>,
}

impl EpipolarMaskSet {
    pub fn pair(&self, src: usize, dst: usize) -> &PairMask {
        &self.pairs[src * self.n_frames + dst]
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Builds masks for all ordered pairs. Intrinsics are rescaled from each
/// frame's native resolution to `feature_res`; diagonal pairs and zero
/// baselines produce all-true masks.
pub fn mask_set_for_trajectory(trajectory: &Trajectory, feature_res: Resolution, tau: f64) -> Result<EpipolarMaskSet> {
    let n = trajectory.len();
    if n < 2 {
        return Err(Error::InvalidFrameCount(n));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let (h, w) = feature_res;
    let frames: Vec<CameraFrame> = trajectory.frames.iter().map(|f| f.rescaled(w as u32, h as u32)).collect();
    let pairs = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, k) = (idx / n, idx % n);
            if i == k {
                return Ok(PairMask {
                    src_frame: i,
                    dst_frame: k,
                    degenerate: false,
                    bits: BitMatrix::filled(h * w, h * w),
                });
            }
            let (bits, degenerate) = match fundamental_between(&frames[i], &frames[k]) {
                Ok(f) => build_mask(&f, feature_res, feature_res, tau)?,
                Err(Error::DegenerateBaseline) => (BitMatrix::filled(h * w, h * w), true),
                Err(e) => return Err(e),
            };
            Ok(PairMask {
                src_frame: i,
                dst_frame: k,
                degenerate,
                bits,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EpipolarMaskSet {
        height: h,
        width: w,
        tau,
        n_frames: n,
        pairs,
    })
}
