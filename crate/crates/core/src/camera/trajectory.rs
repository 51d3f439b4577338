use nalgebra::{Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{CameraFrame, Intrinsics, Pose};
use crate::error::{Error, Result};

/// Total orbit sweep in radians for [`TrajectoryKind::Orbit`].
pub const ORBIT_SWEEP: f64 = std::f64::consts::FRAC_PI_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    FirstFrameRelative,
    World,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<CameraFrame>,
    pub convention: Convention,
}

impl Trajectory {
    pub fn new(frames: Vec<CameraFrame>, convention: Convention) -> Self {
        Trajectory { frames, convention }
    }

    /// World-convention trajectory sharing one set of intrinsics.
    pub fn from_poses(poses: &[Pose], intrinsics: Intrinsics) -> Self {
        let frames = poses
            .iter()
            .enumerate()
            .map(|(i, p)| CameraFrame::new(intrinsics, *p, i))
            .collect();
        Trajectory::new(frames, Convention::World)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> {
        self.frames.iter().map(|f| &f.pose)
    }

    pub fn translations(&self) -> Vec<Vector3<f64>> {
        self.poses().map(|p| p.translation).collect()
    }

    /// Applies `f` to every pose, keeping intrinsics, indices and convention.
    pub fn map_poses(&self, mut f: impl FnMut(&Pose) -> Pose) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|fr| CameraFrame {
                pose: f(&fr.pose),
                ..*fr
            })
            .collect();
        Trajectory::new(frames, self.convention)
    }

    /// Checks pose validity and frame-index uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for f in &self.frames {
            f.pose.validate()?;
            f.intrinsics.validate()?;
            if !seen.insert(f.frame_index) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate frame index {}",
                    f.frame_index
                )));
            }
        }
        Ok(())
    }

    pub fn max_pose_diff(&self, other: &Trajectory) -> f64 {
        self.poses()
            .zip(other.poses())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// Re-expresses every pose in the coordinate frame of the first camera.
pub fn make_relative(trajectory: &Trajectory) -> Result<Trajectory> {
    let first = trajectory.frames.first().ok_or(Error::EmptyTrajectory)?;
    let to_first = first.pose.inverse();
    let mut out = trajectory.map_poses(|p| to_first.compose(p));
    out.frames[0].pose = Pose::identity();
    out.convention = Convention::FirstFrameRelative;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    ZoomIn,
    ZoomOut,
    PanLeft,
    PanRight,
    Orbit,
}

impl std::str::FromStr for TrajectoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zoom_in" => Ok(Self::ZoomIn),
            "zoom_out" => Ok(Self::ZoomOut),
            "pan_left" => Ok(Self::PanLeft),
            "pan_right" => Ok(Self::PanRight),
            "orbit" => Ok(Self::Orbit),
            other => Err(Error::InvalidArgument(format!("unknown trajectory kind {other:?}"))),
        }
    }
}

/// Basic camera motion expressed in the base camera's frame.
///
/// Frame 0 is the base camera (identity pose, base intrinsics). Zoom moves
/// along the optical axis, pan along the camera x-axis, and orbit turns about
/// the camera y-axis around a pivot `magnitude` units ahead of the camera,
/// sweeping [`ORBIT_SWEEP`] radians.
pub fn generate_trajectory(
    kind: TrajectoryKind,
    n_frames: usize,
    magnitude: f64,
    base: &CameraFrame,
) -> Result<Trajectory> {
    if n_frames < 2 {
        return Err(Error::InvalidFrameCount(n_frames));
    }
    if !(magnitude > 0.0 && magnitude.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "magnitude must be positive, got {magnitude}"
        )));
    }
    let last = (n_frames - 1) as f64;
    let frames = (0..n_frames)
        .map(|i| {
            let t = i as f64 / last;
            let pose = match kind {
                TrajectoryKind::ZoomIn => Pose::from_translation(Vector3::new(0.0, 0.0, magnitude * t)),
                TrajectoryKind::ZoomOut => Pose::from_translation(Vector3::new(0.0, 0.0, -magnitude * t)),
                TrajectoryKind::PanLeft => Pose::from_translation(Vector3::new(-magnitude * t, 0.0, 0.0)),
                TrajectoryKind::PanRight => Pose::from_translation(Vector3::new(magnitude * t, 0.0, 0.0)),
                TrajectoryKind::Orbit => {
                    let pivot = Vector3::new(0.0, 0.0, magnitude);
                    let r = Rotation3::from_axis_angle(&Vector3::y_axis(), ORBIT_SWEEP * t);
                    Pose {
                        rotation: r.into_inner(),
                        translation: pivot - r * pivot,
                    }
                }
            };
            CameraFrame::new(base.intrinsics, pose, i)
        })
        .collect();
    Ok(Trajectory::new(frames, Convention::FirstFrameRelative))
}

/// Slerp rotations and lerp translations between two poses.
///
/// The endpoints are copied verbatim. Rotations exactly 180 degrees apart have
/// no unique geodesic and are rejected.
pub fn interpolate_poses(
    start: &Pose,
    end: &Pose,
    n_frames: usize,
    intrinsics: Intrinsics,
) -> Result<Trajectory> {
    if n_frames < 2 {
        return Err(Error::InvalidFrameCount(n_frames));
    }
    let rel = start.rotation.transpose() * end.rotation;
    let mut q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rel));
    if q.w < 0.0 {
        q = UnitQuaternion::new_unchecked(-q.into_inner());
    }
    if q.w.abs() < 1e-12 {
        return Err(Error::AmbiguousGeodesic);
    }
    let imag = q.imag();
    let angle = 2.0 * imag.norm().atan2(q.w);
    let axis = Unit::try_new(imag, 1e-15);

    let last = (n_frames - 1) as f64;
    let mut poses = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let pose = if i == 0 {
            *start
        } else if i == n_frames - 1 {
            *end
        } else {
            let t = i as f64 / last;
            let rotation = match axis {
                Some(axis) => start.rotation * Rotation3::from_axis_angle(&axis, angle * t).into_inner(),
                None => start.rotation,
            };
            Pose {
                rotation,
                translation: start.translation + (end.translation - start.translation) * t,
            }
        };
        poses.push(pose);
    }
    Ok(Trajectory::from_poses(&poses, intrinsics))
}
