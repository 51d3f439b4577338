//! Re10K-style camera files.
//!
//! The first line is a source URL. Each following non-empty line holds 19
//! numbers: a timestamp, normalized `fx fy cx cy`, two unused zeros and the
//! 3x4 camera-from-world matrix in row-major order.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::camera::{CameraFrame, Convention, Intrinsics, Pose, Trajectory};
use crate::error::{Error, Result};

/// How normalized intrinsics map to pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntrinsicsNormalization {
    /// `fx, cx` by width and `fy, cy` by height.
    #[default]
    PerAxis,
    /// Everything by width.
    Width,
}

impl IntrinsicsNormalization {
    fn factors(self, width: u32, height: u32) -> (f64, f64) {
        match self {
            IntrinsicsNormalization::PerAxis => (width as f64, height as f64),
            IntrinsicsNormalization::Width => (width as f64, width as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraFile {
    pub url: String,
    pub timestamps: Vec<i64>,
    pub trajectory: Trajectory,
    /// Timestamps were not strictly increasing. Frame order is kept as read.
    pub non_monotone: bool,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Files carry about seven significant digits, so rotations are accepted
/// when roughly orthonormal and snapped to the nearest rotation.
const FILE_ROTATION_TOLERANCE: f64 = 1e-3;

fn orthonormalize(r: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    if !r.iter().all(|v| v.is_finite()) || (r.transpose() * r - Matrix3::identity()).abs().max() > FILE_ROTATION_TOLERANCE || r.determinant() <= 0.0 {
        return None;
    }
    if (r.transpose() * r - Matrix3::identity()).abs().max() <= 1e-12 {
        return Some(*r);
    }
    Some(Rotation3::from_matrix_eps(r, 1e-15, 100, Rotation3::identity()).into_inner())
}

/// Parses camera text for frames rendered at `width x height`.
pub fn parse_camera_file(text: &str, width: u32, height: u32, norm: IntrinsicsNormalization) -> Result<CameraFile> {
    let mut lines = text.lines().enumerate();
    let url = match lines.next() {
        Some((_, l)) => l.trim().to_string(),
        None => return Err(parse_err(1, "empty camera file")),
    };
    let (sx, sy) = norm.factors(width, height);
    let mut timestamps = Vec::new();
    let mut frames = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 19 {
            return Err(parse_err(lineno, format!("expected 19 fields, found {}", fields.len())));
        }
        let ts: i64 = fields[0].parse().map_err(|_| parse_err(lineno, format!("bad timestamp {:?}", fields[0])))?;
        let v: Vec<f64> = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| parse_err(lineno, format!("bad number {f:?}"))))
            .collect::<Result<_>>()?;
        let k = Intrinsics::new(v[0] * sx, v[1] * sy, v[2] * sx, v[3] * sy, width, height).map_err(|e| parse_err(lineno, e.to_string()))?;
        let m = &v[6..18];
        let r = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let t = Vector3::new(m[3], m[7], m[11]);
        let cam_from_world = Pose::new(orthonormalize(&r).ok_or_else(|| parse_err(lineno, "rotation block is not a rotation"))?, t)
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        frames.push(CameraFrame::new(k, cam_from_world.inverse(), frames.len()));
        timestamps.push(ts);
    }
    if frames.is_empty() {
        return Err(parse_err(1, "no camera lines"));
    }
    let non_monotone = timestamps.windows(2).any(|w| w[1] <= w[0]);
    if non_monotone {
        warn!("camera timestamps are not increasing; keeping file order");
    }
    Ok(CameraFile {
        url,
        timestamps,
        trajectory: Trajectory::new(frames, Convention::World),
        non_monotone,
    })
}

pub fn read_camera_file(path: &Path, width: u32, height: u32, norm: IntrinsicsNormalization) -> Result<CameraFile> {
    parse_camera_file(&std::fs::read_to_string(path)?, width, height, norm)
}

/// Formats a camera file; numbers use the shortest exact decimal form.
pub fn write_camera_file(file: &CameraFile, norm: IntrinsicsNormalization) -> Result<String> {
    if file.timestamps.len() != file.trajectory.len() {
        return Err(Error::LengthMismatch(file.timestamps.len(), file.trajectory.len()));
    }
    let mut out = format!("{}\n", file.url);
    for (ts, f) in file.timestamps.iter().zip(&file.trajectory.frames) {
        let k = &f.intrinsics;
        let (sx, sy) = norm.factors(k.width, k.height);
        let cw = f.pose.inverse();
        let (r, t) = (cw.rotation, cw.translation);
        write!(out, "{ts} {} {} {} {} 0 0", k.fx / sx, k.fy / sy, k.cx / sx, k.cy / sy).unwrap();
        for row in 0..3 {
            write!(out, " {} {} {} {}", r[(row, 0)], r[(row, 1)], r[(row, 2)], t[row]).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}
