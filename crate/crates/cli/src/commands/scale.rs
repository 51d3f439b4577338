use std::path::PathBuf;

use camsplat::io::{read_ply, write_camera_file, CameraFile};
use camsplat::scale::{apply_scale, estimate_scale_pooled, ScaleFactor, ScaleOptions};
use clap::Args;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::files::{open_reader, read_depth, write_bytes, write_json};
use crate::CameraArgs;

#[derive(Debug, Args)]
pub struct ScaleArgs {
    #[command(flatten)]
    camera: CameraArgs,
    /// Sparse reconstruction, binary PLY.
    #[arg(long)]
    points: PathBuf,
    /// Metric depth per reference frame (`.pfm` or 16-bit `.pgm`).
    #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
    depth: Vec<PathBuf>,
    /// Reference frames, one per depth map.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    frames: Option<Vec<usize>>,
    /// Report path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the rescaled camera file here.
    #[arg(long)]
    scaled_cameras: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Report {
    #[serde(flatten)]
    factor: ScaleFactor,
    frames: Vec<usize>,
}

pub fn run(args: ScaleArgs, cfg: &mut RunConfig) -> CliResult<()> {
    if let Some(f) = &args.frames {
        cfg.scale.frames = f.clone();
    }
    let file = args.camera.load(cfg)?;
    let sc = &cfg.scale;
    if sc.frames.len() != args.depth.len() {
        return Err(CliError::input(format!("{} reference frames for {} depth maps", sc.frames.len(), args.depth.len())));
    }
    let sparse = read_ply(&mut open_reader(&args.points)?)?;
    let mut depths = Vec::with_capacity(args.depth.len());
    for (&f, path) in sc.frames.iter().zip(&args.depth) {
        let frame = *file
            .trajectory
            .frames
            .get(f)
            .ok_or_else(|| CliError::input(format!("reference frame {f} outside {} frames", file.trajectory.len())))?;
        depths.push((frame, read_depth(path, sc.depth_scale)?));
    }
    let views: Vec<_> = depths.iter().map(|(f, d)| (*f, d)).collect();
    let opts = ScaleOptions {
        convention: sc.convention,
        inlier_band: sc.inlier_band,
        min_points: sc.min_points,
    };
    let factor = estimate_scale_pooled(&sparse, &views, &opts)?;
    write_json(&args.out, &Report { factor, frames: sc.frames.clone() })?;
    if let Some(path) = &args.scaled_cameras {
        let scaled = CameraFile {
            trajectory: apply_scale(&file.trajectory, &factor),
            ..file
        };
        write_bytes(path, write_camera_file(&scaled, cfg.camera.intrinsics_norm)?.as_bytes())?;
    }
    Ok(())
}
