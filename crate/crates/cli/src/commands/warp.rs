use std::path::PathBuf;

use camsplat::io::write_pgm_mask;
use camsplat::warp::warp_frame;
use clap::Args;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::files::{frame_stem, read_depth, read_image, write_atomic, write_image_pair, write_json};
use crate::CameraArgs;

#[derive(Debug, Args)]
pub struct WarpArgs {
    #[command(flatten)]
    camera: CameraArgs,
    /// Reference image (`.ppm` or `.png`).
    #[arg(long)]
    image: PathBuf,
    /// Reference metric depth (`.pfm` or 16-bit `.pgm`).
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    reference_frame: Option<usize>,
    #[arg(long)]
    splat_radius: Option<f64>,
    /// Output size `WxH`.
    #[arg(long, value_parser = super::rays::parse_size)]
    resize: Option<(u32, u32)>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct FrameSummary {
    frame: usize,
    valid_pixels: usize,
    mean_depth: Option<f64>,
}

pub fn run(args: WarpArgs, cfg: &mut RunConfig) -> CliResult<()> {
    if let Some(r) = args.reference_frame {
        cfg.warp.reference_frame = r;
    }
    if let Some(r) = args.splat_radius {
        cfg.warp.splat_radius = r;
    }
    if let Some((w, h)) = args.resize {
        cfg.warp.resize = Some([w, h]);
    }
    let file = args.camera.load(cfg)?;
    let wc = &cfg.warp;
    let traj = &file.trajectory;
    let reference = *traj
        .frames
        .get(wc.reference_frame)
        .ok_or_else(|| CliError::input(format!("reference frame {} outside {} frames", wc.reference_frame, traj.len())))?;
    let image = read_image(&args.image)?;
    let depth = read_depth(&args.depth, wc.depth_scale)?;
    if (image.width, image.height) != (reference.width() as usize, reference.height() as usize) {
        return Err(CliError::input(format!(
            "image is {}x{}, cameras are {}x{}",
            image.width,
            image.height,
            reference.width(),
            reference.height()
        )));
    }
    let mut summary = Vec::with_capacity(traj.len());
    for (i, frame) in traj.frames.iter().enumerate() {
        let dst = match wc.resize {
            Some([w, h]) => frame.rescaled(w, h),
            None => *frame,
        };
        let warped = warp_frame(&reference, &image, &depth, &dst, wc.splat_radius)?;
        write_image_pair(&args.out, &frame_stem("warp", i), &warped.image)?;
        let mask_path = args.out.join(format!("{}.pgm", frame_stem("mask", i)));
        write_atomic(&mask_path, |w| {
            write_pgm_mask(w, warped.image.width, warped.image.height, &warped.validity).map_err(CliError::from)
        })?;
        summary.push(FrameSummary {
            frame: i,
            valid_pixels: warped.valid_count(),
            mean_depth: warped.mean_depth(),
        });
    }
    write_json(&args.out.join("summary.json"), &summary)
}
