use std::path::PathBuf;

use camsplat::epipolar::{mask_set_for_trajectory, EpipolarMaskSet};
use camsplat::image::Image;
use camsplat::io::write_epim;
use clap::Args;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::files::{png_bytes, write_atomic, write_bytes};
use crate::CameraArgs;

#[derive(Debug, Args)]
pub struct EpiMaskArgs {
    #[command(flatten)]
    camera: CameraArgs,
    /// Distance threshold in feature-resolution pixels.
    #[arg(long)]
    tau: Option<f64>,
    /// Feature grid `WxH`.
    #[arg(long, value_parser = super::rays::parse_size)]
    feature_size: Option<(u32, u32)>,
    #[arg(long)]
    out: PathBuf,
}

/// Destination mask of the central source pixel, drawn 4x enlarged.
fn preview(set: &EpipolarMaskSet, src: usize, dst: usize) -> Image {
    let (w, h) = (set.width, set.height);
    let center = (h / 2) * w + w / 2;
    let pair = set.pair(src, dst);
    let mask = Image::from_fn(w, h, 1, |x, y, _| if pair.allows(center, y * w + x) { 1.0 } else { 0.0 });
    mask.resize_nearest(4 * w, 4 * h)
}

pub fn run(args: EpiMaskArgs, cfg: &mut RunConfig) -> CliResult<()> {
    if let Some(t) = args.tau {
        cfg.epipolar.tau = t;
    }
    if let Some((w, h)) = args.feature_size {
        cfg.epipolar.feature_width = w as usize;
        cfg.epipolar.feature_height = h as usize;
    }
    let file = args.camera.load(cfg)?;
    let e = &cfg.epipolar;
    let set = mask_set_for_trajectory(&file.trajectory, (e.feature_height, e.feature_width), e.tau)?;
    write_atomic(&args.out.join("masks.epim"), |w| write_epim(w, &set).map_err(CliError::from))?;
    for i in 0..set.n_frames {
        for k in 0..set.n_frames {
            if i != k {
                write_bytes(&args.out.join(format!("pair_{i:02}_{k:02}.png")), &png_bytes(&preview(&set, i, k))?)?;
            }
        }
    }
    let degenerate = set.pairs.iter().filter(|p| p.degenerate).count();
    log::info!("{} pairs, {degenerate} degenerate", set.pairs.len());
    Ok(())
}
