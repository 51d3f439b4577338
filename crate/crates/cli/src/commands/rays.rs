use std::path::PathBuf;

use camsplat::camera::ray_embedding_map_at;
use camsplat::io::write_ray_map;
use clap::Args;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::files::{frame_stem, write_atomic};
use crate::CameraArgs;

#[derive(Debug, Args)]
pub struct RaysArgs {
    #[command(flatten)]
    camera: CameraArgs,
    /// Ray-map size `WxH`; defaults to the camera resolution.
    #[arg(long, value_parser = parse_size)]
    map_size: Option<(u32, u32)>,
    #[arg(long)]
    out: PathBuf,
}

pub(crate) fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: u32 = w.parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: u32 = h.parse().map_err(|_| format!("bad height in {s:?}"))?;
    if w == 0 || h == 0 {
        return Err(format!("size must be positive, got {s:?}"));
    }
    Ok((w, h))
}

pub fn run(args: RaysArgs, cfg: &mut RunConfig) -> CliResult<()> {
    let file = args.camera.load(cfg)?;
    let (w, h) = args.map_size.unwrap_or((cfg.camera.width, cfg.camera.height));
    for (i, frame) in file.trajectory.frames.iter().enumerate() {
        let map = ray_embedding_map_at(frame, w, h);
        let path = args.out.join(format!("{}.rays", frame_stem("rays", i)));
        write_atomic(&path, |out| write_ray_map(out, &map).map_err(CliError::from))?;
    }
    log::info!("wrote {} ray maps to {}", file.trajectory.len(), args.out.display());
    Ok(())
}
