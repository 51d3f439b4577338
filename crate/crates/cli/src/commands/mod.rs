pub mod diffusion;
pub mod epi_mask;
pub mod fit;
pub mod metrics;
pub mod rays;
pub mod scale;
pub mod warp;

use std::path::Path;

use camsplat::io::{parse_camera_file, CameraFile, IntrinsicsNormalization};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::files::read_text;
use crate::{CameraArgs, NormArg, ResolutionArgs};

impl ResolutionArgs {
    /// Applies the flags to `cfg` and validates it.
    pub(crate) fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        if let Some(w) = self.width {
            cfg.camera.width = w;
        }
        if let Some(h) = self.height {
            cfg.camera.height = h;
        }
        if let Some(n) = self.intrinsics_norm {
            cfg.camera.intrinsics_norm = match n {
                NormArg::PerAxis => IntrinsicsNormalization::PerAxis,
                NormArg::Width => IntrinsicsNormalization::Width,
            };
        }
        cfg.validate()
    }
}

/// Reads a camera file at the resolution configured in `cfg`.
pub(crate) fn load_cameras(path: &Path, cfg: &RunConfig) -> CliResult<CameraFile> {
    let c = &cfg.camera;
    parse_camera_file(&read_text(path)?, c.width, c.height, c.intrinsics_norm)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

impl CameraArgs {
    /// Applies the flags to `cfg`, then reads the camera file.
    pub(crate) fn load(&self, cfg: &mut RunConfig) -> CliResult<CameraFile> {
        self.resolution.apply(cfg)?;
        load_cameras(&self.cameras, cfg)
    }
}
