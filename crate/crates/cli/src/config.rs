//! Run configuration: one TOML document, every field optional.

use std::path::Path;

use camsplat::diffusion::{ConditioningMode, ToyDenoiserConfig, TrainConfig};
use camsplat::gsplat::FitConfig;
use camsplat::io::IntrinsicsNormalization;
use camsplat::scale::DepthConvention;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub width: u32,
    pub height: u32,
    pub intrinsics_norm: IntrinsicsNormalization,
}

impl Default for CameraSection {
    fn default() -> Self {
        CameraSection {
            width: 64,
            height: 64,
            intrinsics_norm: IntrinsicsNormalization::PerAxis,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpipolarSection {
    pub tau: f64,
    pub feature_width: usize,
    pub feature_height: usize,
}

impl Default for EpipolarSection {
    fn default() -> Self {
        EpipolarSection {
            tau: camsplat::epipolar::DEFAULT_TAU,
            feature_width: 16,
            feature_height: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleSection {
    /// Frames whose depth maps vote; one depth file per entry.
    pub frames: Vec<usize>,
    /// Meters per unit for 16-bit PGM depth.
    pub depth_scale: f64,
    pub convention: DepthConvention,
    pub inlier_band: f64,
    pub min_points: usize,
}

impl Default for ScaleSection {
    fn default() -> Self {
        ScaleSection {
            frames: vec![0],
            depth_scale: 1e-3,
            convention: DepthConvention::ZDepth,
            inlier_band: 1.5,
            min_points: camsplat::scale::MIN_OVERLAP_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarpSection {
    pub reference_frame: usize,
    pub splat_radius: f64,
    pub depth_scale: f64,
    /// Output size `[width, height]`; defaults to the camera resolution.
    pub resize: Option<[u32; 2]>,
}

impl Default for WarpSection {
    fn default() -> Self {
        WarpSection {
            reference_frame: 0,
            splat_radius: camsplat::warp::DEFAULT_SPLAT_RADIUS,
            depth_scale: 1e-3,
            resize: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub optim: FitConfig,
    /// Ray-grid initialization used when no initial cloud is given.
    pub init_stride: usize,
    pub init_depth: f64,
    pub init_scale: f64,
    pub init_opacity: f64,
    pub depth_scale: f64,
    /// Side of the built-in synthetic scene.
    pub synthetic_size: u32,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            optim: FitConfig::default(),
            init_stride: 4,
            init_depth: 2.0,
            init_scale: 0.16,
            init_opacity: 0.5,
            depth_scale: 1e-3,
            synthetic_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub count: usize,
    pub steps: usize,
    pub guidance: f64,
    pub mode: ConditioningMode,
    pub seed: u64,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            count: 16,
            steps: 50,
            guidance: 1.0,
            mode: ConditioningMode::Interpolation,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    pub model: ToyDenoiserConfig,
    pub train: TrainConfig,
    pub sample: SampleSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub camera: CameraSection,
    pub epipolar: EpipolarSection,
    pub scale: ScaleSection,
    pub warp: WarpSection,
    pub fit: FitSection,
    pub diffusion: DiffusionSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks the preconditions each pipeline would otherwise hit late.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::input(format!("config: {m}")));
        if self.camera.width == 0 || self.camera.height == 0 {
            return bad("camera resolution must be positive".into());
        }
        if !(self.epipolar.tau > 0.0) || self.epipolar.feature_width == 0 || self.epipolar.feature_height == 0 {
            return bad("epipolar tau and feature resolution must be positive".into());
        }
        if self.scale.frames.is_empty() || !(self.scale.depth_scale > 0.0) || !(self.scale.inlier_band > 1.0) {
            return bad("scale needs frames, a positive depth scale and an inlier band above 1".into());
        }
        if !(self.warp.splat_radius >= 0.0) || !(self.warp.depth_scale > 0.0) {
            return bad("warp splat radius must be non-negative and depth scale positive".into());
        }
        if matches!(self.warp.resize, Some([0, _] | [_, 0])) {
            return bad("warp resize must be positive".into());
        }
        let f = &self.fit;
        f.optim.weights.validate().map_err(|e| CliError::input(format!("config: fit weights: {e}")))?;
        if f.init_stride == 0 || !(f.init_depth > 0.0) || !(f.init_scale > 0.0) || !(f.init_opacity > 0.0 && f.init_opacity < 1.0) {
            return bad("fit initialization must be positive with opacity in (0, 1)".into());
        }
        if f.synthetic_size < 8 {
            return bad("synthetic scene must be at least 8 pixels".into());
        }
        let d = &self.diffusion;
        if d.model.seq_len < 3 || d.sample.steps == 0 || d.train.batch_size == 0 {
            return bad("diffusion needs seq_len >= 3, positive sample steps and batch size".into());
        }
        Ok(())
    }
}
