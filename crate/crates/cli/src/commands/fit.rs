use std::path::PathBuf;

use camsplat::camera::{CameraFrame, Intrinsics, Pose, Trajectory};
use camsplat::gsplat::{fit, ray_grid_cloud, render, FitResult, MeanParam, SupervisionView};
use camsplat::image::Image;
use camsplat::io::{read_gspc, write_gaussian_ply, write_gspc};
use camsplat::metrics::{psnr, ssim};
use camsplat::scale::MetricDepthMap;
use clap::Args;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::files::{frame_stem, open_reader, read_depth, read_image, write_atomic, write_image_pair, write_json};
use crate::CameraArgs;

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    camera: Option<CameraArgs>,
    /// One image per camera frame.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    images: Vec<PathBuf>,
    /// Optional metric depth per frame.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    depths: Vec<PathBuf>,
    /// Starting cloud (GSPC). Without it a ray grid on frame 0 is used.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Fit the built-in single-view wave pattern instead of files.
    #[arg(long, conflicts_with_all = ["cameras", "images", "depths"])]
    synthetic: bool,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// Posed inputs of one scene; every per-frame sequence matches the trajectory.
pub struct SceneBundle {
    pub trajectory: Trajectory,
    pub images: Vec<Image>,
    pub depths: Option<Vec<MetricDepthMap>>,
}

impl SceneBundle {
    pub fn new(trajectory: Trajectory, images: Vec<Image>, depths: Option<Vec<MetricDepthMap>>) -> CliResult<Self> {
        let n = trajectory.len();
        if images.len() != n || depths.as_ref().is_some_and(|d| d.len() != n) {
            return Err(CliError::input(format!(
                "{n} frames but {} images and {} depth maps",
                images.len(),
                depths.as_ref().map_or(0, Vec::len)
            )));
        }
        for (f, img) in trajectory.frames.iter().zip(&images) {
            if (img.width, img.height) != (f.width() as usize, f.height() as usize) {
                return Err(CliError::input(format!(
                    "frame {} is {}x{} but its image is {}x{}",
                    f.frame_index,
                    f.width(),
                    f.height(),
                    img.width,
                    img.height
                )));
            }
        }
        Ok(SceneBundle { trajectory, images, depths })
    }

    fn views(&self) -> Vec<SupervisionView> {
        self.trajectory
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| SupervisionView {
                camera: *f,
                image: self.images[i].clone(),
                depth: self.depths.as_ref().map(|d| d[i].clone()),
            })
            .collect()
    }
}

fn synthetic_scene(size: u32) -> CliResult<SceneBundle> {
    let k = Intrinsics::centered(size as f64, size, size)?;
    let traj = Trajectory::from_poses(&[Pose::identity()], k);
    SceneBundle::new(traj, vec![Image::wave_pattern(size as usize, size as usize)], None)
}

#[derive(Debug, Serialize)]
struct ViewMetrics {
    frame: usize,
    psnr: f64,
    ssim: Option<f64>,
}

#[derive(Debug, Serialize)]
struct FitReport {
    gaussians: usize,
    iterations: usize,
    initial_loss: f64,
    final_loss: f64,
    psnr: f64,
    ssim: Option<f64>,
    depth_missing: bool,
    views: Vec<ViewMetrics>,
}

fn write_outputs(out: &std::path::Path, scene: &SceneBundle, result: &FitResult, background: [f64; 3]) -> CliResult<()> {
    write_atomic(&out.join("cloud.gspc"), |w| write_gspc(w, &result.cloud).map_err(CliError::from))?;
    write_atomic(&out.join("cloud.ply"), |w| write_gaussian_ply(w, &result.cloud).map_err(CliError::from))?;
    write_atomic(&out.join("loss.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["step", "loss"]).map_err(|e| CliError::Io(e.to_string()))?;
        for (i, l) in result.losses.iter().enumerate() {
            csv.write_record([i.to_string(), l.to_string()]).map_err(|e| CliError::Io(e.to_string()))?;
        }
        csv.flush()?;
        Ok(())
    })?;
    let mut views = Vec::new();
    for (i, frame) in scene.trajectory.frames.iter().enumerate() {
        let r = render(&result.cloud, frame, background)?;
        write_image_pair(out, &frame_stem("render", i), &r.image)?;
        views.push(ViewMetrics {
            frame: i,
            psnr: psnr(&r.image, &scene.images[i])?,
            // too small for the SSIM window
            ssim: ssim(&r.image, &scene.images[i]).ok(),
        });
    }
    let n = views.len() as f64;
    let ssims: Option<Vec<f64>> = views.iter().map(|v| v.ssim).collect();
    let report = FitReport {
        gaussians: result.cloud.len(),
        iterations: result.losses.len() - 1,
        initial_loss: result.initial_loss(),
        final_loss: result.final_loss(),
        psnr: views.iter().map(|v| v.psnr).sum::<f64>() / n,
        ssim: ssims.map(|s| s.iter().sum::<f64>() / n),
        depth_missing: result.final_breakdown.depth_missing,
        views,
    };
    write_json(&out.join("metrics.json"), &report)
}

pub fn run(args: FitArgs, cfg: &mut RunConfig) -> CliResult<()> {
    if let Some(n) = args.iterations {
        cfg.fit.optim.iterations = n;
    }
    let scene = if args.synthetic {
        cfg.validate()?;
        synthetic_scene(cfg.fit.synthetic_size)?
    } else {
        let camera = args.camera.as_ref().ok_or_else(|| CliError::input("fit needs --cameras and --images, or --synthetic"))?;
        let file = camera.load(cfg)?;
        let images = args.images.iter().map(|p| read_image(p)).collect::<CliResult<Vec<_>>>()?;
        let depths = if args.depths.is_empty() {
            None
        } else {
            Some(args.depths.iter().map(|p| read_depth(p, cfg.fit.depth_scale)).collect::<CliResult<Vec<_>>>()?)
        };
        SceneBundle::new(file.trajectory, images, depths)?
    };
    let f = &cfg.fit;
    let cloud = match &args.init {
        Some(path) => read_gspc(&mut open_reader(path)?)?,
        None => {
            let first: CameraFrame = scene.trajectory.frames[0];
            ray_grid_cloud(&first, f.init_stride, f.init_depth, f.init_scale, f.init_opacity, [0.5; 3])?
        }
    };
    let mut optim = f.optim;
    if cloud.anchors.is_none() && optim.mean_param == MeanParam::AlongRay {
        log::info!("initial cloud has no ray anchors; optimizing means freely");
        optim.mean_param = MeanParam::Free;
    }
    let result = fit(&cloud, &scene.views(), &optim, None)?;
    write_outputs(&args.out, &scene, &result, optim.background)
}
