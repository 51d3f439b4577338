use std::path::PathBuf;

use camsplat::metrics::{pose_error_report, psnr, ssim, PoseErrorReport};
use clap::Args;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::files::{read_image, write_json};
use crate::ResolutionArgs;

use super::load_cameras;

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Camera file of the generated trajectory.
    #[arg(long)]
    generated: PathBuf,
    /// Camera file of the ground-truth trajectory.
    #[arg(long)]
    reference: PathBuf,
    #[command(flatten)]
    resolution: ResolutionArgs,
    /// Generated frames, compared pairwise with `--reference-images`.
    #[arg(long, num_args = 1.., value_delimiter = ',', requires = "reference_images")]
    images: Vec<PathBuf>,
    #[arg(long, num_args = 1.., value_delimiter = ',', requires = "images")]
    reference_images: Vec<PathBuf>,
    /// Output JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct ImageScores {
    psnr: f64,
    ssim: Option<f64>,
    per_frame_psnr: Vec<f64>,
    per_frame_ssim: Vec<Option<f64>>,
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    #[serde(flatten)]
    pose: PoseErrorReport,
    #[serde(flatten)]
    images: Option<ImageScores>,
}

fn image_scores(generated: &[PathBuf], reference: &[PathBuf]) -> CliResult<ImageScores> {
    if generated.len() != reference.len() {
        return Err(CliError::input(format!("{} generated images but {} reference images", generated.len(), reference.len())));
    }
    let mut per_frame_psnr = Vec::new();
    let mut per_frame_ssim = Vec::new();
    for (g, r) in generated.iter().zip(reference) {
        let (a, b) = (read_image(g)?, read_image(r)?);
        per_frame_psnr.push(psnr(&a, &b).map_err(|e| CliError::input(format!("{}: {e}", g.display())))?);
        per_frame_ssim.push(ssim(&a, &b).ok());
    }
    let n = per_frame_psnr.len() as f64;
    let ssims: Option<Vec<f64>> = per_frame_ssim.iter().copied().collect();
    Ok(ImageScores {
        psnr: per_frame_psnr.iter().sum::<f64>() / n,
        ssim: ssims.map(|s| s.iter().sum::<f64>() / n),
        per_frame_psnr,
        per_frame_ssim,
    })
}

pub fn run(args: MetricsArgs, cfg: &mut RunConfig) -> CliResult<()> {
    args.resolution.apply(cfg)?;
    let generated = load_cameras(&args.generated, cfg)?;
    let reference = load_cameras(&args.reference, cfg)?;
    let pose = pose_error_report(&generated.trajectory, &reference.trajectory)?;
    let images = if args.images.is_empty() {
        None
    } else {
        Some(image_scores(&args.images, &args.reference_images)?)
    };
    write_json(&args.out, &MetricsReport { pose, images })
}
