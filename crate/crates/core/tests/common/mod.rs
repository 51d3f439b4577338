#![allow(dead_code)]

use camsplat::camera::{CameraFrame, Intrinsics, Pose};
use camsplat::gsplat::{fit, ray_grid_cloud, FitConfig, FitResult, LossWeights, MeanParam, SupervisionView};
use camsplat::image::Image;
use camsplat::metrics::psnr;

pub fn smooth_target(size: usize) -> Image {
    Image::wave_pattern(size, size)
}

/// Fits an 8x8 grid of Gaussians placed along their pixel rays at depth 2 to
/// [`smooth_target`], returning the fit and the final PSNR.
pub fn desk_fit(iterations: usize) -> (FitResult, f64) {
    desk_fit_with(FitConfig { iterations, ..Default::default() })
}

pub fn desk_fit_with(base: FitConfig) -> (FitResult, f64) {
    let size = 32;
    let camera = CameraFrame::new(Intrinsics::centered(32.0, size, size).unwrap(), Pose::identity(), 0);
    let target = smooth_target(size as usize);
    let cloud = ray_grid_cloud(&camera, 4, 2.0, 0.16, 0.5, [0.5; 3]).unwrap();
    let view = SupervisionView { camera, image: target.clone(), depth: None };
    let cfg = FitConfig {
        weights: LossWeights::new(1.0, 0.0, 0.0).unwrap(),
        mean_param: MeanParam::AlongRay,
        ..base
    };
    let result = fit(&cloud, &[view], &cfg, None).unwrap();
    let rendered = camsplat::gsplat::render(&result.cloud, &camera, cfg.background).unwrap();
    let p = psnr(&rendered.image, &target).unwrap();
    (result, p)
}

/// Every loss is at most the loss 50 iterations earlier, up to
/// `1e-6 * initial`.
pub fn windows_non_increasing(losses: &[f64]) -> bool {
    let tol = 1e-6 * losses[0];
    losses.windows(51).all(|w| w[50] <= w[0] + tol)
}
