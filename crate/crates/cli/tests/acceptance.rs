//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! with its measured values and runtime; the test fails if any criterion does.

use std::io::{Cursor, Write};
use std::time::{Duration, Instant};

use camsplat::camera::{ray_embedding_map, CameraFrame, Intrinsics, Pose, Trajectory};
use camsplat::diffusion::{
    endpoint_conditioning, guided_denoise, sample, toy_trajectory_dataset, train, ConditioningBundle, ConditioningMode, Denoiser, NoiseLevel,
    Preconditioner, ToyDenoiser, ToyDenoiserConfig, TrainConfig, SIGMA_DATA, SIGMA_MAX, SIGMA_MIN,
};
use camsplat::epipolar::{build_mask, epipolar_line, fundamental_between, mask_set_for_trajectory, FundamentalMatrix};
use camsplat::gsplat::{fit, ray_grid_cloud, render, render_backward, FitConfig, Gaussian3D, GaussianCloud, LossWeights, MeanParam, SupervisionView};
use camsplat::image::Image;
use camsplat::io::{
    read_checkpoint, read_epim, read_gspc, read_pfm, read_pgm, read_ply, read_ppm, read_ray_map, write_checkpoint, write_epim, write_gspc,
    write_pfm, write_pgm, write_ply, write_ppm, write_ray_map, FloatImage, Pgm,
};
use camsplat::metrics::{pose_error_report, psnr, rotation_error, ssim, translation_error};
use camsplat::scale::{estimate_scale, scale_translations, MetricDepthMap, PointCloud};
use camsplat::seq::{attention, bidirectional_scan, ssm_scan, ssm_scan_chunked, AttentionParams, ScanDirection, SsmParams, TokenMask};
use camsplat::warp::forward_correspondences;
use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

mod common;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64()))
}

fn random_rotation(rng: &mut impl Rng, max_angle: f64) -> Matrix3<f64> {
    let axis = Unit::new_normalize(Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    Rotation3::from_axis_angle(&axis, rng.random_range(-max_angle..max_angle)).into_inner()
}

fn random_pose(rng: &mut impl Rng, max_angle: f64, max_shift: f64) -> Pose {
    let t = Vector3::new(rng.random_range(-max_shift..max_shift), rng.random_range(-max_shift..max_shift), rng.random_range(-max_shift..max_shift));
    Pose::new(random_rotation(rng, max_angle), t).unwrap()
}

fn random_intrinsics(rng: &mut impl Rng, w: u32, h: u32) -> Intrinsics {
    let f = rng.random_range(0.8..1.5) * w as f64;
    Intrinsics::new(f, f * rng.random_range(0.9..1.1), w as f64 * rng.random_range(0.4..0.6), h as f64 * rng.random_range(0.4..0.6), w, h).unwrap()
}

fn normalized(f: &FundamentalMatrix) -> FundamentalMatrix {
    FundamentalMatrix(f.0 / f.0.norm())
}

fn epipolar_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (w, h) = (32u32, 24u32);
    let (mut max_res, mut max_dist) = (0.0f64, 0.0f64);
    let mut scenes = 0;
    while scenes < 100 {
        let a = CameraFrame::new(random_intrinsics(&mut rng, w, h), random_pose(&mut rng, 0.3, 0.5), 0);
        let b = CameraFrame::new(random_intrinsics(&mut rng, w, h), random_pose(&mut rng, 0.3, 0.5), 1);
        if (a.pose.center() - b.pose.center()).norm() <= 1e-3 {
            continue;
        }
        scenes += 1;
        let f = normalized(&fundamental_between(&a, &b).map_err(|e| e.to_string())?);
        let depth = MetricDepthMap::from_depths(w as usize, h as usize, (0..w * h).map(|_| rng.random_range(2.0..6.0)).collect()).unwrap();
        for c in forward_correspondences(&a, &depth, &b).map_err(|e| e.to_string())? {
            let src = (c.src_pixel.0 as f64 + 0.5, c.src_pixel.1 as f64 + 0.5);
            max_res = max_res.max(f.residual(src, (c.dst.x, c.dst.y)).abs());
            if let Ok(line) = epipolar_line(&f, src) {
                max_dist = max_dist.max(line.distance(c.dst.x, c.dst.y));
            }
        }
    }
    ensure(max_res < 1e-7, || format!("residual {max_res:e}"))?;
    ensure(max_dist < 1e-4, || format!("line distance {max_dist:e} px"))?;
    Ok(format!("max |p'Fp| {max_res:.1e}, max line distance {max_dist:.1e} px over 100 scenes"))
}

fn mask_semantics() -> Check {
    let k = Intrinsics::centered(8.0, 8, 8).unwrap();
    let a = CameraFrame::new(k, Pose::identity(), 0);
    let b = CameraFrame::new(k, Pose::from_translation(Vector3::new(0.3, 0.0, 0.0)), 1);
    let f = fundamental_between(&a, &b).map_err(|e| e.to_string())?;
    let (bits, degenerate) = build_mask(&f, (8, 8), (8, 8), 0.5).map_err(|e| e.to_string())?;
    ensure(!degenerate, || "pure translation reported degenerate".into())?;
    for p in 0..64 {
        for q in 0..64 {
            ensure(bits.get(p, q) == (p / 8 == q / 8), || format!("source {p} destination {q}"))?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for i in 0..50 {
        let f = FundamentalMatrix(Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0)));
        let t1 = rng.random_range(0.1..2.0);
        let t2 = t1 + rng.random_range(0.01..2.0);
        let (m1, _) = build_mask(&f, (6, 7), (5, 8), t1).map_err(|e| e.to_string())?;
        let (m2, _) = build_mask(&f, (6, 7), (5, 8), t2).map_err(|e| e.to_string())?;
        ensure(m1.is_subset_of(&m2), || format!("tau monotonicity broken for matrix {i}"))?;
    }
    Ok("rows match exactly at tau 0.5; tau-monotone on 50 random F".into())
}

/// Reconstruction points at pixel centers of `frame` with metric depth
/// `scale` times their reconstructed depth.
fn scale_scene(rng: &mut impl Rng, frame: &CameraFrame, scale: f64) -> (PointCloud, MetricDepthMap) {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let mut depth = vec![0.0; w * h];
    let mut points = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let z = rng.random_range(1.0..5.0);
            let cam = frame.intrinsics.unproject(x as f64 + 0.5, y as f64 + 0.5) * z;
            points.push(frame.pose.transform_point(&cam));
            depth[y * w + x] = scale * z;
        }
    }
    (PointCloud::new(points), MetricDepthMap::from_depths(w, h, depth).unwrap())
}

fn scale_alignment() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let frame = CameraFrame::new(Intrinsics::centered(30.0, 24, 20).unwrap(), random_pose(&mut rng, 0.5, 1.0), 0);
    let (cloud, depth) = scale_scene(&mut rng, &frame, 2.5);
    let clean = estimate_scale(&cloud, &frame, &depth).map_err(|e| e.to_string())?.s;
    ensure((clean - 2.5).abs() < 1e-9, || format!("clean estimate {clean}"))?;

    let (cloud, mut depth) = scale_scene(&mut rng, &frame, 3.0);
    let n = depth.depth.len();
    for i in rand::seq::index::sample(&mut rng, n, n / 5) {
        depth.depth[i] *= 10.0;
    }
    let noisy = estimate_scale(&cloud, &frame, &depth).map_err(|e| e.to_string())?.s;
    ensure((noisy - 3.0).abs() <= 0.03, || format!("outlier estimate {noisy}"))?;

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let k = rng.random_range(0.1..10.0);
        let scaled_frame = scale_translations(&Trajectory::from_poses(&[frame.pose], frame.intrinsics), k).frames[0];
        let s = estimate_scale(&cloud.scaled(k), &scaled_frame, &depth).map_err(|e| e.to_string())?.s;
        worst = worst.max((s * k - noisy).abs() / noisy);
    }
    ensure(worst < 1e-9, || format!("equivariance error {worst:e}"))?;
    Ok(format!("clean {clean}, with outliers {noisy:.6}, equivariance error {worst:.1e}"))
}

/// Token-by-token recurrence from the definition.
fn naive_scan(x: &Array2<f64>, p: &SsmParams, direction: ScanDirection) -> Array2<f64> {
    let (len, d) = x.dim();
    let n = p.state();
    let (delta, b, c) = p.inputs(x);
    let a = p.a();
    let order: Vec<usize> = match direction {
        ScanDirection::Forward => (0..len).collect(),
        ScanDirection::Backward => (0..len).rev().collect(),
    };
    let mut hidden = vec![0.0; d * n];
    let mut y = Array2::zeros((len, d));
    for t in order {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..n {
                let hv = &mut hidden[j * n + k];
                *hv = (delta[[t, j]] * a[[j, k]]).exp() * *hv + delta[[t, j]] * b[[t, k]] * x[[t, j]];
                acc += c[[t, k]] * *hv;
            }
            y[[t, j]] = acc;
        }
    }
    y
}

fn min_time(runs: usize, mut f: impl FnMut()) -> f64 {
    (0..runs)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Per-call times of `a` and `b`. Calls are batched into samples of about
/// 30 ms and the samples alternate, so load changes hit both sides alike.
fn paired_time(mut a: impl FnMut(), mut b: impl FnMut()) -> (f64, f64) {
    let reps = |f: &mut dyn FnMut()| ((0.03 / min_time(3, &mut *f)).ceil() as usize).max(1);
    let (ra, rb) = (reps(&mut a), reps(&mut b));
    let batch = |f: &mut dyn FnMut(), n: usize| {
        let t = Instant::now();
        for _ in 0..n {
            f();
        }
        t.elapsed().as_secs_f64() / n as f64
    };
    let (mut ta, mut tb) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..15 {
        ta = ta.min(batch(&mut a, ra));
        tb = tb.min(batch(&mut b, rb));
    }
    (ta, tb)
}

fn ssm_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let len = if i == 0 { 2048 } else { rng.random_range(1..=2048) };
        let (d, n) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let p = SsmParams::random(d, n, &mut rng);
        let x = Array2::from_shape_fn((len, d), |_| rng.random_range(-2.0..2.0));
        let chunk = rng.random_range(1..=300);
        for dir in [ScanDirection::Forward, ScanDirection::Backward] {
            let oracle = naive_scan(&x, &p, dir);
            for y in [ssm_scan(&x, &p, dir), ssm_scan_chunked(&x, &p, dir, chunk)] {
                let err = (&y - &oracle).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                worst = worst.max(err);
            }
        }
        let both = bidirectional_scan(&x, &p);
        let oracle = naive_scan(&x, &p, ScanDirection::Forward) + naive_scan(&x, &p, ScanDirection::Backward);
        worst = worst.max((&both - &oracle).iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:e}"))?;
    let p = SsmParams::random(16, 8, &mut rng);
    let mut ratios = Vec::new();
    for len in [512, 1024, 2048] {
        let x1 = Array2::from_shape_fn((len, 16), |_| rng.random_range(-1.0..1.0));
        let x2 = Array2::from_shape_fn((2 * len, 16), |_| rng.random_range(-1.0..1.0));
        let (t1, t2) = paired_time(|| drop(bidirectional_scan(&x1, &p)), || drop(bidirectional_scan(&x2, &p)));
        ratios.push(t2 / t1);
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    ensure(max_ratio <= 2.5, || format!("L->2L time ratios {ratios:.2?}"))?;
    Ok(format!("max deviation {worst:.1e} on 200 instances; L->2L time ratios {ratios:.2?}"))
}

fn attention_locality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut checked = 0usize;
    for i in 0..50 {
        let n = rng.random_range(2..40);
        let heads = rng.random_range(1..=3);
        let width = heads * rng.random_range(1..=4);
        let params = AttentionParams::random(width, heads, &mut rng).map_err(|e| e.to_string())?;
        let density = rng.random_range(0.05..0.9);
        let mut mask = TokenMask::all(n);
        for q in 0..n {
            for k in 0..n {
                mask.bits.set(q, k, q == k || rng.random_bool(density));
            }
        }
        let x = Array2::from_shape_fn((n, width), |_| rng.random_range(-1.0..1.0));
        let base = attention(&x, &params, Some(&mask)).map_err(|e| e.to_string())?;
        let q = rng.random_range(0..n);
        let mut perturbed = x.clone();
        for k in (0..n).filter(|&k| !mask.allows(q, k)) {
            for v in perturbed.row_mut(k) {
                *v += rng.random_range(-5.0..5.0);
            }
        }
        let out = attention(&perturbed, &params, Some(&mask)).map_err(|e| e.to_string())?;
        ensure(out.row(q) == base.row(q), || format!("query {q} changed in case {i}"))?;
        checked += 1;
    }
    Ok(format!("{checked} mask/input pairs, zero delta"))
}

fn splat_loss(cloud: &GaussianCloud, cam: &CameraFrame, wi: &Image, wd: &[f64]) -> f64 {
    let out = render(cloud, cam, [0.1, 0.2, 0.3]).unwrap();
    let img: f64 = out.image.data.iter().zip(&wi.data).map(|(a, b)| a * b).sum();
    img + out.depth.iter().zip(wd).map(|(a, b)| a * b).sum::<f64>()
}

fn splat_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for _ in 0..20 {
        let cam = CameraFrame::new(Intrinsics::centered(16.0, 16, 16).unwrap(), random_pose(&mut rng, 0.05, 0.05), 0);
        let n = rng.random_range(1..=10);
        let gs = (0..n)
            .map(|_| Gaussian3D {
                mean: Vector3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(1.5..3.0)),
                scales: Vector3::new(rng.random_range(0.05..0.2), rng.random_range(0.05..0.2), rng.random_range(0.05..0.2)),
                rotation: UnitQuaternion::from_euler_angles(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                opacity: rng.random_range(0.2..0.9),
                color: [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
            })
            .collect();
        let cloud = GaussianCloud::from_gaussians(gs);
        let wi = Image::from_fn(16, 16, 3, |_, _, _| rng.random_range(-1.0..1.0));
        let wd: Vec<f64> = (0..256).map(|_| rng.random_range(-0.2..0.2)).collect();
        let out = render(&cloud, &cam, [0.1, 0.2, 0.3]).unwrap();
        let g = render_backward(&cloud, &cam, &out, &wi, Some(&wd)).map_err(|e| e.to_string())?;
        let mut compare = |edit: &dyn Fn(&mut Gaussian3D, f64), i: usize, analytic: f64| {
            let mut plus = cloud.clone();
            edit(&mut plus.gaussians[i], h);
            let mut minus = cloud.clone();
            edit(&mut minus.gaussians[i], -h);
            let fd = (splat_loss(&plus, &cam, &wi, &wd) - splat_loss(&minus, &cam, &wi, &wd)) / (2.0 * h);
            // relative to the gradient magnitude, floored for near-zero entries
            let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-3);
            worst = worst.max(rel);
            compared += 1;
        };
        for i in 0..n {
            for c in 0..3 {
                compare(&|g, d| g.color[c] += d, i, g.color[i][c]);
                compare(&|g, d| g.mean[c] += d, i, g.mean[i][c]);
            }
            compare(&|g, d| g.opacity += d, i, g.opacity[i]);
        }
    }
    ensure(worst < 1e-3, || format!("max relative error {worst:e}"))?;
    Ok(format!("{compared} gradient entries, max relative error {worst:.1e}"))
}

fn desk_fit() -> Check {
    let size = 32;
    let camera = CameraFrame::new(Intrinsics::centered(32.0, size, size).unwrap(), Pose::identity(), 0);
    let target = Image::wave_pattern(size as usize, size as usize);
    let cloud = ray_grid_cloud(&camera, 4, 2.0, 0.16, 0.5, [0.5; 3]).map_err(|e| e.to_string())?;
    ensure(cloud.len() == 64, || format!("{} initial Gaussians", cloud.len()))?;
    let cfg = FitConfig {
        iterations: 2000,
        weights: LossWeights::new(1.0, 0.0, 0.0).unwrap(),
        mean_param: MeanParam::AlongRay,
        ..Default::default()
    };
    let view = SupervisionView { camera, image: target.clone(), depth: None };
    let result = fit(&cloud, &[view], &cfg, None).map_err(|e| e.to_string())?;
    let rendered = render(&result.cloud, &camera, cfg.background).unwrap();
    let p = psnr(&rendered.image, &target).unwrap();
    ensure(p >= 25.0, || format!("PSNR {p:.2} dB"))?;
    let l = &result.losses;
    let tol = 1e-6 * l[0];
    let bad = l.windows(51).position(|w| w[50] > w[0] + tol);
    ensure(bad.is_none(), || format!("loss rose over the window starting at {}", bad.unwrap()))?;
    Ok(format!("PSNR {p:.2} dB after {} iterations, loss {:.3e} -> {:.3e}", l.len() - 1, l[0], l[l.len() - 1]))
}

fn toy_diffusion() -> Check {
    let pre = Preconditioner::default();
    let mut worst = 0.0f64;
    for i in 0..=100 {
        let sigma = SIGMA_MIN * (SIGMA_MAX / SIGMA_MIN).powf(i as f64 / 100.0);
        let (s2, d2) = (sigma * sigma, SIGMA_DATA * SIGMA_DATA);
        let skip = pre.c_skip(sigma);
        let out = pre.c_out(sigma);
        let target_var = ((1.0 - skip).powi(2) * d2 + skip * skip * s2) / (out * out);
        for e in [
            pre.c_in(sigma) * pre.c_in(sigma) * (s2 + d2) - 1.0,
            out * out - s2 * skip,
            target_var - 1.0,
            pre.c_noise(sigma) - sigma.ln() / 4.0,
        ] {
            worst = worst.max(e.abs());
        }
    }
    ensure(worst <= 1e-12, || format!("preconditioner identity error {worst:e}"))?;

    let mut net = ToyDenoiser::new(ToyDenoiserConfig::default()).map_err(|e| e.to_string())?;
    let report = train(&mut net, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let ratio = report.initial_eval / report.final_eval;
    ensure(ratio >= 10.0, || format!("loss drop {ratio:.2}x"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for _ in 0..20 {
        let x: Vec<f64> = (0..net.data_len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sigma = NoiseLevel::new(rng.random_range(SIGMA_MIN..SIGMA_MAX)).unwrap();
        let cond = ConditioningBundle::interpolation(vec![], vec![rng.random_range(-1.0..1.0)], vec![rng.random_range(-1.0..1.0)]);
        ensure(guided_denoise(&net, &x, sigma, &cond, 0.0) == net.denoise(&x, sigma, &cond.dropped()), || "w = 0 is not unconditional".into())?;
        ensure(guided_denoise(&net, &x, sigma, &cond, 1.0) == net.denoise(&x, sigma, &cond), || "w = 1 is not conditional".into())?;
    }

    let held_out = toy_trajectory_dataset(64, net.config.seq_len, 99).map_err(|e| e.to_string())?;
    let mut err = 0.0;
    for (i, row) in held_out.rows().into_iter().enumerate() {
        let row = row.as_slice().unwrap();
        let cond = endpoint_conditioning(row, ConditioningMode::Interpolation, vec![]);
        let s = sample(&net, &cond, 50, 1.0, i as u64).map_err(|e| e.to_string())?;
        err += (s[0] - row[0]).abs() + (s[s.len() - 1] - row[row.len() - 1]).abs();
    }
    let mae = err / (2.0 * held_out.nrows() as f64);
    ensure(mae <= 0.1 * SIGMA_DATA, || format!("endpoint MAE {mae:.4}"))?;
    Ok(format!("loss drop {ratio:.1}x, endpoint MAE {mae:.4}, identity error {worst:.1e}"))
}

fn metrics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let k = Intrinsics::centered(20.0, 16, 16).unwrap();
    let poses: Vec<Pose> = std::iter::once(Pose::identity()).chain((0..5).map(|_| random_pose(&mut rng, 0.8, 2.0))).collect();
    let traj = Trajectory::from_poses(&poses, k);
    let r = pose_error_report(&traj, &traj).map_err(|e| e.to_string())?;
    ensure(r.r_dist == 0.0 && r.t_dist == 0.0, || format!("self R_dist {} T_dist {}", r.r_dist, r.t_dist))?;
    let img = Image::from_fn(24, 24, 3, |_, _, _| rng.random_range(0.0..1.0));
    let (p, s) = (psnr(&img, &img).unwrap(), ssim(&img, &img).unwrap());
    ensure(p == 99.0 && s == 1.0, || format!("self PSNR {p}, SSIM {s}"))?;

    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2).into_inner();
    let gen = Trajectory::from_poses(&[Pose::identity(), Pose::new(rz, Vector3::x()).unwrap()], k);
    let gt = Trajectory::from_poses(&[Pose::identity(), Pose::from_translation(Vector3::x())], k);
    let quarter = rotation_error(&gen, &gt).map_err(|e| e.to_string())?;
    ensure(quarter == std::f64::consts::FRAC_PI_2, || format!("quarter turn gives {quarter}"))?;

    let other = Trajectory::from_poses(&poses.iter().map(|p| p.compose(&random_pose(&mut rng, 0.1, 0.3))).collect::<Vec<_>>(), k);
    let base = translation_error(&other, &traj).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for factor in [0.01, 0.5, 3.0, 1000.0] {
        let t = translation_error(&scale_translations(&other, factor), &scale_translations(&traj, 1.0 / factor)).map_err(|e| e.to_string())?;
        worst = worst.max((t - base).abs() / base);
    }
    ensure(worst < 1e-9, || format!("scale dependence {worst:e}"))?;
    Ok(format!("self-comparison exact, quarter turn {quarter}, relative T_dist change under scaling {worst:.1e}"))
}

fn round_trips() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let k = Intrinsics::centered(10.0, 6, 5).unwrap();
    let frame = CameraFrame::new(k, random_pose(&mut rng, 0.5, 1.0), 0);

    let cloud = ray_grid_cloud(&frame, 2, 2.0, 0.1, 0.5, [0.2, 0.4, 0.6]).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_gspc(&mut buf, &cloud).unwrap();
    let back = read_gspc(&mut Cursor::new(&buf)).map_err(|e| e.to_string())?;
    let mut again = Vec::new();
    write_gspc(&mut again, &back).unwrap();
    ensure(buf == again && back.len() == cloud.len(), || "gspc".into())?;

    let rays = ray_embedding_map(&frame);
    let mut buf = Vec::new();
    write_ray_map(&mut buf, &rays).unwrap();
    let back = read_ray_map(&mut Cursor::new(&buf)).map_err(|e| e.to_string())?;
    ensure(back.data.iter().zip(&rays.data).all(|(a, b)| *a == *b as f32 as f64), || "ray map".into())?;

    let poses = [Pose::identity(), random_pose(&mut rng, 0.2, 0.5), random_pose(&mut rng, 0.2, 0.5)];
    let set = mask_set_for_trajectory(&Trajectory::from_poses(&poses, k), (5, 6), 1.0).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_epim(&mut buf, &set).unwrap();
    ensure(read_epim(&mut Cursor::new(&buf)).map_err(|e| e.to_string())? == set, || "epipolar masks".into())?;

    let net = ToyDenoiser::new(ToyDenoiserConfig { hidden: 8, hidden_layers: 1, ..Default::default() }).unwrap();
    let tensors = net.named_tensors();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &tensors).unwrap();
    let back = read_checkpoint(&mut Cursor::new(&buf)).map_err(|e| e.to_string())?;
    ensure(back.len() == tensors.len() && back.iter().zip(&tensors).all(|(a, b)| a.name == b.name && a.shape == b.shape), || "checkpoint".into())?;
    ensure(
        back.iter().zip(&tensors).all(|(a, b)| a.data.iter().zip(&b.data).all(|(x, y)| *x == *y as f32 as f64)),
        || "checkpoint values".into(),
    )?;

    let pts = PointCloud::new((0..10).map(|i| Vector3::new(i as f64 * 0.25, -0.5, 1.0 + i as f64)).collect());
    let mut buf = Vec::new();
    write_ply(&mut buf, &pts).unwrap();
    let back = read_ply(&mut Cursor::new(&buf)).map_err(|e| e.to_string())?;
    ensure(back.points == pts.points, || "ply".into())?;

    let img = Image::from_fn(5, 4, 3, |x, y, c| ((x * 7 + y * 3 + c * 11) % 256) as f64 / 255.0);
    let mut buf = Vec::new();
    write_ppm(&mut buf, &img).unwrap();
    ensure(read_ppm(&mut Cursor::new(&buf)).map_err(|e| e.to_string())? == img, || "ppm".into())?;

    let pgm = Pgm { width: 4, height: 3, maxval: 65535, data: (0..12).map(|i| i * 5000).collect() };
    let mut buf = Vec::new();
    write_pgm(&mut buf, &pgm).unwrap();
    ensure(read_pgm(&mut Cursor::new(&buf)).map_err(|e| e.to_string())? == pgm, || "pgm".into())?;

    let pfm = FloatImage { width: 3, height: 2, channels: 1, data: vec![0.5, 1.25, -3.0, 7.0, 1e-3, 2.0] };
    let mut buf = Vec::new();
    write_pfm(&mut buf, &pfm).unwrap();
    ensure(read_pfm(&mut Cursor::new(&buf)).map_err(|e| e.to_string())? == pfm, || "pfm".into())?;
    Ok(())
}

fn pipeline_determinism() -> Check {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let d = tmp.path();
    common::fixtures(d);
    let pairs = common::run_pipeline_twice(d);
    for (a, b) in &pairs {
        common::same_outputs(a, b)?;
    }
    round_trips().map_err(|f| format!("{f} round trip failed"))?;
    Ok(format!("{} command outputs byte-identical; all binary formats round-trip", pairs.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, f64, fn() -> Check); 10] = [
        ("epipolar correctness", 5.0, epipolar_correctness),
        ("mask semantics", 5.0, mask_semantics),
        ("scale alignment", 5.0, scale_alignment),
        ("ssm oracle equivalence", 60.0, ssm_equivalence),
        ("masked-attention locality", 10.0, attention_locality),
        ("splatting gradients", 60.0, splat_gradients),
        ("desk-scale fit", 120.0, desk_fit),
        ("toy diffusion", 300.0, toy_diffusion),
        ("metrics", 5.0, metrics),
        ("pipeline determinism", 60.0, pipeline_determinism),
    ];
    let mut failed = Vec::new();
    let mut stdout = std::io::stdout();
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|msg| within(elapsed, *limit).map(|_| msg));
        let line = match &outcome {
            Ok(msg) => format!("PASS {:>2} {name}: {msg} ({:.2}s)", i + 1, elapsed.as_secs_f64()),
            Err(msg) => format!("FAIL {:>2} {name}: {msg} ({:.2}s)", i + 1, elapsed.as_secs_f64()),
        };
        // bypasses the test harness capture so the summary always shows
        writeln!(stdout, "{line}").unwrap();
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "criteria {failed:?} failed");
}
