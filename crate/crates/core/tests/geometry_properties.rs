use camsplat::camera::{interpolate_poses, make_relative, ray_embedding_map, CameraFrame, Intrinsics, Pose, Trajectory};
use camsplat::epipolar::{build_mask, fundamental_between, mask_set_for_trajectory, FundamentalMatrix};
use camsplat::scale::{estimate_scale, scale_translations, unproject_depth, MetricDepthMap, PointCloud};
use camsplat::warp::{forward_correspondences, warp_frame};
use camsplat::image::Image;
use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;

fn rotation() -> impl Strategy<Value = Matrix3<f64>> {
    (-3.0..3.0f64, -1.5..1.5f64, -3.0..3.0f64).prop_map(|(r, p, y)| Rotation3::from_euler_angles(r, p, y).into_inner())
}

fn vector(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-scale..scale, -scale..scale, -scale..scale).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn pose(shift: f64) -> impl Strategy<Value = Pose> {
    (rotation(), vector(shift)).prop_map(|(r, t)| Pose::new(r, t).unwrap())
}

/// Small rotations so that a scene in front of one camera is seen by the other.
fn nearby_pose() -> impl Strategy<Value = Pose> {
    (-0.2..0.2f64, -0.2..0.2f64, -0.2..0.2f64, vector(0.5)).prop_map(|(r, p, y, t)| Pose::new(Rotation3::from_euler_angles(r, p, y).into_inner(), t).unwrap())
}

fn intrinsics() -> impl Strategy<Value = Intrinsics> {
    (8u32..40, 8u32..40, 0.6..2.0f64, 0.3..0.7f64, 0.3..0.7f64)
        .prop_map(|(w, h, f, cx, cy)| Intrinsics::new(f * w as f64, f * w as f64, cx * w as f64, cy * h as f64, w, h).unwrap())
}

fn is_rotation(r: &Matrix3<f64>) -> bool {
    (r.transpose() * r - Matrix3::identity()).abs().max() < 1e-9 && (r.determinant() - 1.0).abs() < 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plucker_moment_orthogonal_to_direction(k in intrinsics(), p in pose(5.0)) {
        let map = ray_embedding_map(&CameraFrame::new(k, p, 0));
        for y in 0..map.height {
            for x in 0..map.width {
                let (m, d) = (map.moment(x, y), map.direction(x, y));
                prop_assert!(m.dot(&d).abs() < 1e-7);
                prop_assert!((d.norm() - 1.0).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn make_relative_recomposes(poses in prop::collection::vec(pose(10.0), 1..8)) {
        let traj = Trajectory::from_poses(&poses, Intrinsics::centered(10.0, 8, 8).unwrap());
        let rel = make_relative(&traj).unwrap();
        prop_assert_eq!(rel.frames[0].pose, Pose::identity());
        for (orig, r) in poses.iter().zip(rel.poses()) {
            prop_assert!(is_rotation(&r.rotation));
            prop_assert!(poses[0].compose(r).max_abs_diff(orig) < 1e-9);
        }
    }

    #[test]
    fn interpolation_keeps_endpoints_and_rotations(a in pose(3.0), b in pose(3.0), n in 2usize..12) {
        let k = Intrinsics::centered(10.0, 8, 8).unwrap();
        let Ok(traj) = interpolate_poses(&a, &b, n, k) else { return Ok(()) };
        prop_assert_eq!(traj.frames[0].pose, a);
        prop_assert_eq!(traj.frames[n - 1].pose, b);
        for p in traj.poses() {
            prop_assert!(is_rotation(&p.rotation));
        }
    }

    #[test]
    fn fundamental_is_rank_deficient(ka in intrinsics(), kb in intrinsics(), a in pose(2.0), b in pose(2.0)) {
        prop_assume!((a.center() - b.center()).norm() > 1e-3);
        let f = fundamental_between(&CameraFrame::new(ka, a, 0), &CameraFrame::new(kb, b, 1)).unwrap();
        prop_assert!(f.0.determinant().abs() < 1e-10 * f.0.norm().powi(3));
    }

    /// The residual of a correspondence is the same whichever frame is the source.
    #[test]
    fn residual_symmetric_under_pair_swap(k in intrinsics(), a in nearby_pose(), b in nearby_pose(), pt in vector(1.0), z in 2.0..8.0f64) {
        prop_assume!((a.center() - b.center()).norm() > 1e-3);
        let (fa, fb) = (CameraFrame::new(k, a, 0), CameraFrame::new(k, b, 1));
        let f_ab = fundamental_between(&fa, &fb).unwrap();
        let f_ba = fundamental_between(&fb, &fa).unwrap();
        let scale = f_ab.0.norm();
        prop_assert!((f_ab.0.transpose() - f_ba.0).abs().max() <= 1e-12 * scale);
        let world = a.transform_point(&Vector3::new(pt.x, pt.y, z));
        let (Some(pa), Some(pb)) = (fa.project(&world), fb.project(&world)) else { return Ok(()) };
        let (pa, pb) = ((pa.pixel.x, pa.pixel.y), (pb.pixel.x, pb.pixel.y));
        prop_assert!((f_ab.residual(pa, pb) / scale).abs() < 1e-9);
        prop_assert!((f_ab.residual(pa, pb) - f_ba.residual(pb, pa)).abs() <= 1e-12 * scale * (1.0 + pa.0.abs() + pa.1.abs()) * (1.0 + pb.0.abs() + pb.1.abs()));
    }

    #[test]
    fn mask_monotone_in_tau(entries in prop::array::uniform9(-1.0..1.0f64), t1 in 0.05..3.0f64, dt in 0.0..3.0f64) {
        let f = FundamentalMatrix(Matrix3::from_row_slice(&entries));
        let (m1, _) = build_mask(&f, (5, 6), (7, 4), t1).unwrap();
        let (m2, _) = build_mask(&f, (5, 6), (7, 4), t1 + dt).unwrap();
        prop_assert!(m1.is_subset_of(&m2));
    }

    #[test]
    fn diagonal_masks_all_true(poses in prop::collection::vec(nearby_pose(), 2..4)) {
        let set = mask_set_for_trajectory(&Trajectory::from_poses(&poses, Intrinsics::centered(12.0, 12, 12).unwrap()), (4, 4), 1.0).unwrap();
        for i in 0..set.n_frames {
            prop_assert!(set.pair(i, i).bits.is_all_true());
        }
    }

    #[test]
    fn scale_equivariant(p in nearby_pose(), s in 0.2..5.0f64, k in 0.1..10.0f64, seed in any::<u64>()) {
        let frame = CameraFrame::new(Intrinsics::centered(20.0, 16, 12).unwrap(), p, 0);
        let depth = MetricDepthMap::from_depths(16, 12, (0..192).map(|i| 1.0 + ((seed.wrapping_add(i) % 97) as f64) / 20.0).collect()).unwrap();
        let metric = unproject_depth(&frame, &depth, None).unwrap();
        let center = p.center();
        let sparse = PointCloud::new(metric.points.iter().map(|q| center + (q - center) / s).collect());
        let base = estimate_scale(&sparse, &frame, &depth).unwrap().s;
        prop_assert!((base - s).abs() < 1e-9 * s);
        let scaled_frame = scale_translations(&Trajectory::from_poses(&[p], frame.intrinsics), k).frames[0];
        let est = estimate_scale(&sparse.scaled(k), &scaled_frame, &depth).unwrap().s;
        prop_assert!((est * k - base).abs() < 1e-9 * base);
    }

    #[test]
    fn median_survives_minority_outliers(s in 0.5..4.0f64, ratio in 0.0..0.45f64, factor in 2.0..20.0f64) {
        let frame = CameraFrame::new(Intrinsics::centered(20.0, 20, 20).unwrap(), Pose::identity(), 0);
        let clean = MetricDepthMap::from_depths(20, 20, (0..400).map(|i| 1.0 + (i % 13) as f64 * 0.3).collect()).unwrap();
        let sparse = unproject_depth(&frame, &clean, None).unwrap().scaled(1.0 / s);
        let mut noisy = clean.clone();
        let bad = (ratio * 400.0) as usize;
        for i in 0..bad {
            noisy.depth[(i * 7919) % 400] *= factor;
        }
        let est = estimate_scale(&sparse, &frame, &noisy).unwrap().s;
        prop_assert!((est - s).abs() <= 0.05 * s);
    }

    #[test]
    fn warp_destinations_on_epipolar_lines(k in intrinsics(), b in nearby_pose(), seed in any::<u64>()) {
        let a = CameraFrame::new(k, Pose::identity(), 0);
        let bf = CameraFrame::new(k, b, 1);
        prop_assume!(b.center().norm() > 1e-3);
        let n = (k.width * k.height) as u64;
        let depth = MetricDepthMap::from_depths(k.width as usize, k.height as usize, (0..n).map(|i| 2.0 + ((seed ^ i.wrapping_mul(2654435761)) % 1000) as f64 / 250.0).collect()).unwrap();
        let f = fundamental_between(&a, &bf).unwrap();
        let f = FundamentalMatrix(f.0 / f.0.norm());
        for c in forward_correspondences(&a, &depth, &bf).unwrap() {
            let src = (c.src_pixel.0 as f64 + 0.5, c.src_pixel.1 as f64 + 0.5);
            if let Ok(line) = camsplat::epipolar::epipolar_line(&f, src) {
                prop_assert!(line.distance(c.dst.x, c.dst.y) < 1e-4);
            }
        }
    }

    #[test]
    fn identity_warp_lossless(k in intrinsics(), seed in any::<u64>()) {
        let frame = CameraFrame::new(k, Pose::identity(), 0);
        let (w, h) = (k.width as usize, k.height as usize);
        let img = Image::from_fn(w, h, 3, |x, y, c| ((x * 31 + y * 17 + c * 7 + seed as usize % 13) % 256) as f64 / 255.0);
        let depth = MetricDepthMap::from_depths(w, h, (0..w * h).map(|i| 1.0 + (i % 5) as f64).collect()).unwrap();
        let out = warp_frame(&frame, &img, &depth, &frame, 0.0).unwrap();
        prop_assert!(out.validity.iter().all(|v| *v));
        prop_assert_eq!(out.image, img);
    }
}

/// Masks at two feature resolutions agree where their pixels overlap.
#[test]
fn mask_consistent_across_resolutions() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    let k = Intrinsics::centered(64.0, 64, 64).unwrap();
    for _ in 0..10 {
        let p = Pose::new(
            Rotation3::from_euler_angles(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)).into_inner(),
            Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.2..0.2)),
        )
        .unwrap();
        let traj = Trajectory::from_poses(&[Pose::identity(), p], k);
        let coarse = mask_set_for_trajectory(&traj, (16, 16), 2.0).unwrap();
        let fine = mask_set_for_trajectory(&traj, (32, 32), 4.0).unwrap();
        let (c, f) = (coarse.pair(0, 1), fine.pair(0, 1));
        let up = |i: usize| (i / 16 * 2) * 32 + (i % 16) * 2;
        let mut agree = 0;
        for sp in 0..256 {
            for dp in 0..256 {
                agree += (c.allows(sp, dp) == f.allows(up(sp), up(dp))) as usize;
            }
        }
        let rate = agree as f64 / 65536.0;
        assert!(rate >= 0.95, "agreement {rate}");
    }
}
