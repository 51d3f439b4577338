#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use camsplat::camera::Intrinsics;
use camsplat::image::Image;
use camsplat::io::{write_pfm, write_ply, write_ppm, FloatImage};
use camsplat::scale::PointCloud;
use nalgebra::Vector3;

pub const SIZE: u32 = 24;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_camsplat"));
    c.env("SC_THREADS", "2");
    c
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

pub fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

pub fn camera_text(xs: &[f64]) -> String {
    let mut s = String::from("https://example.com/clip\n");
    for (i, x) in xs.iter().enumerate() {
        // camera-from-world translation is minus the camera center for identity rotation
        s.push_str(&format!("{} 0.75 0.75 0.5 0.5 0 0 1 0 0 {} 0 1 0 0 0 0 1 0\n", 1000 * (i + 1), -x));
    }
    s
}

/// Cameras, one reference image, metric depth and a sparse cloud at 1/2.5 scale.
pub fn fixtures(dir: &Path) {
    fs::write(dir.join("cams.txt"), camera_text(&[0.0, 0.1, 0.2])).unwrap();
    let mut f = fs::File::create(dir.join("ref.ppm")).unwrap();
    write_ppm(&mut f, &Image::wave_pattern(SIZE as usize, SIZE as usize)).unwrap();
    let depth = FloatImage {
        width: SIZE as usize,
        height: SIZE as usize,
        channels: 1,
        data: (0..SIZE * SIZE).map(|i| 2.0 + 0.01 * (i % SIZE) as f32).collect(),
    };
    write_pfm(&mut fs::File::create(dir.join("depth.pfm")).unwrap(), &depth).unwrap();
    let k = Intrinsics::new(18.0, 18.0, 12.0, 12.0, SIZE, SIZE).unwrap();
    let mut points = Vec::new();
    for v in (1..SIZE).step_by(3) {
        for u in (1..SIZE).step_by(3) {
            let z = (2.0 + 0.01 * u as f64) / 2.5;
            points.push(Vector3::new((u as f64 + 0.5 - k.cx) / k.fx * z, (v as f64 + 0.5 - k.cy) / k.fy * z, z));
        }
    }
    write_ply(&mut fs::File::create(dir.join("points.ply")).unwrap(), &PointCloud::new(points)).unwrap();
    fs::write(
        dir.join("tiny.toml"),
        "[diffusion.model]\nhidden = 32\nhidden_layers = 1\n\n[diffusion.train]\nsteps = 30\nbatch_size = 16\ndataset_size = 64\neval_size = 32\n\n[diffusion.sample]\ncount = 3\nsteps = 8\n",
    )
    .unwrap();
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    out.sort();
    out
}

/// Byte equality of two files, or of two directories file by file.
pub fn same_outputs(a: &Path, b: &Path) -> Result<(), String> {
    let (fa, fb) = if a.is_dir() { (files(a), files(b)) } else { (vec![a.to_path_buf()], vec![b.to_path_buf()]) };
    let names = |f: &[PathBuf]| f.iter().map(|p| p.file_name().unwrap().to_owned()).collect::<Vec<_>>();
    if fa.is_empty() || names(&fa) != names(&fb) {
        return Err(format!("{} and {} hold different files", a.display(), b.display()));
    }
    for (x, y) in fa.iter().zip(&fb) {
        if fs::read(x).map_err(|e| e.to_string())? != fs::read(y).map_err(|e| e.to_string())? {
            return Err(format!("{} differs between runs", x.display()));
        }
    }
    Ok(())
}

pub fn cam_args() -> Vec<&'static str> {
    vec!["--cameras", "cams.txt", "--width", "24", "--height", "24"]
}

pub fn twice(dir: &Path, build: impl Fn(&str) -> Vec<String>) {
    for run_dir in ["a", "b"] {
        let args = build(run_dir);
        ok(dir, &args.iter().map(String::as_str).collect::<Vec<_>>());
    }
}

pub fn with_cams(cmd: &str, rest: &[&str], out: &str) -> Vec<String> {
    let mut v = vec![cmd.to_string()];
    v.extend(cam_args().iter().map(|s| s.to_string()));
    v.extend(rest.iter().map(|s| s.to_string()));
    v.push("--out".into());
    v.push(out.into());
    v
}

/// Runs every command twice, into `a/` and `b/`, and returns the output pairs
/// to compare.
pub fn run_pipeline_twice(d: &Path) -> Vec<(PathBuf, PathBuf)> {
    twice(d, |r| with_cams("rays", &[], &format!("{r}/rays")));
    twice(d, |r| with_cams("epi-mask", &["--feature-size", "8x8"], &format!("{r}/masks")));
    twice(d, |r| with_cams("warp", &["--image", "ref.ppm", "--depth", "depth.pfm"], &format!("{r}/warp")));
    twice(d, |r| {
        let mut v = with_cams("scale", &["--points", "points.ply", "--depth", "depth.pfm"], &format!("{r}/scale.json"));
        v.extend(["--scaled-cameras".to_string(), format!("{r}/scaled.txt")]);
        v
    });
    twice(d, |r| vec!["fit".into(), "--synthetic".into(), "--iterations".into(), "40".into(), "--out".into(), format!("{r}/fit")]);
    twice(d, |r| ["--config", "tiny.toml", "toy-diffusion", "train", "--out", &format!("{r}/toy")].map(String::from).to_vec());
    twice(d, |r| {
        ["--config", "tiny.toml", "toy-diffusion", "sample", "--checkpoint", "a/toy/model.ckpt", "--out", &format!("{r}/samples.csv")]
            .map(String::from)
            .to_vec()
    });
    twice(d, |r| {
        let mut v: Vec<String> = ["metrics", "--generated", "cams.txt", "--reference", "a/scaled.txt", "--width", "24", "--height", "24"]
            .map(String::from)
            .to_vec();
        v.extend(["--images", "ref.ppm", "--reference-images", "a/warp/warp_0000.ppm", "--out"].map(String::from));
        v.push(format!("{r}/metrics.json"));
        v
    });
    ["rays", "masks", "warp", "scale.json", "scaled.txt", "fit", "toy", "samples.csv", "metrics.json"]
        .iter()
        .map(|name| (d.join("a").join(name), d.join("b").join(name)))
        .collect()
}
