//! Camera-conditioned scene geometry on the CPU.
//!
//! Poses are camera-to-world with OpenCV axes (x right, y down, z forward),
//! and pixel `(x, y)` has its center at `(x + 0.5, y + 0.5)`. All math is
//! `f64`; binary files store `f32`.

pub mod bitmask;
pub mod camera;
pub mod epipolar;
pub mod error;
pub mod image;
pub mod scale;
pub mod warp;
pub mod gsplat;
pub mod metrics;
pub mod optim;
pub mod io;
pub mod seq;
pub mod diffusion;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/cameras.md")]
    mod cameras {}
    #[doc = include_str!("../../../book/src/epipolar.md")]
    mod epipolar {}
    #[doc = include_str!("../../../book/src/scale-and-warp.md")]
    mod scale_and_warp {}
    #[doc = include_str!("../../../book/src/splatting.md")]
    mod splatting {}
    #[doc = include_str!("../../../book/src/sequence-model.md")]
    mod sequence_model {}
    #[doc = include_str!("../../../book/src/diffusion.md")]
    mod diffusion {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
}
