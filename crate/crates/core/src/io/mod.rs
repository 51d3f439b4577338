//! File formats.
//!
//! | format | contents |
//! |---|---|
//! | camera text | Re10K-style per-frame intrinsics and camera-from-world extrinsics |
//! | EPIM | bit-packed epipolar masks |
//! | GSPC | Gaussian clouds, 14 `f32` per primitive |
//! | RAYS | one Plücker map, `f32` |
//! | checkpoint | concatenated named `f32` tensors |
//! | PLY | binary little-endian point clouds, plus a Gaussian export |
//! | PPM / PGM / PFM | images, masks and depth maps |
//!
//! All binary integers and floats are little-endian unless the format says
//! otherwise (16-bit PGM samples are big-endian, as Netpbm requires).

mod binary;
mod camera_file;
mod checkpoint;
mod clouds;
mod masks;
mod netpbm;
mod ply;

pub use camera_file::{parse_camera_file, read_camera_file, write_camera_file, CameraFile, IntrinsicsNormalization};
pub use checkpoint::{read_checkpoint, write_checkpoint, NamedTensor};
pub use clouds::{read_gspc, read_ray_map, write_gspc, write_ray_map, GSPC_VERSION};
pub use masks::{read_epim, write_epim, EPIM_VERSION};
pub use netpbm::{
    depth_from_pgm, read_pfm, read_pgm, read_ppm, write_pfm, write_pgm, write_pgm_mask, write_ppm, FloatImage, Pgm,
};
pub use ply::{read_ply, write_gaussian_ply, write_ply};
