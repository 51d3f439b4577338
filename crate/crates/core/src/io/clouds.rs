//! GSPC Gaussian clouds and RAYS Plücker maps.
//!
//! GSPC: `"GSPC" | u32 version | u32 count`, then per primitive 14 `f32`:
//! mean (3), scales (3), quaternion `w x y z` (4), opacity, RGB (3).
//!
//! RAYS: `"RAYS" | u32 height | u32 width | u32 channels (6)`, then
//! `height x width x 6` `f32` in row-major order.

use std::io::{Read, Write};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::binary::{expect_magic, read_f32, read_u32, to_u32, write_f32, write_u32};
use crate::camera::RayEmbeddingMap;
use crate::error::{Error, Result};
use crate::gsplat::{Gaussian3D, GaussianCloud};

pub const GSPC_VERSION: u32 = 1;

pub fn write_gspc(w: &mut impl Write, cloud: &GaussianCloud) -> Result<()> {
    w.write_all(b"GSPC")?;
    write_u32(w, GSPC_VERSION)?;
    write_u32(w, to_u32(cloud.len(), "primitive count")?)?;
    for g in &cloud.gaussians {
        let q = g.rotation.quaternion();
        let values = [
            g.mean.x, g.mean.y, g.mean.z, g.scales.x, g.scales.y, g.scales.z, q.w, q.i, q.j, q.k, g.opacity, g.color[0], g.color[1], g.color[2],
        ];
        for v in values {
            write_f32(w, v)?;
        }
    }
    Ok(())
}

/// Reads a cloud with sequential provenance. The stored quaternion is used
/// as is, so rewriting reproduces the file byte for byte.
pub fn read_gspc(r: &mut impl Read) -> Result<GaussianCloud> {
    expect_magic(r, b"GSPC")?;
    let version = read_u32(r)?;
    if version != GSPC_VERSION {
        return Err(Error::Format(format!("unsupported GSPC version {version}")));
    }
    let n = read_u32(r)? as usize;
    let mut gaussians = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let mut v = [0.0f64; 14];
        for x in v.iter_mut() {
            *x = read_f32(r)? as f64;
        }
        gaussians.push(Gaussian3D {
            mean: Vector3::new(v[0], v[1], v[2]),
            scales: Vector3::new(v[3], v[4], v[5]),
            rotation: UnitQuaternion::new_unchecked(Quaternion::new(v[6], v[7], v[8], v[9])),
            opacity: v[10],
            color: [v[11], v[12], v[13]],
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after GSPC payload".into()));
    }
    Ok(GaussianCloud::from_gaussians(gaussians))
}

pub fn write_ray_map(w: &mut impl Write, map: &RayEmbeddingMap) -> Result<()> {
    w.write_all(b"RAYS")?;
    write_u32(w, to_u32(map.height, "height")?)?;
    write_u32(w, to_u32(map.width, "width")?)?;
    write_u32(w, RayEmbeddingMap::CHANNELS as u32)?;
    for v in &map.data {
        write_f32(w, *v)?;
    }
    Ok(())
}

pub fn read_ray_map(r: &mut impl Read) -> Result<RayEmbeddingMap> {
    expect_magic(r, b"RAYS")?;
    let height = read_u32(r)? as usize;
    let width = read_u32(r)? as usize;
    let channels = read_u32(r)? as usize;
    if channels != RayEmbeddingMap::CHANNELS {
        return Err(Error::Format(format!("ray map with {channels} channels")));
    }
    let data = (0..height * width * channels).map(|_| read_f32(r).map(f64::from)).collect::<Result<_>>()?;
    Ok(RayEmbeddingMap { width, height, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{ray_embedding_map, CameraFrame, Intrinsics, Pose};

    #[test]
    fn gspc_round_trip() {
        let cloud = GaussianCloud::from_gaussians(vec![
            Gaussian3D::isotropic(Vector3::new(1.0, -2.0, 3.5), 0.25, 0.75, [0.1, 0.2, 0.3]),
            Gaussian3D {
                rotation: UnitQuaternion::from_euler_angles(0.3, 0.2, -0.1),
                ..Gaussian3D::isotropic(Vector3::zeros(), 1.0, 0.5, [1.0, 0.0, 0.5])
            },
        ]);
        let mut buf = Vec::new();
        write_gspc(&mut buf, &cloud).unwrap();
        assert_eq!(buf.len(), 12 + 2 * 14 * 4);
        let back = read_gspc(&mut buf.as_slice()).unwrap();
        for (a, b) in back.gaussians.iter().zip(&cloud.gaussians) {
            assert!((a.mean - b.mean).norm() < 1e-6 && (a.rotation.coords - b.rotation.coords).norm() < 1e-6);
        }
        back.validate().unwrap();
        let mut again = Vec::new();
        write_gspc(&mut again, &back).unwrap();
        assert_eq!(again, buf);
        assert!(read_gspc(&mut &buf[..buf.len() - 2]).is_err());
    }

    #[test]
    fn ray_map_round_trip() {
        let map = ray_embedding_map(&CameraFrame::new(Intrinsics::centered(3.0, 4, 3).unwrap(), Pose::identity(), 0));
        let mut buf = Vec::new();
        write_ray_map(&mut buf, &map).unwrap();
        let back = read_ray_map(&mut buf.as_slice()).unwrap();
        assert_eq!((back.width, back.height), (4, 3));
        assert!(back.data.iter().zip(&map.data).all(|(a, b)| (a - b).abs() < 1e-6));
    }
}
