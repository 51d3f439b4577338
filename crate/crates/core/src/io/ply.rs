//! Binary little-endian PLY.

use std::io::{BufRead, Read, Write};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::gsplat::GaussianCloud;
use crate::scale::PointCloud;

/// Zeroth-order spherical harmonic basis constant.
const SH_C0: f64 = 0.282_094_791_773_878_14;

#[derive(Debug, Clone, Copy)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::Format(format!("unknown PLY type {other}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<(String, Scalar)>,
}

fn parse_header(r: &mut impl BufRead) -> Result<Vec<Element>> {
    let mut line = String::new();
    let mut next = |r: &mut dyn BufRead| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("truncated PLY header".into()));
        }
        Ok(line.trim_end().to_string())
    };
    if next(r)? != "ply" {
        return Err(Error::Format("missing ply magic".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_seen = false;
    loop {
        let l = next(r)?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        match parts.as_slice() {
            ["format", "binary_little_endian", _] => format_seen = true,
            ["format", f, _] => return Err(Error::Format(format!("unsupported PLY format {f}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| Error::Format(format!("bad element count {count}")))?,
                properties: Vec::new(),
            }),
            ["property", "list", ..] => return Err(Error::Format("list properties are not supported".into())),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Format("property before element".into()))?
                .properties
                .push((name.to_string(), Scalar::parse(ty)?)),
            ["end_header"] => break,
            _ => return Err(Error::Format(format!("bad PLY header line {l:?}"))),
        }
    }
    if !format_seen {
        return Err(Error::Format("PLY format line missing".into()));
    }
    Ok(elements)
}

/// Reads the `vertex` element: `x y z` plus optional `red green blue`
/// (8-bit, scaled to `[0, 1]`). Other properties are skipped.
pub fn read_ply(r: &mut impl BufRead) -> Result<PointCloud> {
    let elements = parse_header(r)?;
    let mut cloud = PointCloud::default();
    for el in &elements {
        let stride: usize = el.properties.iter().map(|p| p.1.size()).sum();
        if el.name != "vertex" {
            std::io::copy(&mut r.take((stride * el.count) as u64), &mut std::io::sink())?;
            continue;
        }
        let find = |n: &str| el.properties.iter().position(|p| p.0 == n);
        let xyz = [find("x"), find("y"), find("z")];
        let Some(xyz) = xyz.iter().copied().collect::<Option<Vec<_>>>() else {
            return Err(Error::Format("vertex element lacks x, y, z".into()));
        };
        let rgb = [find("red"), find("green"), find("blue")].iter().copied().collect::<Option<Vec<_>>>();
        let mut offsets = Vec::with_capacity(el.properties.len());
        let mut o = 0;
        for p in &el.properties {
            offsets.push(o);
            o += p.1.size();
        }
        let mut buf = vec![0u8; stride];
        let mut colors = Vec::new();
        for _ in 0..el.count {
            r.read_exact(&mut buf).map_err(|_| Error::Format("truncated PLY body".into()))?;
            let get = |i: usize| el.properties[i].1.decode(&buf[offsets[i]..]);
            cloud.points.push(Vector3::new(get(xyz[0]), get(xyz[1]), get(xyz[2])));
            if let Some(c) = &rgb {
                colors.push([get(c[0]) / 255.0, get(c[1]) / 255.0, get(c[2]) / 255.0]);
            }
        }
        if rgb.is_some() {
            cloud.colors = Some(colors);
        }
    }
    Ok(cloud)
}

/// Writes `x y z` as `float`, plus `uchar` colors when present.
pub fn write_ply(w: &mut impl Write, cloud: &PointCloud) -> Result<()> {
    cloud.validate()?;
    write!(w, "ply\nformat binary_little_endian 1.0\nelement vertex {}\n", cloud.len())?;
    w.write_all(b"property float x\nproperty float y\nproperty float z\n")?;
    if cloud.colors.is_some() {
        w.write_all(b"property uchar red\nproperty uchar green\nproperty uchar blue\n")?;
    }
    w.write_all(b"end_header\n")?;
    let mut bytes = Vec::with_capacity(cloud.len() * 15);
    for (i, p) in cloud.points.iter().enumerate() {
        for v in p.iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        if let Some(c) = &cloud.colors {
            bytes.extend(c[i].iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Exports Gaussians in the layout common splat viewers expect: colors as
/// degree-0 SH coefficients, logit opacity, log scales, `w x y z` rotation.
pub fn write_gaussian_ply(w: &mut impl Write, cloud: &GaussianCloud) -> Result<()> {
    write!(w, "ply\nformat binary_little_endian 1.0\nelement vertex {}\n", cloud.len())?;
    let names = [
        "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
    ];
    for n in names {
        writeln!(w, "property float {n}")?;
    }
    w.write_all(b"end_header\n")?;
    let mut bytes = Vec::with_capacity(cloud.len() * names.len() * 4);
    for g in &cloud.gaussians {
        let q = g.rotation.quaternion();
        let op = g.opacity.clamp(1e-6, 1.0 - 1e-6);
        let values = [
            g.mean.x,
            g.mean.y,
            g.mean.z,
            0.0,
            0.0,
            0.0,
            (g.color[0] - 0.5) / SH_C0,
            (g.color[1] - 0.5) / SH_C0,
            (g.color[2] - 0.5) / SH_C0,
            (op / (1.0 - op)).ln(),
            g.scales.x.ln(),
            g.scales.y.ln(),
            g.scales.z.ln(),
            q.w,
            q.i,
            q.j,
            q.k,
        ];
        for v in values {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}
