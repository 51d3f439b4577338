//! Netpbm images (P5, P6) and Portable Float Maps.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scale::MetricDepthMap;

/// Reads whitespace-separated header tokens, skipping `#` comments, and
/// consumes the single whitespace byte that ends the header.
fn header_tokens(r: &mut impl BufRead, count: usize) -> Result<Vec<String>> {
    let mut tokens = Vec::with_capacity(count);
    let mut current = String::new();
    let mut byte = [0u8; 1];
    while tokens.len() < count {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Format("truncated header".into()));
        }
        match byte[0] {
            b'#' if current.is_empty() => {
                let mut skip = Vec::new();
                r.read_until(b'\n', &mut skip)?;
            }
            b if b.is_ascii_whitespace() => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            b => current.push(b as char),
        }
    }
    Ok(tokens)
}

fn parse_dim(token: &str, what: &str) -> Result<usize> {
    token.parse().map_err(|_| Error::Format(format!("bad {what} {token:?}")))
}

fn read_body(r: &mut impl Read, len: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|_| Error::Format("truncated pixel data".into()))?;
    Ok(buf)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an RGB image as 8-bit binary PPM, clamping to `[0, 1]`.
pub fn write_ppm(w: &mut impl Write, image: &Image) -> Result<()> {
    if image.channels != 3 {
        return Err(Error::ShapeMismatch(format!("PPM needs 3 channels, got {}", image.channels)));
    }
    write!(w, "P6\n{} {}\n255\n", image.width, image.height)?;
    let bytes: Vec<u8> = image.data.iter().map(|&v| quantize(v)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads a binary PPM into `[0, 1]` floats.
pub fn read_ppm(r: &mut impl BufRead) -> Result<Image> {
    let t = header_tokens(r, 4)?;
    if t[0] != "P6" {
        return Err(Error::Format(format!("expected P6, got {}", t[0])));
    }
    let (width, height, maxval) = (parse_dim(&t[1], "width")?, parse_dim(&t[2], "height")?, parse_dim(&t[3], "maxval")?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("maxval {maxval}")));
    }
    let n = width * height * 3;
    let data = if maxval < 256 {
        read_body(r, n)?.into_iter().map(|b| b as f64 / maxval as f64).collect()
    } else {
        read_body(r, 2 * n)?.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / maxval as f64).collect()
    };
    Image::from_data(width, height, 3, data)
}

/// Grayscale samples as stored, `0..=maxval`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

pub fn write_pgm(w: &mut impl Write, pgm: &Pgm) -> Result<()> {
    if pgm.data.len() != pgm.width * pgm.height || pgm.maxval == 0 {
        return Err(Error::ShapeMismatch(format!("{} samples for {}x{} PGM", pgm.data.len(), pgm.width, pgm.height)));
    }
    write!(w, "P5\n{} {}\n{}\n", pgm.width, pgm.height, pgm.maxval)?;
    let bytes: Vec<u8> = if pgm.maxval < 256 {
        pgm.data.iter().map(|&v| v.min(pgm.maxval) as u8).collect()
    } else {
        pgm.data.iter().flat_map(|&v| v.min(pgm.maxval).to_be_bytes()).collect()
    };
    w.write_all(&bytes)?;
    Ok(())
}

/// Writes a validity mask as an 8-bit PGM with 255 for set pixels.
pub fn write_pgm_mask(w: &mut impl Write, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let data = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_pgm(w, &Pgm { width, height, maxval: 255, data })
}

pub fn read_pgm(r: &mut impl BufRead) -> Result<Pgm> {
    let t = header_tokens(r, 4)?;
    if t[0] != "P5" {
        return Err(Error::Format(format!("expected P5, got {}", t[0])));
    }
    let (width, height, maxval) = (parse_dim(&t[1], "width")?, parse_dim(&t[2], "height")?, parse_dim(&t[3], "maxval")?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("maxval {maxval}")));
    }
    let n = width * height;
    let data = if maxval < 256 {
        read_body(r, n)?.into_iter().map(u16::from).collect()
    } else {
        read_body(r, 2 * n)?.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

/// Depth in meters is `sample * scale`; zero samples are invalid.
pub fn depth_from_pgm(pgm: &Pgm, scale: f64) -> Result<MetricDepthMap> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("depth scale must be positive, got {scale}")));
    }
    let depth = pgm.data.iter().map(|&v| v as f64 * scale).collect();
    let valid = pgm.data.iter().map(|&v| v > 0).collect();
    MetricDepthMap::new(pgm.width, pgm.height, depth, valid)
}

/// Float raster with rows stored top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    /// Single-channel map with non-finite and non-positive values invalid.
    pub fn to_depth(&self) -> Result<MetricDepthMap> {
        if self.channels != 1 {
            return Err(Error::ShapeMismatch(format!("depth needs 1 channel, got {}", self.channels)));
        }
        MetricDepthMap::from_depths(self.width, self.height, self.data.iter().map(|&v| v as f64).collect())
    }
}

/// Writes little-endian PFM (negative scale), rows bottom to top.
pub fn write_pfm(w: &mut impl Write, image: &FloatImage) -> Result<()> {
    let magic = match image.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::ShapeMismatch(format!("PFM needs 1 or 3 channels, got {c}"))),
    };
    if image.data.len() != image.width * image.height * image.channels {
        return Err(Error::ShapeMismatch("PFM data length".into()));
    }
    write!(w, "{magic}\n{} {}\n-1.0\n", image.width, image.height)?;
    let row = image.width * image.channels;
    let mut bytes = Vec::with_capacity(image.data.len() * 4);
    for y in (0..image.height).rev() {
        for v in &image.data[y * row..(y + 1) * row] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads PFM in either byte order; a negative scale means little-endian.
pub fn read_pfm(r: &mut impl BufRead) -> Result<FloatImage> {
    let t = header_tokens(r, 4)?;
    let channels = match t[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        m => return Err(Error::Format(format!("expected Pf or PF, got {m}"))),
    };
    let (width, height) = (parse_dim(&t[1], "width")?, parse_dim(&t[2], "height")?);
    let scale: f64 = t[3].parse().map_err(|_| Error::Format(format!("bad scale {:?}", t[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format(format!("bad scale {scale}")));
    }
    let little = scale < 0.0;
    let row = width * channels;
    let raw = read_body(r, width * height * channels * 4)?;
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }
        })
        .collect();
    let mut data = Vec::with_capacity(values.len());
    for y in (0..height).rev() {
        data.extend_from_slice(&values[y * row..(y + 1) * row]);
    }
    Ok(FloatImage {
        width,
        height,
        channels,
        data,
    })
}
