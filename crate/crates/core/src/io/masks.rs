//! EPIM epipolar mask sets.
//!
//! ```text
//! "EPIM" | u32 version | u32 H | u32 W | u32 n_pairs | f64 tau
//! per pair: u32 src | u32 dst | u8 flags (bit 0: degenerate)
//!           H*W rows of ceil(H*W / 8) bytes, bit j of byte b = column 8b + j
//! ```
//!
//! Pairs cover every ordered `(src, dst)` in row-major order.

use std::io::{Read, Write};

use super::binary::{expect_magic, read_f64, read_u32, read_u8, to_u32, write_u32};
use crate::bitmask::BitMatrix;
use crate::epipolar::{EpipolarMaskSet, PairMask};
use crate::error::{Error, Result};

pub const EPIM_VERSION: u32 = 1;

pub fn write_epim(w: &mut impl Write, set: &EpipolarMaskSet) -> Result<()> {
    w.write_all(b"EPIM")?;
    write_u32(w, EPIM_VERSION)?;
    write_u32(w, to_u32(set.height, "height")?)?;
    write_u32(w, to_u32(set.width, "width")?)?;
    write_u32(w, to_u32(set.pairs.len(), "pair count")?)?;
    w.write_all(&set.tau.to_le_bytes())?;
    for p in &set.pairs {
        write_u32(w, to_u32(p.src_frame, "frame")?)?;
        write_u32(w, to_u32(p.dst_frame, "frame")?)?;
        w.write_all(&[p.degenerate as u8])?;
        for row in 0..p.bits.rows() {
            w.write_all(&p.bits.row_bytes(row))?;
        }
    }
    Ok(())
}

pub fn read_epim(r: &mut impl Read) -> Result<EpipolarMaskSet> {
    expect_magic(r, b"EPIM")?;
    let version = read_u32(r)?;
    if version != EPIM_VERSION {
        return Err(Error::Format(format!("unsupported EPIM version {version}")));
    }
    let height = read_u32(r)? as usize;
    let width = read_u32(r)? as usize;
    let n_pairs = read_u32(r)? as usize;
    let tau = read_f64(r)?;
    let n_frames = (n_pairs as f64).sqrt().round() as usize;
    if n_frames * n_frames != n_pairs {
        return Err(Error::Format(format!("{n_pairs} pairs is not a square frame count")));
    }
    let pixels = height * width;
    let row_len = pixels.div_ceil(8);
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut row = vec![0u8; row_len];
    for idx in 0..n_pairs {
        let src = read_u32(r)? as usize;
        let dst = read_u32(r)? as usize;
        if (src, dst) != (idx / n_frames, idx % n_frames) {
            return Err(Error::Format(format!("pair {idx} is ({src}, {dst}), out of order")));
        }
        let flags = read_u8(r)?;
        let mut bits = BitMatrix::new(pixels, pixels);
        for q in 0..pixels {
            r.read_exact(&mut row).map_err(|_| Error::Format("truncated mask rows".into()))?;
            bits.set_row_bytes(q, &row);
        }
        pairs.push(PairMask {
            src_frame: src,
            dst_frame: dst,
            degenerate: flags & 1 == 1,
            bits,
        });
    }
    Ok(EpipolarMaskSet {
        height,
        width,
        tau,
        n_frames,
        pairs,
    })
}
