//! Named-tensor checkpoints.
//!
//! A checkpoint is a plain concatenation of records, with no file header:
//!
//! ```text
//! u16 name_len | name (UTF-8) | u8 rank | rank x u32 dims | prod(dims) x f32
//! ```

use std::io::{Read, Write};

use super::binary::{read_f32, read_u16, read_u32, read_u8, to_u32, write_f32};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major values. Stored as `f32`.
    pub data: Vec<f64>,
}

pub fn write_checkpoint(w: &mut impl Write, tensors: &[NamedTensor]) -> Result<()> {
    for t in tensors {
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(Error::ShapeMismatch(format!("tensor {} has {} values for shape {:?}", t.name, t.data.len(), t.shape)));
        }
        let name = t.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("tensor name too long: {}", t.name)))?;
        let rank = u8::try_from(t.shape.len()).map_err(|_| Error::Format(format!("tensor {} rank too large", t.name)))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[rank])?;
        for d in &t.shape {
            w.write_all(&to_u32(*d, "dimension")?.to_le_bytes())?;
        }
        for v in &t.data {
            write_f32(w, *v)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Vec<NamedTensor>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = std::io::Cursor::new(bytes.as_slice());
    let mut out = Vec::new();
    while (cur.position() as usize) < bytes.len() {
        let len = read_u16(&mut cur)? as usize;
        let mut name = vec![0u8; len];
        cur.read_exact(&mut name).map_err(|_| Error::Format("truncated tensor name".into()))?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = read_u8(&mut cur)? as usize;
        let shape = (0..rank).map(|_| read_u32(&mut cur).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| read_f32(&mut cur).map(f64::from)).collect::<Result<Vec<_>>>()?;
        out.push(NamedTensor { name, shape, data });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let t = vec![
            NamedTensor { name: "a".into(), shape: vec![2], data: vec![1.0, -2.5] },
            NamedTensor { name: "bb".into(), shape: vec![], data: vec![0.5] },
        ];
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &t).unwrap();
        assert_eq!(&buf[..8], &[1, 0, b'a', 1, 2, 0, 0, 0]);
        assert_eq!(buf.len(), (2 + 1 + 1 + 4 + 8) + (2 + 2 + 1 + 4));
        assert_eq!(read_checkpoint(&mut buf.as_slice()).unwrap(), t);
        assert!(read_checkpoint(&mut &buf[..buf.len() - 1]).is_err());
    }
}
