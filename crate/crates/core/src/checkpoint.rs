//! `VFWT` parameter checkpoints.
//!
//! Little-endian layout: magic `VFWT`, version `u16`, tensor count `u32`, then
//! per tensor: name length `u16`, UTF-8 name, rank `u8`, extents `u32 × rank`,
//! `f32` payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VFWT";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn encode(tensors: &[CheckpointTensor]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        let name = t.name.as_bytes();
        if name.len() > u16::MAX as usize || t.shape.len() > u8::MAX as usize {
            return Err(Error::Usage(format!("tensor {} cannot be encoded", t.name)));
        }
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(Error::Shape {
                op: "checkpoint",
                lhs: t.shape.clone(),
                rhs: vec![t.data.len()],
            });
        }
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos as u64,
                message: format!("truncated {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<Vec<CheckpointTensor>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "bad magic, expected VFWT".into(),
        });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::Parse {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let count = r.u32("tensor count")?;
    let mut out = Vec::new();
    for _ in 0..count {
        let at = r.pos as u64;
        let len = r.u16("name length")? as usize;
        let name = String::from_utf8(r.take(len, "name")?.to_vec()).map_err(|_| Error::Parse {
            offset: at,
            message: "tensor name is not UTF-8".into(),
        })?;
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("extent")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Parse {
                offset: at,
                message: format!("extent overflow for {name}"),
            })?;
        let payload = r.take(n, "payload")?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        out.push(CheckpointTensor { name, shape, data });
    }
    Ok(out)
}

pub fn save(path: &Path, tensors: &[CheckpointTensor]) -> Result<()> {
    let bytes = encode(tensors)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<CheckpointTensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = CheckpointTensor {
            name: "ab".into(),
            shape: vec![2],
            data: vec![1.0, -2.5],
        };
        let b = encode(&[t]).unwrap();
        assert_eq!(&b[..4], b"VFWT");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        assert_eq!(u32::from_le_bytes(b[6..10].try_into().unwrap()), 1);
        assert_eq!(u16::from_le_bytes([b[10], b[11]]), 2);
        assert_eq!(&b[12..14], b"ab");
        assert_eq!(b[14], 1);
        assert_eq!(b.len(), 14 + 1 + 4 + 8);
    }

    #[test]
    fn truncation_reports_offset() {
        let t = CheckpointTensor {
            name: "w".into(),
            shape: vec![3],
            data: vec![1.0; 3],
        };
        let b = encode(&[t]).unwrap();
        let err = decode(&b[..b.len() - 2]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(decode(b"XXXX").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_exact_for_f32_values(
            vals in prop::collection::vec(-1e6f32..1e6, 1..40),
            name in "[a-z.]{1,12}",
        ) {
            let t = CheckpointTensor {
                name,
                shape: vec![vals.len()],
                data: vals.iter().map(|&v| v as f64).collect(),
            };
            let back = decode(&encode(std::slice::from_ref(&t)).unwrap()).unwrap();
            prop_assert_eq!(back, vec![t]);
        }
    }
}
