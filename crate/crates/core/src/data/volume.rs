//! `VVOL` volume files.
//!
//! Little-endian layout: magic `VVOL`, version `u16`, dtype code `u8`
//! (0 = u8, 1 = f32), extents `u32 x 3`, spacing in mm `f32 x 3`, then the
//! row-major payload. The header is 31 bytes.

use std::fs::{self, File};
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VVOL";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 31;

/// Largest voxel count accepted from a file header.
pub const MAX_VOXELS: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    U8,
    F32,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::U8 => 0,
            Dtype::F32 => 1,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Voxels {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl Voxels {
    pub fn len(&self) -> usize {
        match self {
            Voxels::U8(v) => v.len(),
            Voxels::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            Voxels::U8(_) => Dtype::U8,
            Voxels::F32(_) => Dtype::F32,
        }
    }

    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            Voxels::U8(v) => v.iter().map(|&x| x as f32).collect(),
            Voxels::F32(v) => v.clone(),
        }
    }
}

/// Intensity grid indexed `[axis0][axis1][axis2]`, row-major, with physical
/// spacing per axis. Spacings are held at `f32` precision so that a saved
/// volume loads back equal.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub voxels: Voxels,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeHeader {
    pub version: u16,
    pub dtype: Dtype,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], voxels: Voxels) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::data(format!("volume extents must be positive, got {dims:?}")));
        }
        if dims.iter().product::<usize>() != voxels.len() {
            return Err(Error::data(format!(
                "volume {dims:?} needs {} voxels, got {}",
                dims.iter().product::<usize>(),
                voxels.len()
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::data(format!("spacing must be positive, got {spacing:?}")));
        }
        Ok(Volume {
            dims,
            spacing: spacing.map(|s| s as f32 as f64),
            voxels,
        })
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn header(&self) -> VolumeHeader {
        VolumeHeader {
            version: VERSION,
            dtype: self.voxels.dtype(),
            dims: self.dims,
            spacing: self.spacing,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.len() * self.voxels.dtype().size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.voxels.dtype().code());
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for s in self.spacing {
            out.extend_from_slice(&(s as f32).to_le_bytes());
        }
        match &self.voxels {
            Voxels::U8(v) => out.extend_from_slice(v),
            Voxels::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let h = parse_header(buf)?;
        let n = h.dims.iter().product::<usize>();
        let need = n * h.dtype.size();
        let payload = &buf[HEADER_LEN..];
        if payload.len() < need {
            return Err(Error::Parse {
                offset: buf.len() as u64,
                message: format!("truncated payload at offset {} (need {need} payload bytes)", buf.len()),
            });
        }
        if payload.len() > need {
            return Err(Error::Parse {
                offset: (HEADER_LEN + need) as u64,
                message: "trailing bytes after payload".into(),
            });
        }
        let voxels = match h.dtype {
            Dtype::U8 => Voxels::U8(payload.to_vec()),
            Dtype::F32 => Voxels::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Volume::new(h.dims, h.spacing, voxels).map_err(|e| Error::Parse {
            offset: 19,
            message: e.to_string(),
        })
    }
}

fn parse_header(buf: &[u8]) -> Result<VolumeHeader> {
    if buf.len() < HEADER_LEN {
        return Err(Error::Parse {
            offset: buf.len() as u64,
            message: format!("truncated header at offset {} (need {HEADER_LEN} bytes)", buf.len()),
        });
    }
    if &buf[..4] != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "bad magic (expected VVOL)".into(),
        });
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != VERSION {
        return Err(Error::Parse {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let dtype = match buf[6] {
        0 => Dtype::U8,
        1 => Dtype::F32,
        c => {
            return Err(Error::Parse {
                offset: 6,
                message: format!("unknown dtype code {c}"),
            })
        }
    };
    let mut dims = [0usize; 3];
    let mut total: u64 = 1;
    for (a, d) in dims.iter_mut().enumerate() {
        let off = 7 + 4 * a;
        let v = u32::from_le_bytes(buf[off..off + 4].try_into().unwrap());
        if v == 0 {
            return Err(Error::Parse {
                offset: off as u64,
                message: "zero extent".into(),
            });
        }
        total = total.saturating_mul(v as u64);
        if total > MAX_VOXELS {
            return Err(Error::Parse {
                offset: off as u64,
                message: format!("dimension overflow: more than {MAX_VOXELS} voxels"),
            });
        }
        *d = v as usize;
    }
    let mut spacing = [0f64; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        let off = 19 + 4 * a;
        let v = f32::from_le_bytes(buf[off..off + 4].try_into().unwrap());
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Parse {
                offset: off as u64,
                message: format!("non-positive spacing {v}"),
            });
        }
        *s = v as f64;
    }
    Ok(VolumeHeader {
        version,
        dtype,
        dims,
        spacing,
    })
}

pub fn save_volume(v: &Volume, path: &Path) -> Result<()> {
    fs::write(path, v.encode()).map_err(|e| Error::io(path, e))
}

pub fn load_volume(path: &Path) -> Result<Volume> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    Volume::decode(&buf)
}

/// Reads only the fixed-size header.
pub fn read_header(path: &Path) -> Result<VolumeHeader> {
    let mut buf = [0u8; HEADER_LEN];
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut got = 0;
    while got < HEADER_LEN {
        match f.read(&mut buf[got..]).map_err(|e| Error::io(path, e))? {
            0 => break,
            n => got += n,
        }
    }
    parse_header(&buf[..got])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_31_bytes() {
        let v = Volume::new([1, 1, 1], [1.0; 3], Voxels::U8(vec![7])).unwrap();
        assert_eq!(v.encode().len(), HEADER_LEN + 1);
    }

    #[test]
    fn header_only_file_reports_offset() {
        let v = Volume::new([2, 2, 2], [1.0; 3], Voxels::U8(vec![1; 8])).unwrap();
        let buf = v.encode();
        let err = Volume::decode(&buf[..HEADER_LEN]).unwrap_err();
        assert!(err.to_string().contains("truncated payload at offset 31"), "{err}");
    }

    #[test]
    fn bad_magic_and_overflow() {
        let v = Volume::new([2, 2, 2], [1.0; 3], Voxels::U8(vec![1; 8])).unwrap();
        let mut buf = v.encode();
        buf[0] = b'X';
        assert!(matches!(Volume::decode(&buf), Err(Error::Parse { offset: 0, .. })));
        let mut buf = v.encode();
        for a in 0..3 {
            buf[7 + 4 * a..11 + 4 * a].copy_from_slice(&u32::MAX.to_le_bytes());
        }
        let err = Volume::decode(&buf).unwrap_err();
        assert!(err.to_string().contains("overflow"), "{err}");
    }

    proptest! {
        #[test]
        fn u8_round_trip(data in proptest::collection::vec(any::<u8>(), 16 * 16 * 16)) {
            let v = Volume::new([16, 16, 16], [0.37, 0.37, 0.7], Voxels::U8(data)).unwrap();
            prop_assert_eq!(Volume::decode(&v.encode()).unwrap(), v);
        }

        #[test]
        fn f32_round_trip(data in proptest::collection::vec(-1e6f32..1e6, 4 * 5 * 6)) {
            let v = Volume::new([4, 5, 6], [1.5, 0.25, 3.0], Voxels::F32(data)).unwrap();
            prop_assert_eq!(Volume::decode(&v.encode()).unwrap(), v);
        }
    }
}
