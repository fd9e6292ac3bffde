//! SVOL volume files.
//!
//! Little-endian layout:
//!
//! | offset | size | field                              |
//! |--------|------|------------------------------------|
//! | 0      | 4    | magic `SVOL`                       |
//! | 4      | 4    | version, u32 = 1                   |
//! | 8      | 12   | H, W, D as u32                     |
//! | 20     | 4    | dtype, u32 (0 = f32, 1 = f64)      |
//! | 24     | 24   | reserved, zero                     |
//! | 48     | ...  | H*W*D samples, x fastest           |
//!
//! Volumes are held as f64 in memory. The default dtype is f32, so writing
//! rounds each value to the nearest f32; `Dtype::F64` is lossless.

use std::fs;
use std::path::Path;

use super::{Dims, Volume};
use crate::{Error, Result};

pub const SVOL_MAGIC: &[u8; 4] = b"SVOL";
pub const SVOL_HEADER_LEN: usize = 48;
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u32 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

pub fn write_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    write_volume_as(v, path, Dtype::F32)
}

pub fn write_volume_as(v: &Volume, path: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(v, dtype)?).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| e.with_path(path))
}

pub(crate) fn encode(v: &Volume, dtype: Dtype) -> Result<Vec<u8>> {
    let dims = v.dims();
    let mut out = Vec::with_capacity(SVOL_HEADER_LEN + v.len() * dtype.width());
    out.extend_from_slice(SVOL_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::invalid("volume dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&dtype.code().to_le_bytes());
    out.extend_from_slice(&[0u8; 24]);
    match dtype {
        Dtype::F32 => {
            for &x in v.data() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &x in v.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < SVOL_HEADER_LEN {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated header: {} of {SVOL_HEADER_LEN} bytes", bytes.len()),
        ));
    }
    if &bytes[0..4] != SVOL_MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}", &bytes[0..4])));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let dims: Dims = [u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize];
    if let Some(a) = dims.iter().position(|&d| d == 0) {
        return Err(Error::format(8 + 4 * a as u64, "zero dimension"));
    }
    let dtype = match u32_at(20) {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => return Err(Error::format(20, format!("unknown dtype {other}"))),
    };
    let count = dims[0]
        .checked_mul(dims[1])
        .and_then(|n| n.checked_mul(dims[2]))
        .ok_or_else(|| Error::format(8, format!("dims {dims:?} overflow")))?;
    let payload = count
        .checked_mul(dtype.width())
        .ok_or_else(|| Error::format(8, format!("dims {dims:?} overflow")))?;
    let have = bytes.len() - SVOL_HEADER_LEN;
    if have < payload {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: expected {payload} bytes, found {have}"),
        ));
    }
    if have > payload {
        return Err(Error::format(
            (SVOL_HEADER_LEN + payload) as u64,
            format!("{} trailing bytes", have - payload),
        ));
    }
    let body = &bytes[SVOL_HEADER_LEN..];
    let data: Vec<f64> = match dtype {
        Dtype::F32 => body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::format(
            (SVOL_HEADER_LEN + i * dtype.width()) as u64,
            format!("voxel {i} has value {} outside [0, 1]", data[i]),
        ));
    }
    Ok(Volume::from_raw(dims, data))
}
