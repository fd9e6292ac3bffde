//! SFFD lattice files.
//!
//! Little-endian: magic `SFFD`, version u32 = 1, n_x, n_y, n_z (cells) as u32,
//! H, W, D as u32 (32-byte header), then `(n_x+3)(n_y+3)(n_z+3) * 3` f32
//! offsets with the x point index fastest and the component innermost.
//! The frozen mask is not stored; a decoded lattice has no frozen points.

use std::fs;
use std::path::Path;

use super::FfdLattice;
use crate::{Error, Result};

pub const SFFD_MAGIC: &[u8; 4] = b"SFFD";
pub const SFFD_HEADER_LEN: usize = 32;
const VERSION: u32 = 1;

pub fn write_lattice(lattice: &FfdLattice, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(lattice)?).map_err(|e| Error::io(path, e))
}

pub fn read_lattice(path: impl AsRef<Path>) -> Result<FfdLattice> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| e.with_path(path))
}

pub(crate) fn encode(lattice: &FfdLattice) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(SFFD_HEADER_LEN + 4 * lattice.offsets().len());
    out.extend_from_slice(SFFD_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in lattice.cells().into_iter().chain(lattice.domain_dims()) {
        let v = u32::try_from(v).map_err(|_| Error::invalid("lattice size exceeds u32"))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &x in lattice.offsets() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    Ok(out)
}

pub(crate) fn decode(bytes: &[u8]) -> Result<FfdLattice> {
    if bytes.len() < SFFD_HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated header"));
    }
    if &bytes[0..4] != SFFD_MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}", &bytes[0..4])));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    if u32_at(4) != VERSION as usize {
        return Err(Error::format(4, format!("unsupported version {}", u32_at(4))));
    }
    let cells = [u32_at(8), u32_at(12), u32_at(16)];
    let dims = [u32_at(20), u32_at(24), u32_at(28)];
    let mut lattice = FfdLattice::new(cells, dims).map_err(|e| Error::format(8, e.to_string()))?;
    let expected = 4 * lattice.offsets().len();
    let have = bytes.len() - SFFD_HEADER_LEN;
    if have != expected {
        return Err(Error::format(
            bytes.len().min(SFFD_HEADER_LEN + expected) as u64,
            format!("payload has {have} bytes, expected {expected}"),
        ));
    }
    let values: Vec<f64> = bytes[SFFD_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::format((SFFD_HEADER_LEN + 4 * i) as u64, "non-finite offset"));
    }
    lattice.set_offsets(&values)?;
    Ok(lattice)
}
