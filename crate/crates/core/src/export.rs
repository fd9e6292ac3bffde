//! Axis-aligned slice export as binary 8-bit PGM (P5).
//!
//! A slice normal to `axis` spans the two remaining axes in increasing order:
//! the lower one runs along image columns, the higher one along rows.
//! Values map to `floor(v * 255 + 0.5)`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::volume::Volume;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slice {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Slice {
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn slice(v: &Volume, axis: usize, index: usize) -> Result<Slice> {
    if axis > 2 {
        return Err(Error::invalid(format!("axis must be 0, 1 or 2, got {axis}")));
    }
    let dims = v.dims();
    if index >= dims[axis] {
        return Err(Error::invalid(format!(
            "slice {index} out of range for axis {axis} of length {}",
            dims[axis]
        )));
    }
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut pixels = Vec::with_capacity(dims[a] * dims[b]);
    for r in 0..dims[b] {
        for c in 0..dims[a] {
            let mut p = [0; 3];
            p[axis] = index;
            p[a] = c;
            p[b] = r;
            pixels.push(to_byte(v.get(p[0], p[1], p[2])));
        }
    }
    Ok(Slice {
        width: dims[a],
        height: dims[b],
        pixels,
    })
}

/// Writes the mid-plane slice along `axis` and, with `every = Some(k)`, every
/// k-th slice as well. Files are named `<stem>_axis<a>_<index>.pgm`.
pub fn export_slices(
    v: &Volume,
    axis: usize,
    every: Option<usize>,
    out_dir: impl AsRef<Path>,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    if axis > 2 {
        return Err(Error::invalid(format!("axis must be 0, 1 or 2, got {axis}")));
    }
    if every == Some(0) {
        return Err(Error::invalid("slice step must be >= 1"));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let n = v.dims()[axis];
    let mut indices = vec![(n - 1) / 2];
    if let Some(k) = every {
        indices.extend((0..n).step_by(k));
        indices.sort_unstable();
        indices.dedup();
    }
    let mut written = Vec::with_capacity(indices.len());
    for i in indices {
        let path = out_dir.join(format!("{stem}_axis{axis}_{i:03}.pgm"));
        fs::write(&path, slice(v, axis, i)?.to_pgm()).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
