//! SCLF model files plus a JSON metadata sidecar (`<path>.json`).
//!
//! Little-endian: magic `SCLF`, version u32 = 1, architecture tag u32
//! (0 linear, 1 convnet), input dims 3 x u32, parameter count u64 (32-byte
//! header), then the f32 parameters in the architecture's layer order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Architecture, Classifier, ModelMeta};
use crate::{Error, Result};

pub const SCLF_MAGIC: &[u8; 4] = b"SCLF";
pub const SCLF_HEADER_LEN: usize = 32;
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    arch: Architecture,
    input_dims: [usize; 3],
    #[serde(flatten)]
    meta: ModelMeta,
    #[serde(default)]
    extra: serde_json::Value,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the model and its sidecar. `extra` is stored verbatim (training
/// config, report, ...).
pub fn write_model(model: &Classifier, path: impl AsRef<Path>, extra: serde_json::Value) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))?;
    let sidecar = Sidecar {
        arch: model.arch(),
        input_dims: model.input_dims(),
        meta: model.meta.clone(),
        extra,
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar)?;
    fs::write(&side, text + "\n").map_err(|e| Error::io(side, e))
}

/// Reads a model; the sidecar is optional and only supplies metadata.
pub fn read_model(path: impl AsRef<Path>) -> Result<Classifier> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut model = decode(&bytes).map_err(|e| e.with_path(path))?;
    let side = sidecar_path(path);
    if let Ok(text) = fs::read_to_string(&side) {
        let s: Sidecar = serde_json::from_str(&text)?;
        model.meta = s.meta;
    }
    Ok(model)
}

pub(crate) fn encode(model: &Classifier) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(SCLF_HEADER_LEN + 4 * model.params().len());
    out.extend_from_slice(SCLF_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&model.arch().tag().to_le_bytes());
    for d in model.input_dims() {
        let d = u32::try_from(d).map_err(|_| Error::invalid("input dim exceeds u32"))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&(model.params().len() as u64).to_le_bytes());
    for &p in model.params() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    Ok(out)
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Classifier> {
    if bytes.len() < SCLF_HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated header"));
    }
    if &bytes[0..4] != SCLF_MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}", &bytes[0..4])));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(Error::format(4, format!("unsupported version {}", u32_at(4))));
    }
    let arch = Architecture::from_tag(u32_at(8)).map_err(|e| Error::format(8, e.to_string()))?;
    let dims = [u32_at(12) as usize, u32_at(16) as usize, u32_at(20) as usize];
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::format(12, "zero input dimension"));
    }
    let count = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let expected = arch.param_count(dims) as u64;
    if count != expected {
        return Err(Error::format(
            24,
            format!("parameter count {count} does not match {arch} over {dims:?} ({expected})"),
        ));
    }
    let payload = &bytes[SCLF_HEADER_LEN..];
    if payload.len() as u64 != 4 * count {
        return Err(Error::format(
            bytes.len() as u64,
            format!("payload has {} bytes, expected {}", payload.len(), 4 * count),
        ));
    }
    let params: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if let Some(i) = params.iter().position(|p| !p.is_finite()) {
        return Err(Error::format((SCLF_HEADER_LEN + 4 * i) as u64, "non-finite parameter"));
    }
    Classifier::from_params(arch, dims, params)
}
