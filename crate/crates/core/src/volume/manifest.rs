//! Dataset manifests: UTF-8 text, one `<relative_path>\t<label 0|1>` per line.
//! Paths are relative to the directory holding the manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{read_volume, Label, Volume};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub volume: Volume,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    /// Directory the entry paths are relative to.
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.path)
    }

    pub fn load_samples(&self) -> Result<Vec<LabeledSample>> {
        self.entries
            .iter()
            .map(|e| {
                Ok(LabeledSample {
                    volume: read_volume(self.resolve(e))?,
                    label: e.label,
                })
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(s, "{}\t{}", e.path.display(), e.label.as_u8());
        }
        s
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (path, label) = line.split_once('\t').ok_or_else(|| {
                Error::invalid(format!("manifest line {}: expected `<path>\\t<label>`", lineno + 1))
            })?;
            let label = match label.trim() {
                "0" => Label::Male,
                "1" => Label::Female,
                other => {
                    return Err(Error::invalid(format!(
                        "manifest line {}: label must be 0 or 1, got {other:?}",
                        lineno + 1
                    )))
                }
            };
            entries.push(ManifestEntry {
                path: PathBuf::from(path),
                label,
            });
        }
        Ok(Self {
            base_dir: base_dir.into(),
            entries,
        })
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Manifest::parse(&text, base)
}

pub fn write_manifest(m: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, m.to_text()).map_err(|e| Error::io(path, e))
}
