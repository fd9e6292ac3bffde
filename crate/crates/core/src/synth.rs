//! Synthetic labeled "skulloid" volumes.
//!
//! A hollow ellipsoidal shell stands in for the cranium. Class-dependent
//! protrusions sit on its anterior face: a brow ridge (anterior-superior), a
//! chin (anterior-inferior) and a pair of lateral jaw flares. Nuisance scale,
//! pose and a mild seeded thickness modulation vary within both classes.
//!
//! Axes: 0 left-right, 1 inferior-superior, 2 posterior-anterior.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::volume::{write_manifest, write_volume, Label, Manifest, ManifestEntry, Volume};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkulloidParams {
    /// Grid size; the volume is `dim^3`.
    pub dim: usize,
    /// Ellipsoid semi-axes as fractions of `dim`.
    pub semi_axes: [f64; 3],
    /// Shell thickness in voxels.
    pub thickness: f64,
    /// Brow-ridge amplitude in voxels.
    pub brow: f64,
    /// Chin amplitude in voxels.
    pub chin: f64,
    /// Lateral jaw-flare amplitude in voxels.
    pub jaw: f64,
    pub scale: f64,
    /// Center offset in voxels.
    pub jitter: [f64; 3],
    /// Pitch about axis 0, degrees.
    pub rotation_deg: f64,
    /// 3-wide box-filter passes.
    pub smoothing: usize,
    pub seed: u64,
}

impl Default for SkulloidParams {
    fn default() -> Self {
        Self {
            dim: 48,
            semi_axes: [0.30, 0.34, 0.38],
            thickness: 3.0,
            brow: 0.0,
            chin: 0.0,
            jaw: 0.0,
            scale: 1.0,
            jitter: [0.0; 3],
            rotation_deg: 0.0,
            smoothing: 1,
            seed: 0,
        }
    }
}

impl SkulloidParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dim < 16 {
            return bad(format!("dim must be >= 16, got {}", self.dim));
        }
        if self.semi_axes.iter().any(|&a| !(a > 0.0 && a <= 0.5)) {
            return bad(format!("semi-axes must lie in (0, 0.5], got {:?}", self.semi_axes));
        }
        for (name, v) in [("thickness", self.thickness), ("brow", self.brow), ("chin", self.chin), ("jaw", self.jaw)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return bad(format!("scale must be > 0, got {}", self.scale));
        }
        if self.jitter.iter().chain([&self.rotation_deg]).any(|v| !v.is_finite()) {
            return bad("jitter and rotation must be finite".into());
        }
        Ok(())
    }
}

fn gauss(d: f64, sigma: f64) -> f64 {
    (-(d / sigma) * (d / sigma)).exp()
}

pub fn generate_skulloid(p: &SkulloidParams) -> Result<Volume> {
    p.validate()?;
    let n = p.dim;
    let mut rng = stream(p.seed, &[0x5C]);
    let phase: [f64; 2] = [rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU)];
    let freq: [f64; 2] = [rng.gen_range(2.0..4.0), rng.gen_range(2.0..4.0)];

    let c = (n - 1) as f64 / 2.0;
    let center = [c + p.jitter[0], c + p.jitter[1], c + p.jitter[2]];
    let axes = p.semi_axes.map(|a| a * n as f64 * p.scale);
    let (sin, cos) = p.rotation_deg.to_radians().sin_cos();

    let mut data = vec![0.0; n * n * n];
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let px = (i as f64 - center[0]).abs();
                let py0 = j as f64 - center[1];
                let pz0 = k as f64 - center[2];
                let py = cos * py0 - sin * pz0;
                let pz = sin * py0 + cos * pz0;
                let q = [px / axes[0], py / axes[1], pz / axes[2]];
                let r = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
                let len = (px * px + py * py + pz * pz).sqrt();
                // Radial distance to the outer surface, exact for a sphere.
                let d = if r > 0.0 { (r - 1.0) * len / r } else { -axes[2] };
                let u = if len > 0.0 { [px / len, py / len, pz / len] } else { [0.0, 0.0, 1.0] };
                let elev = u[1].asin();
                let azim = u[0].atan2(u[2]);
                let bump = p.brow * gauss(azim, 0.75) * gauss(elev - 0.42, 0.22)
                    + p.chin * gauss(azim, 0.45) * gauss(elev + 0.58, 0.22)
                    + p.jaw * gauss(azim - 1.0, 0.3) * gauss(elev + 0.4, 0.2);
                let t = p.thickness
                    * (1.0 + 0.15 * (freq[0] * elev + phase[0]).sin() * (freq[1] * u[2] + phase[1]).cos());
                let outer = (bump - d + 0.5).clamp(0.0, 1.0);
                let inner = (d + t + 0.5).clamp(0.0, 1.0);
                data[i + n * (j + n * k)] = outer.min(inner);
            }
        }
    }
    for _ in 0..p.smoothing {
        for axis in 0..3 {
            box_filter(&mut data, n, axis);
        }
    }
    Ok(Volume::from_fn([n, n, n], |i, j, k| data[i + n * (j + n * k)]))
}

/// In-place 3-wide mean along `axis`, zero outside. The neighbors are summed
/// first so mirrored inputs give mirrored outputs bit-exactly.
fn box_filter(data: &mut [f64], n: usize, axis: usize) {
    let stride = [1, n, n * n][axis];
    let src = data.to_vec();
    for (idx, out) in data.iter_mut().enumerate() {
        let pos = (idx / stride) % n;
        let lo = if pos > 0 { src[idx - stride] } else { 0.0 };
        let hi = if pos + 1 < n { src[idx + stride] } else { 0.0 };
        *out = ((lo + hi) + src[idx]) / 3.0;
    }
}

/// Dataset generation settings. Amplitude ranges are in voxels at `dim = 48`
/// and scale linearly with `dim / 48`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub count: usize,
    pub dim: usize,
    /// Class proportions `[male, female]`.
    pub proportions: [f64; 2],
    pub brow: [[f64; 2]; 2],
    pub chin: [[f64; 2]; 2],
    pub jaw: [[f64; 2]; 2],
    pub thickness: [f64; 2],
    pub scale: [f64; 2],
    pub jitter: f64,
    pub rotation_deg: f64,
    pub smoothing: usize,
    /// `[train, val, test]`.
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            count: 444,
            dim: 48,
            proportions: [152.0 / 444.0, 292.0 / 444.0],
            brow: [[1.8, 3.0], [0.0, 0.8]],
            chin: [[1.5, 2.5], [0.0, 0.8]],
            jaw: [[0.8, 1.6], [0.2, 1.0]],
            thickness: [2.5, 3.5],
            scale: [0.93, 1.07],
            jitter: 1.5,
            rotation_deg: 4.0,
            smoothing: 1,
            split: [0.70, 0.15, 0.15],
            seed: 7,
        }
    }
}

impl DatasetSpec {
    pub fn balanced(mut self) -> Self {
        self.proportions = [0.5, 0.5];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.count == 0 {
            return bad("count must be > 0".into());
        }
        if self.dim < 16 {
            return bad(format!("dim must be >= 16, got {}", self.dim));
        }
        let sum = |v: &[f64]| v.iter().sum::<f64>();
        if self.proportions.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum(&self.proportions) - 1.0).abs() > 1e-9 {
            return bad(format!("proportions must be in [0, 1] and sum to 1, got {:?}", self.proportions));
        }
        if self.split.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum(&self.split) - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions must be in [0, 1] and sum to 1, got {:?}", self.split));
        }
        let ranges = self.brow.iter().chain(&self.chin).chain(&self.jaw).chain([&self.thickness, &self.scale]);
        for r in ranges {
            if !(r[0].is_finite() && r[1].is_finite() && 0.0 <= r[0] && r[0] <= r[1]) {
                return bad(format!("invalid range {r:?}"));
            }
        }
        if self.scale[0] <= 0.0 {
            return bad("scale must be > 0".into());
        }
        if !(self.jitter >= 0.0 && self.rotation_deg >= 0.0) {
            return bad("jitter and rotation must be >= 0".into());
        }
        Ok(())
    }

    /// Exact class quotas, `[male, female]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let male = ((self.count as f64 * self.proportions[0]).round() as usize).min(self.count);
        [male, self.count - male]
    }

    /// Labels in sample order: the quota, shuffled by the seed.
    pub fn labels(&self) -> Vec<Label> {
        let [m, f] = self.class_counts();
        let mut labels: Vec<Label> = std::iter::repeat(Label::Male).take(m).chain(std::iter::repeat(Label::Female).take(f)).collect();
        shuffle(&mut labels, &mut stream(self.seed, &[0x1A]));
        labels
    }

    /// Parameters of sample `index` with class `label`.
    pub fn sample_params(&self, index: usize, label: Label) -> SkulloidParams {
        let mut rng = stream(self.seed, &[0x5A, index as u64]);
        let s = self.dim as f64 / 48.0;
        let c = label.as_u8() as usize;
        let mut draw = |r: [f64; 2]| if r[0] < r[1] { rng.gen_range(r[0]..r[1]) } else { r[0] };
        let brow = s * draw(self.brow[c]);
        let chin = s * draw(self.chin[c]);
        let jaw = s * draw(self.jaw[c]);
        let thickness = s * draw(self.thickness);
        let scale = draw(self.scale);
        let j = s * self.jitter;
        let jitter = [draw([-j, j]), draw([-j, j]), draw([-j, j])];
        let rotation_deg = draw([-self.rotation_deg, self.rotation_deg]);
        SkulloidParams {
            dim: self.dim,
            thickness,
            brow,
            chin,
            jaw,
            scale,
            jitter,
            rotation_deg,
            smoothing: self.smoothing,
            seed: rng.gen(),
            ..SkulloidParams::default()
        }
    }

    /// Sample indices per split, stratified by class.
    pub fn splits(&self, labels: &[Label]) -> [Vec<usize>; 3] {
        let mut out: [Vec<usize>; 3] = Default::default();
        for (c, label) in [Label::Male, Label::Female].into_iter().enumerate() {
            let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
            shuffle(&mut idx, &mut stream(self.seed, &[0x5B, c as u64]));
            let n = idx.len() as f64;
            let train = ((n * self.split[0]).round() as usize).min(idx.len());
            let val = ((n * self.split[1]).round() as usize).min(idx.len() - train);
            out[0].extend_from_slice(&idx[..train]);
            out[1].extend_from_slice(&idx[train..train + val]);
            out[2].extend_from_slice(&idx[train + val..]);
        }
        for s in &mut out {
            s.sort_unstable();
        }
        out
    }
}

fn shuffle<T>(v: &mut [T], rng: &mut impl Rng) {
    for i in (1..v.len()).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
}

pub const SPLIT_FILES: [&str; 3] = ["train.txt", "val.txt", "test.txt"];

/// Writes `sample_NNNN.svol` files, `manifest.txt` and the three split
/// manifests into `out`, returning the full manifest.
pub fn generate_dataset(spec: &DatasetSpec, out: impl AsRef<Path>) -> Result<Manifest> {
    spec.validate()?;
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let labels = spec.labels();
    let width = spec.count.saturating_sub(1).to_string().len().max(4);
    let entries: Vec<ManifestEntry> = labels
        .par_iter()
        .enumerate()
        .map(|(i, &label)| {
            let v = generate_skulloid(&spec.sample_params(i, label))?;
            let name = PathBuf::from(format!("sample_{i:0width$}.svol"));
            write_volume(&v, out.join(&name))?;
            Ok(ManifestEntry { path: name, label })
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        base_dir: out.to_path_buf(),
        entries,
    };
    write_manifest(&manifest, out.join("manifest.txt"))?;
    for (idx, file) in spec.splits(&labels).iter().zip(SPLIT_FILES) {
        let part = Manifest {
            base_dir: out.to_path_buf(),
            entries: idx.iter().map(|&i| manifest.entries[i].clone()).collect(),
        };
        write_manifest(&part, out.join(file))?;
    }
    let text = serde_json::to_string_pretty(spec)?;
    let spec_path = out.join("dataset.json");
    fs::write(&spec_path, text + "\n").map_err(|e| Error::io(spec_path, e))?;
    Ok(manifest)
}
