//! Training-time augmentation: random mirroring, a random affine resample
//! about the volume center, and random patch masking.

use rand::Rng;

use super::TrainConfig;
use crate::volume::{LabeledSample, Volume};
use crate::{Error, Result};

fn rotation(deg: [f64; 3]) -> [[f64; 3]; 3] {
    let [a, b, c] = deg.map(f64::to_radians);
    let rx = [[1.0, 0.0, 0.0], [0.0, a.cos(), -a.sin()], [0.0, a.sin(), a.cos()]];
    let ry = [[b.cos(), 0.0, b.sin()], [0.0, 1.0, 0.0], [-b.sin(), 0.0, b.cos()]];
    let rz = [[c.cos(), -c.sin(), 0.0], [c.sin(), c.cos(), 0.0], [0.0, 0.0, 1.0]];
    matmul(rz, matmul(ry, rx))
}

fn matmul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

/// Resamples `v` under `x' = s R (x - c) + c + t` (output voxel `x'` reads the
/// input at the inverse image).
pub(crate) fn affine_resample(v: &Volume, scale: f64, rot_deg: [f64; 3], shift: [f64; 3]) -> Volume {
    let dims = v.dims();
    let c: [f64; 3] = std::array::from_fn(|a| (dims[a] - 1) as f64 / 2.0);
    let r = rotation(rot_deg);
    let inv_s = 1.0 / scale;
    Volume::from_fn(dims, |i, j, k| {
        let y = [
            i as f64 - c[0] - shift[0],
            j as f64 - c[1] - shift[1],
            k as f64 - c[2] - shift[2],
        ];
        // R^T y / s + c
        let p: [f64; 3] =
            std::array::from_fn(|a| (r[0][a] * y[0] + r[1][a] * y[1] + r[2][a] * y[2]) * inv_s + c[a]);
        v.sample(p)
    })
}

/// Random mirror (probability `flip_prob`) followed by a random affine warp
/// (probability `affine_prob`). The label is unchanged.
pub fn augment(sample: &LabeledSample, cfg: &TrainConfig, rng: &mut impl Rng) -> LabeledSample {
    let mut v = if cfg.flip_prob > 0.0 && rng.gen::<f64>() < cfg.flip_prob {
        sample.volume.flip_midsagittal()
    } else {
        sample.volume.clone()
    };
    if cfg.affine_prob > 0.0 && rng.gen::<f64>() < cfg.affine_prob {
        let dims = v.dims();
        let (lo, hi) = cfg.scale_range;
        let scale = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let rot = std::array::from_fn(|_| uniform_sym(rng, cfg.rotation_deg));
        let shift = std::array::from_fn(|a| uniform_sym(rng, cfg.translation_for(dims[a])));
        if scale != 1.0 || rot != [0.0; 3] || shift != [0.0; 3] {
            v = affine_resample(&v, scale, rot, shift);
        }
    }
    LabeledSample {
        volume: v,
        label: sample.label,
    }
}

fn uniform_sym(rng: &mut impl Rng, r: f64) -> f64 {
    if r > 0.0 {
        rng.gen_range(-r..=r)
    } else {
        0.0
    }
}

/// Tiles the grid into patches (edge patches may be partial) and zeroes each
/// one independently with probability `cfg.mask_prob`.
pub fn mask_patches(v: &Volume, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Volume> {
    let dims = v.dims();
    let patch = cfg.patch_for(dims);
    if patch.iter().any(|&p| p == 0) {
        return Err(Error::invalid(format!("mask patch dims must be positive, got {patch:?}")));
    }
    if cfg.mask_prob <= 0.0 {
        return Ok(v.clone());
    }
    let grid: [usize; 3] = std::array::from_fn(|a| dims[a].div_ceil(patch[a]));
    let masked: Vec<bool> = (0..grid[0] * grid[1] * grid[2])
        .map(|_| rng.gen::<f64>() < cfg.mask_prob)
        .collect();
    let mut data = v.data().to_vec();
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let p = i / patch[0] + grid[0] * (j / patch[1] + grid[1] * (k / patch[2]));
                if masked[p] {
                    data[v.index(i, j, k)] = 0.0;
                }
            }
        }
    }
    Ok(Volume::from_raw(dims, data))
}
