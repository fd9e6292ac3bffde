//! Dense 3D occupancy volumes.
//!
//! Axis convention: axis 0 is left-right (the mirror axis), axis 1 is
//! inferior-superior and axis 2 runs posterior to anterior. Voxels have unit
//! spacing and data is stored x-fastest: `index = i + H * (j + W * k)`.

mod io;
mod manifest;

pub use io::{read_volume, write_volume, write_volume_as, Dtype, SVOL_HEADER_LEN, SVOL_MAGIC};
pub use manifest::{read_manifest, write_manifest, LabeledSample, Manifest, ManifestEntry};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Binary class label. `Female` (1) corresponds to a positive logit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Male = 0,
    Female = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Male),
            1 => Ok(Label::Female),
            _ => Err(Error::invalid(format!("label must be 0 or 1, got {v}"))),
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn opposite(self) -> Self {
        match self {
            Label::Male => Label::Female,
            Label::Female => Label::Male,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Male => "male",
            Label::Female => "female",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "male" | "0" => Ok(Label::Male),
            "female" | "1" => Ok(Label::Female),
            _ => Err(Error::invalid(format!("unknown label {s:?}"))),
        }
    }
}

pub type Dims = [usize; 3];

/// Exact at both ends: `t = 0` gives `a`, `t = 1` gives `b`.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (1.0 - t) * a + t * b
}

pub(crate) fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    data: Vec<f64>,
}

impl Volume {
    /// Builds a volume, checking length, finiteness and the `[0, 1]` occupancy range.
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("volume dims must be positive, got {dims:?}")));
        }
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|x| x.checked_mul(dims[2]))
            .ok_or_else(|| Error::invalid("volume dims overflow"))?;
        if data.len() != n {
            return Err(Error::invalid(format!(
                "data length {} does not match dims {dims:?} ({n} voxels)",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "voxel {i} has value {} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "volume dims must be positive");
        Self {
            dims,
            data: vec![0.0; voxel_count(dims)],
        }
    }

    /// Constructs from a function of voxel coordinates. Values are clamped to `[0, 1]`.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut v = Self::zeros(dims);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let idx = v.index(i, j, k);
                    v.data[idx] = f(i, j, k).clamp(0.0, 1.0);
                }
            }
        }
        v
    }

    /// Crate-internal constructor for data already known to satisfy the invariants.
    pub(crate) fn from_raw(dims: Dims, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), voxel_count(dims));
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    /// Sets a voxel; the value is clamped to `[0, 1]`.
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let idx = self.index(i, j, k);
        self.data[idx] = value.clamp(0.0, 1.0);
    }

    /// Trilinear interpolation at a continuous coordinate. Points outside
    /// `[0, H-1] x [0, W-1] x [0, D-1]` sample the background value 0.
    pub fn trilinear_sample(&self, p: [f64; 3]) -> Result<f64> {
        check_finite(p)?;
        Ok(self.sample(p))
    }

    /// Exact gradient of the trilinear interpolant. Zero outside the domain.
    ///
    /// The interpolant is piecewise linear per axis. On an interior grid node
    /// along an axis the two one-sided slopes are averaged, which is the
    /// central difference of the neighbouring samples; on the domain faces
    /// the last cell is used.
    pub fn trilinear_grad(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        check_finite(p)?;
        Ok(self.sample_with_grad(p).1)
    }

    #[inline]
    pub(crate) fn sample(&self, p: [f64; 3]) -> f64 {
        match self.cell(p) {
            None => 0.0,
            Some(c) => {
                let [tx, ty, tz] = c.t;
                let v = c.corners(self);
                let c00 = lerp(v[0], v[1], tx);
                let c10 = lerp(v[2], v[3], tx);
                let c01 = lerp(v[4], v[5], tx);
                let c11 = lerp(v[6], v[7], tx);
                let c0 = lerp(c00, c10, ty);
                let c1 = lerp(c01, c11, ty);
                lerp(c0, c1, tz)
            }
        }
    }

    /// Value and gradient of the interpolant at `p` in one pass.
    #[inline]
    pub(crate) fn sample_with_grad(&self, p: [f64; 3]) -> (f64, [f64; 3]) {
        match self.cell(p) {
            None => (0.0, [0.0; 3]),
            Some(c) => {
                let [tx, ty, tz] = c.t;
                let v = c.corners(self);
                let c00 = lerp(v[0], v[1], tx);
                let c10 = lerp(v[2], v[3], tx);
                let c01 = lerp(v[4], v[5], tx);
                let c11 = lerp(v[6], v[7], tx);
                let c0 = lerp(c00, c10, ty);
                let c1 = lerp(c01, c11, ty);
                let value = lerp(c0, c1, tz);

                let dz = c1 - c0;
                let dy = (1.0 - tz) * (c10 - c00) + tz * (c11 - c01);
                let ex00 = v[1] - v[0];
                let ex10 = v[3] - v[2];
                let ex01 = v[5] - v[4];
                let ex11 = v[7] - v[6];
                let dx = (1.0 - tz) * ((1.0 - ty) * ex00 + ty * ex10)
                    + tz * ((1.0 - ty) * ex01 + ty * ex11);
                // Axes of extent 1 have no slope.
                let mut g = [
                    if c.flat[0] { 0.0 } else { dx },
                    if c.flat[1] { 0.0 } else { dy },
                    if c.flat[2] { 0.0 } else { dz },
                ];
                for a in 0..3 {
                    if c.t[a] == 0.0 && c.base[a] > 0 && !c.flat[a] {
                        let mut lo = p;
                        lo[a] -= 1.0;
                        g[a] = 0.5 * (g[a] + (value - self.sample(lo)));
                    }
                }
                (value, g)
            }
        }
    }

    #[inline]
    fn cell(&self, p: [f64; 3]) -> Option<Cell> {
        let mut base = [0usize; 3];
        let mut next = [0usize; 3];
        let mut t = [0.0; 3];
        let mut flat = [false; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let x = p[a];
            let max = (n - 1) as f64;
            if !(x >= 0.0 && x <= max) {
                return None;
            }
            if n == 1 {
                flat[a] = true;
                continue;
            }
            let mut i = x.floor() as usize;
            if i >= n - 1 {
                i = n - 2;
            }
            base[a] = i;
            next[a] = i + 1;
            t[a] = x - i as f64;
        }
        Some(Cell {
            base,
            next,
            t,
            flat,
        })
    }

    /// Mirror across the midsagittal plane: voxel `(i, j, k)` moves to `(H-1-i, j, k)`.
    pub fn flip_midsagittal(&self) -> Volume {
        Volume::from_raw(self.dims, flip_x(&self.data, self.dims))
    }

    /// Voxel-wise `|self - other|`.
    pub fn abs_diff(&self, other: &Volume) -> Result<Volume> {
        if self.dims != other.dims {
            return Err(Error::invalid(format!(
                "dims mismatch: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .collect();
        Ok(Volume::from_raw(self.dims, data))
    }
}

struct Cell {
    base: [usize; 3],
    next: [usize; 3],
    t: [f64; 3],
    flat: [bool; 3],
}

impl Cell {
    /// Corner values ordered with x fastest: (x0y0z0, x1y0z0, x0y1z0, ...).
    #[inline]
    fn corners(&self, v: &Volume) -> [f64; 8] {
        let [i0, j0, k0] = self.base;
        let [i1, j1, k1] = self.next;
        [
            v.get(i0, j0, k0),
            v.get(i1, j0, k0),
            v.get(i0, j1, k0),
            v.get(i1, j1, k0),
            v.get(i0, j0, k1),
            v.get(i1, j0, k1),
            v.get(i0, j1, k1),
            v.get(i1, j1, k1),
        ]
    }
}

fn check_finite(p: [f64; 3]) -> Result<()> {
    if p.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("non-finite sample coordinate {p:?}")))
    }
}

/// Mirrors any x-fastest scalar grid along axis 0. Used for volumes and for
/// gradients living on the voxel grid.
pub(crate) fn flip_x(data: &[f64], dims: Dims) -> Vec<f64> {
    let h = dims[0];
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks_exact(h) {
        out.extend(row.iter().rev());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp() -> Volume {
        Volume::from_fn([4, 5, 6], |i, j, k| (i + 2 * j + 3 * k) as f64 / 30.0)
    }

    #[test]
    fn sample_reproduces_grid_nodes() {
        let mut v = Volume::zeros([5, 5, 5]);
        v.set(2, 3, 4, 0.7);
        assert_eq!(v.trilinear_sample([2.0, 3.0, 4.0]).unwrap(), 0.7);
    }

    #[test]
    fn sample_midpoint_and_background() {
        let mut v = Volume::zeros([2, 1, 1]);
        v.set(1, 0, 0, 1.0);
        assert_eq!(v.trilinear_sample([0.5, 0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(v.trilinear_sample([-5.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(v.trilinear_sample([1.0 + 1e-12, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_coordinates_are_rejected() {
        let v = Volume::zeros([2, 2, 2]);
        assert!(v.trilinear_sample([f64::NAN, 0.0, 0.0]).is_err());
        assert!(v.trilinear_grad([0.0, f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn gradient_of_constant_and_ramp() {
        let v = Volume::from_fn([4, 4, 4], |_, _, _| 0.3);
        assert_eq!(v.trilinear_grad([1.3, 2.2, 0.7]).unwrap(), [0.0; 3]);

        let mut r = Volume::zeros([2, 2, 2]);
        r.set(1, 0, 0, 1.0);
        let g = r.trilinear_grad([0.5, 0.0, 0.0]).unwrap();
        assert_eq!(g[0], 1.0);
        assert_eq!(r.trilinear_grad([3.0, 0.0, 0.0]).unwrap(), [0.0; 3]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let v = Volume::from_fn([6, 6, 6], |i, j, k| {
            (((i * 7 + j * 13 + k * 29) % 17) as f64) / 16.0
        });
        let eps = 1e-4;
        for p in [[1.3, 2.6, 3.2], [0.4, 4.7, 1.1], [4.2, 0.3, 4.9]] {
            let g = v.trilinear_grad(p).unwrap();
            for a in 0..3 {
                let mut hi = p;
                let mut lo = p;
                hi[a] += eps;
                lo[a] -= eps;
                let fd = (v.sample(hi) - v.sample(lo)) / (2.0 * eps);
                assert!((fd - g[a]).abs() < 1e-5, "axis {a}: {fd} vs {}", g[a]);
            }
        }
    }

    #[test]
    fn flip_two_slices_swaps_them() {
        let v = Volume::new([2, 1, 1], vec![0.25, 0.75]).unwrap();
        assert_eq!(v.flip_midsagittal().data(), &[0.75, 0.25]);
    }

    #[test]
    fn flip_fixes_symmetric_volumes() {
        let v = Volume::from_fn([5, 3, 2], |i, j, k| {
            let d = (i as f64 - 2.0).abs();
            (d + j as f64 + k as f64) / 10.0
        });
        assert_eq!(v.flip_midsagittal(), v);
    }

    #[test]
    fn constructor_validates() {
        assert!(Volume::new([2, 2, 2], vec![0.0; 7]).is_err());
        assert!(Volume::new([2, 2, 0], vec![]).is_err());
        assert!(Volume::new([1, 1, 2], vec![0.0, 1.5]).is_err());
        assert!(Volume::new([1, 1, 2], vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn interior_nodes_average_both_sides() {
        let v = Volume::new([4, 1, 1], vec![0.0, 0.2, 1.0, 0.4]).unwrap();
        assert_eq!(v.trilinear_grad([1.0, 0.0, 0.0]).unwrap()[0], 0.5);
        assert!((v.trilinear_grad([2.0, 0.0, 0.0]).unwrap()[0] - 0.1).abs() < 1e-15);
        assert_eq!(v.trilinear_grad([0.0, 0.0, 0.0]).unwrap()[0], 0.2);
        assert_eq!(v.trilinear_grad([1.5, 0.0, 0.0]).unwrap()[0], 0.8);
    }

    #[test]
    fn node_gradient_matches_central_differences_across_the_kink() {
        let v = Volume::from_fn([6, 6, 6], |i, j, k| {
            (((i * 7 + j * 13 + k * 29) % 17) as f64) / 16.0
        });
        let eps = 1e-3;
        for p in [[2.0, 2.6, 3.2], [1.4, 3.0, 1.1], [4.2, 0.3, 4.0], [2.0, 3.0, 4.0]] {
            let g = v.trilinear_grad(p).unwrap();
            for a in 0..3 {
                let mut hi = p;
                let mut lo = p;
                hi[a] += eps;
                lo[a] -= eps;
                let fd = (v.sample(hi) - v.sample(lo)) / (2.0 * eps);
                assert!((fd - g[a]).abs() < 1e-12, "axis {a}: {fd} vs {}", g[a]);
            }
        }
    }

    #[test]
    fn last_face_uses_last_cell() {
        let v = ramp();
        let g = v.trilinear_grad([3.0, 4.0, 5.0]).unwrap();
        assert!((g[0] - 1.0 / 30.0).abs() < 1e-12);
        assert!((g[1] - 2.0 / 30.0).abs() < 1e-12);
        assert!((g[2] - 3.0 / 30.0).abs() < 1e-12);
    }

    fn arb_volume() -> impl Strategy<Value = Volume> {
        (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(h, w, d)| {
            prop::collection::vec(0.0f64..=1.0, h * w * d)
                .prop_map(move |data| Volume::new([h, w, d], data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn flip_is_an_involution_preserving_values(v in arb_volume()) {
            let f = v.flip_midsagittal();
            prop_assert_eq!(&f.flip_midsagittal(), &v);
            let mut a = v.data().to_vec();
            let mut b = f.data().to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn integer_coordinates_sample_exactly(v in arb_volume(), s in any::<u64>()) {
            let [h, w, d] = v.dims();
            let i = (s as usize) % h;
            let j = (s as usize / 7) % w;
            let k = (s as usize / 49) % d;
            prop_assert_eq!(v.sample([i as f64, j as f64, k as f64]), v.get(i, j, k));
        }

        #[test]
        fn sampling_is_lipschitz(
            v in arb_volume(),
            u in prop::array::uniform3(0.0f64..1.0),
            dir in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let dims = v.dims();
            let p: Vec<f64> = (0..3).map(|a| u[a] * (dims[a] - 1) as f64).collect();
            let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt().max(1e-12);
            let q: Vec<f64> = (0..3).map(|a| p[a] + 1e-6 * dir[a] / norm).collect();
            // Stay inside the domain so the background jump is excluded.
            prop_assume!((0..3).all(|a| q[a] >= 0.0 && q[a] <= (dims[a] - 1) as f64));
            let mut lip = 0.0f64;
            for k in 0..dims[2] { for j in 0..dims[1] { for i in 0..dims[0] {
                let x = v.get(i, j, k);
                if i + 1 < dims[0] { lip = lip.max((x - v.get(i + 1, j, k)).abs()); }
                if j + 1 < dims[1] { lip = lip.max((x - v.get(i, j + 1, k)).abs()); }
                if k + 1 < dims[2] { lip = lip.max((x - v.get(i, j, k + 1)).abs()); }
            }}}
            let a = v.sample([p[0], p[1], p[2]]);
            let b = v.sample([q[0], q[1], q[2]]);
            prop_assert!((a - b).abs() <= 3.0 * lip * 1e-6 + 1e-15);
        }
    }
}
