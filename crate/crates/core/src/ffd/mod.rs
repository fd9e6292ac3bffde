//! Cubic B-spline free-form deformation.
//!
//! A lattice with `n` cells along an axis of `N` voxels has `n + 3` control
//! points on that axis: point `i` rests at `(i - 1) * (N - 1) / n`, so one ghost
//! layer sits before the domain and two after. A voxel `x` in cell `c` with
//! local coordinate `t` is displaced by
//!
//! ```text
//! u(x) = sum_{l,m,n in 0..4} B_l(t_x) B_m(t_y) B_n(t_z) dP[c_x + l, c_y + m, c_z + n]
//! ```
//!
//! and the deformation is `phi(x) = x + u(x)`. Offsets are in voxels.
//!
//! Dense fields are evaluated separably (one axis contraction at a time), and
//! [`FfdLattice::field_adjoint`] is the exact transpose of that linear map, which
//! is what every gradient with respect to the offsets goes through.

mod io;

pub use io::{read_lattice, write_lattice, SFFD_HEADER_LEN, SFFD_MAGIC};

use crate::volume::{voxel_count, Dims, Volume};
use crate::{Error, Result};

/// Uniform cubic B-spline basis `(B0, B1, B2, B3)` at `t` in `[0, 1]`.
pub fn bspline_basis(t: f64) -> Result<[f64; 4]> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("basis parameter {t} outside [0, 1]")));
    }
    Ok(basis(t))
}

#[inline]
pub(crate) fn basis(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let s = 1.0 - t;
    [
        s * s * s / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

/// Cell index and local coordinates of a point inside the lattice domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementQuery {
    pub cell: [usize; 3],
    pub local: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfdLattice {
    cells: [usize; 3],
    dims: Dims,
    offsets: Vec<f64>,
    frozen: Vec<bool>,
}

impl FfdLattice {
    /// Zero-offset (identity) lattice with `cells` cells per axis over a volume of `dims`.
    pub fn new(cells: [usize; 3], dims: Dims) -> Result<Self> {
        if cells.iter().any(|&c| c == 0) {
            return Err(Error::invalid(format!("lattice cells must be positive, got {cells:?}")));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::invalid(format!(
                "lattice domain needs at least 2 voxels per axis, got {dims:?}"
            )));
        }
        let n = (cells[0] + 3) * (cells[1] + 3) * (cells[2] + 3);
        Ok(Self {
            cells,
            dims,
            offsets: vec![0.0; 3 * n],
            frozen: vec![false; n],
        })
    }

    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    pub fn domain_dims(&self) -> Dims {
        self.dims
    }

    /// Control points per axis (`cells + 3`).
    pub fn points(&self) -> [usize; 3] {
        [self.cells[0] + 3, self.cells[1] + 3, self.cells[2] + 3]
    }

    pub fn point_count(&self) -> usize {
        self.frozen.len()
    }

    pub fn spacing(&self) -> [f64; 3] {
        std::array::from_fn(|a| (self.dims[a] - 1) as f64 / self.cells[a] as f64)
    }

    #[inline]
    pub fn point_index(&self, i: usize, j: usize, k: usize) -> usize {
        let [px, py, _] = self.points();
        i + px * (j + py * k)
    }

    /// Rest position of control point `(i, j, k)` in voxel coordinates.
    pub fn point_position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let s = self.spacing();
        [
            (i as f64 - 1.0) * s[0],
            (j as f64 - 1.0) * s[1],
            (k as f64 - 1.0) * s[2],
        ]
    }

    /// Flat offsets, point-major with the component innermost.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn offset(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let p = 3 * self.point_index(i, j, k);
        [self.offsets[p], self.offsets[p + 1], self.offsets[p + 2]]
    }

    /// Sets one control offset. Frozen points stay at zero.
    pub fn set_offset(&mut self, i: usize, j: usize, k: usize, d: [f64; 3]) {
        let p = self.point_index(i, j, k);
        if !self.frozen[p] {
            self.offsets[3 * p..3 * p + 3].copy_from_slice(&d);
        }
    }

    /// Replaces all offsets; entries of frozen points are forced to zero.
    pub fn set_offsets(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.offsets.len() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "expected {} finite offsets, got {}",
                self.offsets.len(),
                values.len()
            )));
        }
        self.offsets.copy_from_slice(values);
        self.zero_frozen_entries_of_own_offsets();
        Ok(())
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn is_frozen(&self, i: usize, j: usize, k: usize) -> bool {
        self.frozen[self.point_index(i, j, k)]
    }

    pub fn freeze(&mut self, i: usize, j: usize, k: usize) {
        let p = self.point_index(i, j, k);
        self.frozen[p] = true;
        self.offsets[3 * p..3 * p + 3].fill(0.0);
    }

    /// Freezes every control point whose rest position lies in the posterior
    /// half, i.e. strictly below `(D - 1) / 2` along axis 2.
    pub fn freeze_posterior_half(&mut self) {
        let mid = (self.dims[2] - 1) as f64 / 2.0;
        let [px, py, pz] = self.points();
        for k in 0..pz {
            if self.point_position(0, 0, k)[2] < mid {
                for j in 0..py {
                    for i in 0..px {
                        self.freeze(i, j, k);
                    }
                }
            }
        }
    }

    /// Zeroes the entries of an offset-shaped array that belong to frozen points.
    pub fn zero_frozen(&self, values: &mut [f64]) {
        for (p, _) in self.frozen.iter().enumerate().filter(|(_, f)| **f) {
            values[3 * p..3 * p + 3].fill(0.0);
        }
    }

    fn zero_frozen_entries_of_own_offsets(&mut self) {
        for p in 0..self.frozen.len() {
            if self.frozen[p] {
                self.offsets[3 * p..3 * p + 3].fill(0.0);
            }
        }
    }

    /// Cell and local coordinates of `x`. The far domain face maps to the last
    /// cell with local coordinate 1.
    pub fn locate(&self, x: [f64; 3]) -> Result<DisplacementQuery> {
        let mut cell = [0; 3];
        let mut local = [0.0; 3];
        for a in 0..3 {
            let max = (self.dims[a] - 1) as f64;
            if !(x[a] >= 0.0 && x[a] <= max) {
                return Err(Error::invalid(format!(
                    "point {x:?} outside lattice domain {:?}",
                    self.dims
                )));
            }
            (cell[a], local[a]) = locate_axis(x[a], self.spacing()[a], self.cells[a]);
        }
        Ok(DisplacementQuery { cell, local })
    }

    /// Per-axis basis weights at `x`; the 64 tensor products weight the points
    /// `cell + (l, m, n)`.
    pub fn basis_weights(&self, x: [f64; 3]) -> Result<(DisplacementQuery, [[f64; 4]; 3])> {
        let q = self.locate(x)?;
        Ok((q, q.local.map(basis)))
    }

    /// Displacement `u(x)` by direct summation over the 4x4x4 support.
    pub fn displacement(&self, x: [f64; 3]) -> Result<[f64; 3]> {
        let (q, [bx, by, bz]) = self.basis_weights(x)?;
        let mut u = [0.0; 3];
        for n in 0..4 {
            for m in 0..4 {
                for l in 0..4 {
                    let w = bx[l] * by[m] * bz[n];
                    let d = self.offset(q.cell[0] + l, q.cell[1] + m, q.cell[2] + n);
                    for c in 0..3 {
                        u[c] += w * d[c];
                    }
                }
            }
        }
        Ok(u)
    }

    /// Deformation `phi(x) = x + u(x)`.
    pub fn deform(&self, x: [f64; 3]) -> Result<[f64; 3]> {
        let u = self.displacement(x)?;
        Ok([x[0] + u[0], x[1] + u[1], x[2] + u[2]])
    }

    fn axis_tables(&self) -> [AxisTable; 3] {
        let s = self.spacing();
        std::array::from_fn(|a| AxisTable::new(self.dims[a], s[a], self.cells[a]))
    }

    /// Dense displacement field at every voxel.
    pub fn field(&self) -> DisplacementField {
        let [tx, ty, tz] = self.axis_tables();
        let [px, py, _] = self.points();
        let [h, w, d] = self.dims;
        let p = &self.offsets;

        // Contract z: (px, py, pz) -> (px, py, d).
        let mut t1 = vec![0.0; px * py * d * 3];
        for z in 0..d {
            let (cz, wz) = (tz.cell[z], tz.weights[z]);
            for j in 0..py {
                let dst = 3 * px * (j + py * z);
                for (n, &wn) in wz.iter().enumerate() {
                    let src = 3 * px * (j + py * (cz + n));
                    axpy(&mut t1[dst..dst + 3 * px], wn, &p[src..src + 3 * px]);
                }
            }
        }
        // Contract y: (px, py, d) -> (px, w, d).
        let mut t2 = vec![0.0; px * w * d * 3];
        for z in 0..d {
            for y in 0..w {
                let (cy, wy) = (ty.cell[y], ty.weights[y]);
                let dst = 3 * px * (y + w * z);
                for (m, &wm) in wy.iter().enumerate() {
                    let src = 3 * px * ((cy + m) + py * z);
                    axpy(&mut t2[dst..dst + 3 * px], wm, &t1[src..src + 3 * px]);
                }
            }
        }
        // Contract x: (px, w, d) -> (h, w, d).
        let mut data = vec![[0.0; 3]; h * w * d];
        for row in 0..w * d {
            let src = &t2[3 * px * row..3 * px * (row + 1)];
            for x in 0..h {
                let (cx, wx) = (tx.cell[x], tx.weights[x]);
                let mut u = [0.0; 3];
                for (l, &wl) in wx.iter().enumerate() {
                    let s = 3 * (cx + l);
                    u[0] += wl * src[s];
                    u[1] += wl * src[s + 1];
                    u[2] += wl * src[s + 2];
                }
                data[x + h * row] = u;
            }
        }
        DisplacementField {
            dims: self.dims,
            data,
        }
    }

    /// Transpose of [`FfdLattice::field`]: maps a gradient over the dense field
    /// to a gradient over the offsets. Entries of frozen points are zeroed.
    pub fn field_adjoint(&self, grad: &DisplacementField) -> Result<Vec<f64>> {
        if grad.dims != self.dims {
            return Err(Error::invalid(format!(
                "field dims {:?} do not match lattice domain {:?}",
                grad.dims, self.dims
            )));
        }
        let [tx, ty, tz] = self.axis_tables();
        let [px, py, pz] = self.points();
        let [h, w, d] = self.dims;

        let mut g2 = vec![0.0; px * w * d * 3];
        for row in 0..w * d {
            let dst = &mut g2[3 * px * row..3 * px * (row + 1)];
            for x in 0..h {
                let (cx, wx) = (tx.cell[x], tx.weights[x]);
                let gx = grad.data[x + h * row];
                for (l, &wl) in wx.iter().enumerate() {
                    let s = 3 * (cx + l);
                    dst[s] += wl * gx[0];
                    dst[s + 1] += wl * gx[1];
                    dst[s + 2] += wl * gx[2];
                }
            }
        }
        let mut g1 = vec![0.0; px * py * d * 3];
        for z in 0..d {
            for y in 0..w {
                let (cy, wy) = (ty.cell[y], ty.weights[y]);
                let src = 3 * px * (y + w * z);
                for (m, &wm) in wy.iter().enumerate() {
                    let dst = 3 * px * ((cy + m) + py * z);
                    axpy_split(&mut g1, dst, wm, &g2[src..src + 3 * px]);
                }
            }
        }
        let mut gp = vec![0.0; px * py * pz * 3];
        for z in 0..d {
            let (cz, wz) = (tz.cell[z], tz.weights[z]);
            for j in 0..py {
                let src = 3 * px * (j + py * z);
                for (n, &wn) in wz.iter().enumerate() {
                    let dst = 3 * px * (j + py * (cz + n));
                    axpy_split(&mut gp, dst, wn, &g1[src..src + 3 * px]);
                }
            }
        }
        self.zero_frozen(&mut gp);
        Ok(gp)
    }
}

#[inline]
fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

#[inline]
fn axpy_split(buf: &mut [f64], at: usize, a: f64, src: &[f64]) {
    axpy(&mut buf[at..at + src.len()], a, src);
}

fn locate_axis(x: f64, spacing: f64, cells: usize) -> (usize, f64) {
    let t = x / spacing;
    let c = (t.floor().max(0.0) as usize).min(cells - 1);
    (c, (t - c as f64).clamp(0.0, 1.0))
}

/// Cell index and basis weights for every voxel coordinate along one axis.
struct AxisTable {
    cell: Vec<usize>,
    weights: Vec<[f64; 4]>,
}

impl AxisTable {
    fn new(n: usize, spacing: f64, cells: usize) -> Self {
        let (cell, weights) = (0..n)
            .map(|x| {
                let (c, t) = locate_axis(x as f64, spacing, cells);
                (c, basis(t))
            })
            .unzip();
        Self { cell, weights }
    }
}

/// Displacement vectors on the voxel grid, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub dims: Dims,
    pub data: Vec<[f64; 3]>,
}

impl DisplacementField {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![[0.0; 3]; voxel_count(dims)],
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        self.data[self.index(i, j, k)]
    }
}

fn check_dims(v: &Volume, lattice: &FfdLattice) -> Result<()> {
    if v.dims() != lattice.domain_dims() {
        return Err(Error::invalid(format!(
            "volume dims {:?} do not match lattice domain {:?}",
            v.dims(),
            lattice.domain_dims()
        )));
    }
    Ok(())
}

/// Resamples `v` at the deformed coordinates: `X'(x) = X(phi(x))`.
pub fn warp(v: &Volume, lattice: &FfdLattice) -> Result<Volume> {
    check_dims(v, lattice)?;
    Ok(warp_with_field(v, &lattice.field()))
}

pub fn warp_with_field(v: &Volume, field: &DisplacementField) -> Volume {
    let [h, w, _] = v.dims();
    let data = field
        .data
        .iter()
        .enumerate()
        .map(|(idx, u)| {
            let x = (idx % h) as f64;
            let y = ((idx / h) % w) as f64;
            let z = (idx / (h * w)) as f64;
            v.sample([x + u[0], y + u[1], z + u[2]])
        })
        .collect();
    Volume::from_raw(v.dims(), data)
}

/// Warped values together with the spatial image gradient at each warped
/// coordinate, the two ingredients of the offset gradient.
pub(crate) fn warp_with_grad(v: &Volume, field: &DisplacementField) -> (Volume, Vec<[f64; 3]>) {
    let [h, w, _] = v.dims();
    let (data, grads) = field
        .data
        .iter()
        .enumerate()
        .map(|(idx, u)| {
            let x = (idx % h) as f64;
            let y = ((idx / h) % w) as f64;
            let z = (idx / (h * w)) as f64;
            v.sample_with_grad([x + u[0], y + u[1], z + u[2]])
        })
        .unzip();
    (Volume::from_raw(v.dims(), data), grads)
}

/// Gradient of a loss with respect to the control offsets, given the loss
/// gradient with respect to the warped volume (`dl_dwarped`, x-fastest).
pub fn warp_backward(v: &Volume, lattice: &FfdLattice, dl_dwarped: &[f64]) -> Result<Vec<f64>> {
    check_dims(v, lattice)?;
    if dl_dwarped.len() != v.len() {
        return Err(Error::invalid(format!(
            "upstream gradient has {} entries, volume has {}",
            dl_dwarped.len(),
            v.len()
        )));
    }
    let (_, image_grad) = warp_with_grad(v, &lattice.field());
    lattice.field_adjoint(&chain_field(v.dims(), dl_dwarped, &image_grad))
}

/// `dL/du(x) = dL/dX'(x) * grad X(phi(x))`.
pub(crate) fn chain_field(dims: Dims, dl_dwarped: &[f64], image_grad: &[[f64; 3]]) -> DisplacementField {
    DisplacementField {
        dims,
        data: dl_dwarped
            .iter()
            .zip(image_grad)
            .map(|(&g, n)| [g * n[0], g * n[1], g * n[2]])
            .collect(),
    }
}
