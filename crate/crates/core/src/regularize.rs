//! Deformation penalties on the dense displacement field.
//!
//! Both penalties are averaged over the evaluated voxels and differentiated
//! exactly through their finite-difference stencils and the B-spline weights.
//!
//! - Smoothness: squared Frobenius norm of the Jacobian, first derivatives by
//!   forward differences (backward at the far face).
//! - Bending: squared norms of the three pure second derivatives (central
//!   3-point stencil, shifted inward at faces) plus twice the three mixed ones
//!   (4-corner cross stencil, one-sided at faces).
//!
//! `stride > 1` evaluates only voxels whose coordinates are multiples of the
//! stride; stencils still use unit steps.

use serde::{Deserialize, Serialize};

use crate::ffd::{DisplacementField, FfdLattice};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegWeights {
    pub smooth: f64,
    pub bend: f64,
}

impl RegWeights {
    pub fn new(smooth: f64, bend: f64) -> Result<Self> {
        let w = Self { smooth, bend };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("smooth", self.smooth), ("bend", self.bend)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("lambda_{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// A penalty value and its gradient over the lattice offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    pub value: f64,
    pub grad: Vec<f64>,
}

pub fn smoothness(lattice: &FfdLattice) -> Penalty {
    smoothness_strided(lattice, 1)
}

pub fn bending(lattice: &FfdLattice) -> Penalty {
    bending_strided(lattice, 1)
}

pub fn smoothness_strided(lattice: &FfdLattice, stride: usize) -> Penalty {
    through_lattice(lattice, |f| smoothness_field(f, stride))
}

pub fn bending_strided(lattice: &FfdLattice, stride: usize) -> Penalty {
    through_lattice(lattice, |f| bending_field(f, stride))
}

fn through_lattice(
    lattice: &FfdLattice,
    penalty: impl FnOnce(&DisplacementField) -> (f64, DisplacementField),
) -> Penalty {
    let (value, grad_field) = penalty(&lattice.field());
    let grad = lattice
        .field_adjoint(&grad_field)
        .expect("penalty gradient has the lattice domain dims");
    Penalty { value, grad }
}

struct Grid {
    dims: [usize; 3],
    stride: usize,
}

impl Grid {
    fn new(dims: [usize; 3], stride: usize) -> Self {
        Self {
            dims,
            stride: stride.max(1),
        }
    }

    fn count(&self) -> usize {
        self.dims.iter().map(|&n| n.div_ceil(self.stride)).product()
    }

    #[inline]
    fn idx(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    fn for_each(&self, mut f: impl FnMut([usize; 3])) {
        let s = self.stride;
        for k in (0..self.dims[2]).step_by(s) {
            for j in (0..self.dims[1]).step_by(s) {
                for i in (0..self.dims[0]).step_by(s) {
                    f([i, j, k]);
                }
            }
        }
    }
}

#[inline]
fn with(c: [usize; 3], axis: usize, v: usize) -> [usize; 3] {
    let mut c = c;
    c[axis] = v;
    c
}

#[inline]
fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn norm2(a: [f64; 3]) -> f64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

#[inline]
fn add_scaled(g: &mut [f64; 3], s: f64, d: [f64; 3]) {
    g[0] += s * d[0];
    g[1] += s * d[1];
    g[2] += s * d[2];
}

/// Mean squared Frobenius norm of the forward-difference Jacobian, with its
/// gradient over the field.
pub fn smoothness_field(field: &DisplacementField, stride: usize) -> (f64, DisplacementField) {
    let grid = Grid::new(field.dims, stride);
    let u = &field.data;
    let mut grad = DisplacementField::zeros(field.dims);
    let inv = 1.0 / grid.count() as f64;
    let mut total = 0.0;
    grid.for_each(|c| {
        for a in 0..3 {
            let n = grid.dims[a];
            if n < 2 {
                continue;
            }
            let (lo, hi) = if c[a] + 1 < n {
                (c[a], c[a] + 1)
            } else {
                (c[a] - 1, c[a])
            };
            let (lo, hi) = (grid.idx(with(c, a, lo)), grid.idx(with(c, a, hi)));
            let d = sub(u[hi], u[lo]);
            total += norm2(d);
            add_scaled(&mut grad.data[hi], 2.0 * inv, d);
            add_scaled(&mut grad.data[lo], -2.0 * inv, d);
        }
    });
    (total * inv, grad)
}

/// One-sided-at-the-faces stencil for a first derivative: `(lo, hi, step)`.
#[inline]
fn cross_stencil(i: usize, n: usize) -> (usize, usize, f64) {
    if i > 0 && i + 1 < n {
        (i - 1, i + 1, 2.0)
    } else if i == 0 {
        (0, 1, 1.0)
    } else {
        (n - 2, n - 1, 1.0)
    }
}

/// Mean bending energy of the field, with its gradient over the field.
pub fn bending_field(field: &DisplacementField, stride: usize) -> (f64, DisplacementField) {
    let grid = Grid::new(field.dims, stride);
    let u = &field.data;
    let mut grad = DisplacementField::zeros(field.dims);
    let inv = 1.0 / grid.count() as f64;
    let mut total = 0.0;
    grid.for_each(|c| {
        for a in 0..3 {
            let n = grid.dims[a];
            if n < 3 {
                continue;
            }
            let m = c[a].clamp(1, n - 2);
            let (l, mid, h) = (
                grid.idx(with(c, a, m - 1)),
                grid.idx(with(c, a, m)),
                grid.idx(with(c, a, m + 1)),
            );
            let d = [
                u[h][0] - 2.0 * u[mid][0] + u[l][0],
                u[h][1] - 2.0 * u[mid][1] + u[l][1],
                u[h][2] - 2.0 * u[mid][2] + u[l][2],
            ];
            total += norm2(d);
            add_scaled(&mut grad.data[h], 2.0 * inv, d);
            add_scaled(&mut grad.data[mid], -4.0 * inv, d);
            add_scaled(&mut grad.data[l], 2.0 * inv, d);
        }
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let (na, nb) = (grid.dims[a], grid.dims[b]);
            if na < 2 || nb < 2 {
                continue;
            }
            let (la, ha, sa) = cross_stencil(c[a], na);
            let (lb, hb, sb) = cross_stencil(c[b], nb);
            let at = |x: usize, y: usize| grid.idx(with(with(c, a, x), b, y));
            let (hh, hl, lh, ll) = (at(ha, hb), at(ha, lb), at(la, hb), at(la, lb));
            let s = 1.0 / (sa * sb);
            let d: [f64; 3] =
                std::array::from_fn(|k| (u[hh][k] - u[hl][k] - u[lh][k] + u[ll][k]) * s);
            total += 2.0 * norm2(d);
            let g = 4.0 * inv * s;
            add_scaled(&mut grad.data[hh], g, d);
            add_scaled(&mut grad.data[hl], -g, d);
            add_scaled(&mut grad.data[lh], -g, d);
            add_scaled(&mut grad.data[ll], g, d);
        }
    });
    (total * inv, grad)
}
