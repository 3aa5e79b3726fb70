//! Marker-and-cell grid layout over the box domain.
//!
//! Cell-centred scalars live on `n[0] x .. x n[d-1]` arrays; velocity
//! component `a` lives on faces normal to axis `a`, with `n[a] + 1` entries
//! along that axis. All arrays are row-major over their shape (last axis
//! fastest). For `d = 2` the third extent is 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacGrid {
    pub dim: usize,
    pub n: [usize; 3],
    pub h: [f64; 3],
    pub lo: Point,
}

/// One axis of a two-point interpolation stencil. `None` marks a wall node
/// that carries the boundary value zero.
pub(crate) type AxisStencil = [(Option<usize>, f64); 2];

impl MacGrid {
    pub fn new(domain: &Domain, resolution: &[usize]) -> Result<Self> {
        let dim = domain.dim();
        if resolution.len() != dim {
            return Err(Error::validation("grid resolution length must equal dim"));
        }
        let mut n = [1usize; 3];
        let mut h = [1.0; 3];
        let len = domain.lengths();
        for a in 0..dim {
            if resolution[a] < 4 {
                return Err(Error::validation(
                    "grid resolution must be at least 4 per axis",
                ));
            }
            n[a] = resolution[a];
            h[a] = len[a] / resolution[a] as f64;
        }
        Ok(MacGrid {
            dim,
            n,
            h,
            lo: *domain.lo(),
        })
    }

    pub fn cell_shape(&self) -> [usize; 3] {
        self.n
    }

    pub fn face_shape(&self, comp: usize) -> [usize; 3] {
        let mut s = self.n;
        s[comp] += 1;
        s
    }

    pub fn cell_count(&self) -> usize {
        self.n.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.h[a]).product()
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.h[a])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn cell_center(&self, idx: [usize; 3]) -> Point {
        let mut p = ZERO;
        for a in 0..self.dim {
            p[a] = self.lo[a] + (idx[a] as f64 + 0.5) * self.h[a];
        }
        p
    }

    pub fn face_position(&self, comp: usize, idx: [usize; 3]) -> Point {
        let mut p = self.cell_center(idx);
        p[comp] = self.lo[comp] + idx[comp] as f64 * self.h[comp];
        p
    }

    /// Stencil along `axis` for a quantity whose nodes sit on faces normal to
    /// `axis` (`staggered == true`) or at cell centres. Cell-centred nodes get
    /// zero-valued wall nodes half a cell outside the first and last centre.
    pub(crate) fn axis_stencil(&self, axis: usize, staggered: bool, x: f64) -> AxisStencil {
        if axis >= self.dim {
            return [(Some(0), 1.0), (None, 0.0)];
        }
        let n = self.n[axis];
        let h = self.h[axis];
        if staggered {
            let s = ((x - self.lo[axis]) / h).clamp(0.0, n as f64);
            let i0 = (s.floor() as usize).min(n - 1);
            let t = s - i0 as f64;
            [(Some(i0), 1.0 - t), (Some(i0 + 1), t)]
        } else {
            let s = ((x - self.lo[axis]) / h - 0.5).clamp(-0.5, n as f64 - 0.5);
            if s < 0.0 {
                let w = 2.0 * s + 1.0;
                [(Some(0), w), (None, 1.0 - w)]
            } else if s > (n - 1) as f64 {
                let w = 1.0 - 2.0 * (s - (n - 1) as f64);
                [(Some(n - 1), w), (None, 1.0 - w)]
            } else {
                let i0 = (s.floor() as usize).min(n - 2);
                let t = s - i0 as f64;
                [(Some(i0), 1.0 - t), (Some(i0 + 1), t)]
            }
        }
    }

    /// Stencil for a component (`Some(a)`) or a cell-centred scalar (`None`).
    pub(crate) fn stencil(&self, comp: Option<usize>, x: &Point) -> [AxisStencil; 3] {
        [
            self.axis_stencil(0, comp == Some(0), x[0]),
            self.axis_stencil(1, comp == Some(1), x[1]),
            self.axis_stencil(2, comp == Some(2), x[2]),
        ]
    }
}

#[inline]
pub fn flat_index(shape: &[usize; 3], idx: [usize; 3]) -> usize {
    (idx[0] * shape[1] + idx[1]) * shape[2] + idx[2]
}

#[inline]
pub fn unflatten(shape: &[usize; 3], mut k: usize) -> [usize; 3] {
    let i2 = k % shape[2];
    k /= shape[2];
    let i1 = k % shape[1];
    [k / shape[1], i1, i2]
}

/// Visit every multi-index of `shape` in row-major order.
pub fn for_each_index(shape: &[usize; 3], mut f: impl FnMut(usize, [usize; 3])) {
    let mut k = 0;
    for i in 0..shape[0] {
        for j in 0..shape[1] {
            for l in 0..shape[2] {
                f(k, [i, j, l]);
                k += 1;
            }
        }
    }
}

/// Apply `visit(flat_index, weight)` to every grid node of a stencil.
#[inline]
pub(crate) fn visit_stencil(
    shape: &[usize; 3],
    st: &[AxisStencil; 3],
    mut visit: impl FnMut(usize, f64),
) {
    for &(i, wi) in &st[0] {
        let Some(i) = i else { continue };
        if wi == 0.0 {
            continue;
        }
        for &(j, wj) in &st[1] {
            let Some(j) = j else { continue };
            if wj == 0.0 {
                continue;
            }
            for &(l, wl) in &st[2] {
                let Some(l) = l else { continue };
                if wl == 0.0 {
                    continue;
                }
                visit(flat_index(shape, [i, j, l]), wi * wj * wl);
            }
        }
    }
}

/// Cell-centred scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub grid: MacGrid,
    pub data: Vec<f64>,
}

impl CellField {
    pub fn zeros(grid: MacGrid) -> Self {
        CellField {
            grid,
            data: vec![0.0; grid.cell_count()],
        }
    }

    pub fn from_fn(grid: MacGrid, f: impl Fn(&Point) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        let shape = grid.cell_shape();
        for_each_index(&shape, |k, idx| out.data[k] = f(&grid.cell_center(idx)));
        out
    }

    pub fn shape(&self) -> [usize; 3] {
        self.grid.cell_shape()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Midpoint-rule integral.
    pub fn integral(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn sub(&self, other: &CellField) -> CellField {
        CellField {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Staggered vector field: one face array per component.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub grid: MacGrid,
    pub comps: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(grid: MacGrid) -> Self {
        let comps = (0..grid.dim)
            .map(|a| vec![0.0; grid.face_shape(a).iter().product()])
            .collect();
        FaceField { grid, comps }
    }

    /// Sample `f` at face positions; boundary-normal faces are left at zero.
    pub fn from_fn(grid: MacGrid, f: impl Fn(&Point) -> Point) -> Self {
        let mut out = Self::zeros(grid);
        for a in 0..grid.dim {
            let shape = grid.face_shape(a);
            let comp = &mut out.comps[a];
            for_each_index(&shape, |k, idx| {
                if idx[a] == 0 || idx[a] == grid.n[a] {
                    return;
                }
                comp[k] = f(&grid.face_position(a, idx))[a];
            });
        }
        out
    }

    pub fn shape(&self, comp: usize) -> [usize; 3] {
        self.grid.face_shape(comp)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    /// Multilinear interpolation; tangential components vanish on the walls.
    pub fn interpolate(&self, x: &Point) -> Point {
        let mut out = ZERO;
        for a in 0..self.grid.dim {
            let st = self.grid.stencil(Some(a), x);
            let shape = self.grid.face_shape(a);
            let data = &self.comps[a];
            let mut acc = 0.0;
            visit_stencil(&shape, &st, |k, w| acc += w * data[k]);
            out[a] = acc;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Set the boundary-normal face values to exactly zero.
    pub fn zero_boundary(&mut self) {
        let grid = self.grid;
        for a in 0..grid.dim {
            let shape = grid.face_shape(a);
            let comp = &mut self.comps[a];
            for_each_index(&shape, |k, idx| {
                if idx[a] == 0 || idx[a] == grid.n[a] {
                    comp[k] = 0.0;
                }
            });
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &FaceField) {
        for (c, o) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in c.iter_mut().zip(o) {
                *x += alpha * y;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Midpoint-rule `L²` inner product over faces.
    pub fn inner(&self, other: &FaceField) -> f64 {
        let vol = self.grid.cell_volume();
        self.comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum::<f64>()
            * vol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> MacGrid {
        MacGrid::new(&Domain::unit(2), &[n, n]).unwrap()
    }

    #[test]
    fn row_major_roundtrip() {
        let shape = [3, 4, 5];
        for k in 0..60 {
            assert_eq!(flat_index(&shape, unflatten(&shape, k)), k);
        }
    }

    #[test]
    fn linear_fields_are_reproduced() {
        let g = grid(8);
        let f = FaceField::from_fn(g, |p| [p[1] * (1.0 - p[1]), 0.0, 0.0]);
        // normal component along x is sampled exactly at faces, linear in x
        let x = [0.37, 0.5, 0.0];
        let got = f.interpolate(&x)[0];
        let exact = 0.5 * 0.5;
        assert!((got - exact).abs() < 1e-2);
    }

    #[test]
    fn tangential_component_vanishes_on_walls() {
        let g = grid(8);
        let f = FaceField::from_fn(g, |_| [1.0, 1.0, 0.0]);
        let on_wall = f.interpolate(&[0.3, 0.0, 0.0]);
        assert_eq!(on_wall[0], 0.0);
        let on_side = f.interpolate(&[0.0, 0.4, 0.0]);
        assert_eq!(on_side[1], 0.0);
    }

    #[test]
    fn stencil_weights_sum_to_one_inside() {
        let g = grid(6);
        for &x in &[0.2, 0.5, 0.75] {
            for comp in [None, Some(0), Some(1)] {
                let st = g.stencil(comp, &[x, 0.5, 0.0]);
                let mut s = 0.0;
                visit_stencil(&[7, 7, 1], &st, |_, w| s += w);
                assert!((s - 1.0).abs() < 1e-14);
            }
        }
    }
}
