//! Matrix-free symmetric positive (semi-)definite solvers for the
//! grid stencils: conjugate gradients with Jacobi or multigrid
//! preconditioning.

use crate::error::{Error, Result};

/// How a stencil treats a missing neighbour across the domain wall.
///
/// `Neumann` drops the coupling, `NodeDirichlet` places a zero value one
/// spacing away and `CellDirichlet` half a spacing away (mirror ghost).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WallCondition {
    Neumann,
    NodeDirichlet,
    CellDirichlet,
}

impl WallCondition {
    fn coefficient(self) -> f64 {
        match self {
            WallCondition::Neumann => 0.0,
            WallCondition::NodeDirichlet => 1.0,
            WallCondition::CellDirichlet => 2.0,
        }
    }
}

/// `y = sigma*x + scale * (-Δ_h x)` on a logically rectangular array.
#[derive(Debug, Clone)]
pub struct StencilOperator {
    pub dim: usize,
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
    pub walls: [WallCondition; 3],
    pub sigma: f64,
    pub scale: f64,
}

pub trait LinearOperator {
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

impl StencilOperator {
    fn inv_h2(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for a in 0..self.dim {
            out[a] = self.scale / (self.spacing[a] * self.spacing[a]);
        }
        out
    }

    /// True when constants lie in the kernel.
    pub fn is_singular(&self) -> bool {
        self.sigma == 0.0 && (0..self.dim).all(|a| self.walls[a] == WallCondition::Neumann)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let c = self.inv_h2();
        let s = self.shape;
        let mut d = vec![0.0; self.len()];
        let mut k = 0;
        for i in 0..s[0] {
            for j in 0..s[1] {
                for l in 0..s[2] {
                    let idx = [i, j, l];
                    let mut v = self.sigma;
                    for a in 0..self.dim {
                        let wall = self.walls[a].coefficient();
                        v += c[a] * if idx[a] > 0 { 1.0 } else { wall };
                        v += c[a] * if idx[a] + 1 < s[a] { 1.0 } else { wall };
                    }
                    d[k] = v;
                    k += 1;
                }
            }
        }
        d
    }
}

impl LinearOperator for StencilOperator {
    fn len(&self) -> usize {
        self.shape.iter().product()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let c = self.inv_h2();
        let s = self.shape;
        let stride = [s[1] * s[2], s[2], 1];
        let wall: [f64; 3] = [
            self.walls[0].coefficient(),
            self.walls[1].coefficient(),
            self.walls[2].coefficient(),
        ];
        let mut k = 0;
        for i in 0..s[0] {
            for j in 0..s[1] {
                for l in 0..s[2] {
                    let idx = [i, j, l];
                    let xc = x[k];
                    let mut acc = self.sigma * xc;
                    for a in 0..self.dim {
                        let mut t = 0.0;
                        if idx[a] > 0 {
                            t += xc - x[k - stride[a]];
                        } else {
                            t += wall[a] * xc;
                        }
                        if idx[a] + 1 < s[a] {
                            t += xc - x[k + stride[a]];
                        } else {
                            t += wall[a] * xc;
                        }
                        acc += c[a] * t;
                    }
                    y[k] = acc;
                    k += 1;
                }
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn remove_mean(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

pub struct JacobiPreconditioner {
    inv_diag: Vec<f64>,
}

impl JacobiPreconditioner {
    pub fn new(op: &StencilOperator) -> Self {
        JacobiPreconditioner {
            inv_diag: op.diagonal().into_iter().map(|d| 1.0 / d).collect(),
        }
    }
}

impl Preconditioner for JacobiPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((z, r), d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *z = r * d;
        }
    }
}

struct Level {
    op: StencilOperator,
    inv_diag: Vec<f64>,
}

/// Cell-centred geometric multigrid V-cycle with damped Jacobi smoothing,
/// averaging restriction and piecewise-constant prolongation. Symmetric, so
/// it can precondition conjugate gradients.
pub struct MultigridPreconditioner {
    levels: Vec<Level>,
    omega: f64,
    sweeps: usize,
    coarse_sweeps: usize,
    singular: bool,
}

impl MultigridPreconditioner {
    pub fn new(op: &StencilOperator) -> Self {
        let mut levels = vec![Level {
            inv_diag: op.diagonal().into_iter().map(|d| 1.0 / d).collect(),
            op: op.clone(),
        }];
        loop {
            let fine = &levels.last().unwrap().op;
            let can_coarsen = (0..fine.dim).all(|a| fine.shape[a] % 2 == 0 && fine.shape[a] >= 4);
            if !can_coarsen {
                break;
            }
            let mut coarse = fine.clone();
            for a in 0..fine.dim {
                coarse.shape[a] /= 2;
                coarse.spacing[a] *= 2.0;
            }
            // Galerkin scaling for constant prolongation with averaging restriction.
            coarse.scale *= 2.0;
            coarse.sigma *= 2.0;
            levels.push(Level {
                inv_diag: coarse.diagonal().into_iter().map(|d| 1.0 / d).collect(),
                op: coarse,
            });
        }
        let coarsest = &levels.last().unwrap().op;
        let widest = (0..coarsest.dim)
            .map(|a| coarsest.shape[a])
            .max()
            .unwrap_or(1);
        MultigridPreconditioner {
            levels,
            omega: if op.dim == 2 { 0.8 } else { 6.0 / 7.0 },
            sweeps: 2,
            coarse_sweeps: (4 * widest * widest).clamp(20, 400),
            singular: op.is_singular(),
        }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    fn smooth(&self, lvl: usize, b: &[f64], x: &mut [f64], sweeps: usize, tmp: &mut [f64]) {
        let level = &self.levels[lvl];
        for _ in 0..sweeps {
            level.op.apply(x, tmp);
            for k in 0..x.len() {
                x[k] += self.omega * level.inv_diag[k] * (b[k] - tmp[k]);
            }
        }
    }

    fn vcycle(&self, lvl: usize, b: &[f64], x: &mut [f64]) {
        let n = b.len();
        let mut tmp = vec![0.0; n];
        x.iter_mut().for_each(|v| *v = 0.0);
        if lvl + 1 == self.levels.len() {
            self.smooth(lvl, b, x, self.coarse_sweeps, &mut tmp);
            return;
        }
        self.smooth(lvl, b, x, self.sweeps, &mut tmp);
        let fine = &self.levels[lvl].op;
        fine.apply(x, &mut tmp);
        let coarse = &self.levels[lvl + 1].op;
        let cs = coarse.shape;
        let fs = fine.shape;
        let nc: usize = cs.iter().product();
        let mut rc = vec![0.0; nc];
        let share = 1.0 / (1usize << fine.dim) as f64;
        let mut k = 0;
        for i in 0..fs[0] {
            for j in 0..fs[1] {
                for l in 0..fs[2] {
                    let ci = coarse_index(fine.dim, &cs, [i, j, l]);
                    rc[ci] += share * (b[k] - tmp[k]);
                    k += 1;
                }
            }
        }
        if self.singular {
            remove_mean(&mut rc);
        }
        let mut ec = vec![0.0; nc];
        self.vcycle(lvl + 1, &rc, &mut ec);
        let mut k = 0;
        for i in 0..fs[0] {
            for j in 0..fs[1] {
                for l in 0..fs[2] {
                    x[k] += ec[coarse_index(fine.dim, &cs, [i, j, l])];
                    k += 1;
                }
            }
        }
        self.smooth(lvl, b, x, self.sweeps, &mut tmp);
    }
}

fn coarse_index(dim: usize, cs: &[usize; 3], idx: [usize; 3]) -> usize {
    let c = |a: usize| if a < dim { idx[a] / 2 } else { idx[a] };
    (c(0) * cs[1] + c(1)) * cs[2] + c(2)
}

impl Preconditioner for MultigridPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.vcycle(0, r, z);
        if self.singular {
            remove_mean(z);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Preconditioned conjugate gradients. Stops when `‖b − Ax‖₂ ≤ tol`.
/// For singular operators the mean of `b` is removed and the returned
/// solution has zero mean.
pub fn pcg(
    op: &dyn LinearOperator,
    pre: &dyn Preconditioner,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    singular: bool,
) -> Result<SolveStats> {
    let n = op.len();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let mut rhs = b.to_vec();
    if singular {
        remove_mean(&mut rhs);
        remove_mean(x);
    }
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iterations = 0;
    // The recursive residual drifts; restart from the true residual until it agrees.
    for _restart in 0..4 {
        op.apply(x, &mut q);
        for k in 0..n {
            r[k] = rhs[k] - q[k];
        }
        let mut res = norm2(&r);
        if res <= tol {
            return Ok(SolveStats {
                iterations,
                residual: res,
            });
        }
        if iterations >= max_iter {
            break;
        }
        pre.apply(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            op.apply(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 || !pq.is_finite() {
                break;
            }
            let alpha = rz / pq;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * q[k];
            }
            iterations += 1;
            res = norm2(&r);
            if res <= 0.5 * tol {
                break;
            }
            pre.apply(&r, &mut z);
            if singular {
                remove_mean(&mut z);
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        if singular {
            remove_mean(x);
        }
    }
    op.apply(x, &mut q);
    let res = (0..n).map(|k| (rhs[k] - q[k]).powi(2)).sum::<f64>().sqrt();
    if res <= tol {
        Ok(SolveStats {
            iterations,
            residual: res,
        })
    } else {
        Err(Error::NonConvergence {
            residual: res,
            tolerance: tol,
            iterations,
        })
    }
}
