//! Incompressible Navier-Stokes on the MAC grid with no-slip walls and unit
//! viscosity: semi-Lagrangian advection, Crank-Nicolson diffusion, explicit
//! source, then a pressure projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point, ZERO};
use crate::grid::{flat_index, for_each_index, CellField, FaceField, MacGrid};
use crate::linalg::{
    norm2, pcg, JacobiPreconditioner, MultigridPreconditioner, SolveStats, StencilOperator,
    WallCondition,
};

/// Source term in the momentum equation, same layout as the velocity.
pub type ForceField = FaceField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidParams {
    pub resolution: Vec<usize>,
    pub dt: f64,
    #[serde(default = "default_div_tol")]
    pub div_tol: f64,
    /// Relative residual target for every linear solve.
    #[serde(default = "default_poisson_tol")]
    pub poisson_tol: f64,
    #[serde(default = "default_max_iter")]
    pub poisson_max_iter: usize,
}

fn default_div_tol() -> f64 {
    1e-8
}

fn default_poisson_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    500
}

impl FluidParams {
    pub fn new(resolution: Vec<usize>, dt: f64) -> Self {
        FluidParams {
            resolution,
            dt,
            div_tol: default_div_tol(),
            poisson_tol: default_poisson_tol(),
            poisson_max_iter: default_max_iter(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation("fluid time step must be positive"));
        }
        if self.resolution.iter().any(|&n| n < 4) {
            return Err(Error::validation(
                "grid resolution must be at least 4 per axis",
            ));
        }
        if !(self.div_tol > 0.0 && self.poisson_tol > 0.0) || self.poisson_max_iter == 0 {
            return Err(Error::validation("solver tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub u: FaceField,
    pub p: CellField,
    pub t: f64,
}

impl FluidState {
    pub fn at_rest(grid: MacGrid) -> Self {
        FluidState {
            u: FaceField::zeros(grid),
            p: CellField::zeros(grid),
            t: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub pressure: SolveStats,
    pub diffusion_iterations: usize,
    pub max_divergence: f64,
    /// `max|u| Δt` exceeded the smallest cell size.
    pub cfl_exceeded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidNorms {
    pub l2: f64,
    pub grad_l2: f64,
    pub linf: f64,
    pub grad_linf: f64,
}

/// Initial fluid velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialVelocity {
    Zero,
    /// `amplitude · curl ψ` with `ψ = (sin πx̂ sin πŷ)²` in box-normalised
    /// coordinates (times `sin² πẑ` in 3D).
    Mode {
        amplitude: f64,
    },
}

pub struct FluidSolver {
    domain: Domain,
    grid: MacGrid,
    params: FluidParams,
    pressure_op: StencilOperator,
    pressure_pre: MultigridPreconditioner,
    dirichlet_op: StencilOperator,
    dirichlet_pre: MultigridPreconditioner,
    diffusion: Vec<(StencilOperator, JacobiPreconditioner)>,
}

fn cell_operator(grid: &MacGrid, wall: WallCondition) -> StencilOperator {
    StencilOperator {
        dim: grid.dim,
        shape: grid.cell_shape(),
        spacing: grid.h,
        walls: [wall; 3],
        sigma: 0.0,
        scale: 1.0,
    }
}

/// Interior unknowns of component `comp`: faces strictly inside along `comp`.
fn interior_shape(grid: &MacGrid, comp: usize) -> [usize; 3] {
    let mut s = grid.n;
    s[comp] -= 1;
    s
}

fn diffusion_operator(grid: &MacGrid, comp: usize, dt: f64) -> StencilOperator {
    let mut walls = [WallCondition::CellDirichlet; 3];
    walls[comp] = WallCondition::NodeDirichlet;
    StencilOperator {
        dim: grid.dim,
        shape: interior_shape(grid, comp),
        spacing: grid.h,
        walls,
        sigma: 1.0,
        scale: dt,
    }
}

impl FluidSolver {
    pub fn new(domain: &Domain, params: FluidParams) -> Result<Self> {
        params.validate()?;
        let grid = MacGrid::new(domain, &params.resolution)?;
        let pressure_op = cell_operator(&grid, WallCondition::Neumann);
        let dirichlet_op = cell_operator(&grid, WallCondition::CellDirichlet);
        let diffusion = (0..grid.dim)
            .map(|a| {
                let op = diffusion_operator(&grid, a, 0.5 * params.dt);
                let pre = JacobiPreconditioner::new(&op);
                (op, pre)
            })
            .collect();
        Ok(FluidSolver {
            domain: domain.clone(),
            grid,
            pressure_pre: MultigridPreconditioner::new(&pressure_op),
            pressure_op,
            dirichlet_pre: MultigridPreconditioner::new(&dirichlet_op),
            dirichlet_op,
            diffusion,
            params,
        })
    }

    pub fn grid(&self) -> &MacGrid {
        &self.grid
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn params(&self) -> &FluidParams {
        &self.params
    }

    /// Divergence-free, boundary-vanishing initial state.
    pub fn initial_state(&self, init: &InitialVelocity) -> Result<FluidState> {
        let mut state = FluidState::at_rest(self.grid);
        if let InitialVelocity::Mode { amplitude } = init {
            let raw = FaceField::from_fn(self.grid, |x| mode_velocity(&self.domain, x, *amplitude));
            state.u = self.leray_project(&raw)?.0;
        }
        Ok(state)
    }

    pub fn divergence(&self, u: &FaceField) -> CellField {
        let g = self.grid;
        let mut div = CellField::zeros(g);
        let shape = g.cell_shape();
        for_each_index(&shape, |k, idx| {
            let mut s = 0.0;
            for a in 0..g.dim {
                let fs = g.face_shape(a);
                let mut up = idx;
                up[a] += 1;
                s += (u.comps[a][flat_index(&fs, up)] - u.comps[a][flat_index(&fs, idx)]) / g.h[a];
            }
            div.data[k] = s;
        });
        div
    }

    pub fn max_divergence(&self, u: &FaceField) -> f64 {
        self.divergence(u)
            .data
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Subtract `∇φ` from interior faces.
    fn subtract_gradient(&self, u: &mut FaceField, phi: &[f64]) {
        let g = self.grid;
        let cs = g.cell_shape();
        for a in 0..g.dim {
            let fs = g.face_shape(a);
            let comp = &mut u.comps[a];
            for_each_index(&fs, |k, idx| {
                if idx[a] == 0 || idx[a] == g.n[a] {
                    return;
                }
                let mut lo = idx;
                lo[a] -= 1;
                comp[k] -= (phi[flat_index(&cs, idx)] - phi[flat_index(&cs, lo)]) / g.h[a];
            });
        }
    }

    /// Leray projection; returns the projected field and the potential `φ`
    /// with `u − ∇φ` divergence free.
    pub fn leray_project(&self, field: &FaceField) -> Result<(FaceField, CellField)> {
        let mut u = field.clone();
        u.zero_boundary();
        let (phi, _) = self.project_in_place(&mut u, None)?;
        Ok((u, phi))
    }

    fn project_in_place(
        &self,
        u: &mut FaceField,
        warm: Option<&[f64]>,
    ) -> Result<(CellField, SolveStats)> {
        let div = self.divergence(u);
        let b: Vec<f64> = div.data.iter().map(|d| -d).collect();
        let bn = norm2(&b);
        let mut phi = CellField::zeros(self.grid);
        if bn == 0.0 {
            return Ok((
                phi,
                SolveStats {
                    iterations: 0,
                    residual: 0.0,
                },
            ));
        }
        if let Some(w) = warm {
            phi.data.copy_from_slice(w);
        }
        let tol = (self.params.poisson_tol * bn).min(self.params.div_tol);
        let stats = pcg(
            &self.pressure_op,
            &self.pressure_pre,
            &b,
            &mut phi.data,
            tol,
            self.params.poisson_max_iter,
            true,
        )?;
        self.subtract_gradient(u, &phi.data);
        Ok((phi, stats))
    }

    /// Solve `−Δ_h φ = rhs` with `φ = 0` on the walls (mirror ghosts).
    pub fn poisson_solve_dirichlet(&self, rhs: &CellField) -> Result<(CellField, SolveStats)> {
        let bn = norm2(&rhs.data);
        let mut phi = CellField::zeros(self.grid);
        if bn == 0.0 {
            return Ok((
                phi,
                SolveStats {
                    iterations: 0,
                    residual: 0.0,
                },
            ));
        }
        if rhs.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite Poisson right-hand side"));
        }
        let stats = pcg(
            &self.dirichlet_op,
            &self.dirichlet_pre,
            &rhs.data,
            &mut phi.data,
            self.params.poisson_tol * bn,
            self.params.poisson_max_iter,
            false,
        )?;
        Ok((phi, stats))
    }

    /// `∫|∇φ|²` for a cell field vanishing on the walls, `⟨φ, −Δ_h φ⟩`.
    pub fn dirichlet_energy(&self, phi: &CellField) -> f64 {
        let mut out = vec![0.0; phi.data.len()];
        crate::linalg::LinearOperator::apply(&self.dirichlet_op, &phi.data, &mut out);
        crate::linalg::dot(&phi.data, &out) * self.grid.cell_volume()
    }

    /// Apply `−Δ_h` componentwise with no-slip walls (zero on boundary faces).
    pub fn vector_laplacian(&self, u: &FaceField) -> FaceField {
        let g = self.grid;
        let mut out = FaceField::zeros(g);
        for a in 0..g.dim {
            let mut op = diffusion_operator(&g, a, 1.0);
            op.sigma = 0.0;
            let x = self.gather_interior(u, a);
            let mut y = vec![0.0; x.len()];
            crate::linalg::LinearOperator::apply(&op, &x, &mut y);
            self.scatter_interior(&mut out, a, &y);
        }
        out
    }

    fn gather_interior(&self, u: &FaceField, comp: usize) -> Vec<f64> {
        let g = self.grid;
        let is = interior_shape(&g, comp);
        let fs = g.face_shape(comp);
        let mut out = vec![0.0; is.iter().product()];
        for_each_index(&is, |k, idx| {
            let mut f = idx;
            f[comp] += 1;
            out[k] = u.comps[comp][flat_index(&fs, f)];
        });
        out
    }

    fn scatter_interior(&self, u: &mut FaceField, comp: usize, vals: &[f64]) {
        let g = self.grid;
        let is = interior_shape(&g, comp);
        let fs = g.face_shape(comp);
        for_each_index(&is, |k, idx| {
            let mut f = idx;
            f[comp] += 1;
            u.comps[comp][flat_index(&fs, f)] = vals[k];
        });
    }

    fn advect(&self, u: &FaceField, dt: f64) -> FaceField {
        let g = self.grid;
        let mut out = u.clone();
        for a in 0..g.dim {
            let fs = g.face_shape(a);
            let comp = &mut out.comps[a];
            for_each_index(&fs, |k, idx| {
                if idx[a] == 0 || idx[a] == g.n[a] {
                    return;
                }
                let x = g.face_position(a, idx);
                let v0 = self.extend(u, &x);
                let mut mid = x;
                for b in 0..g.dim {
                    mid[b] -= 0.5 * dt * v0[b];
                }
                let vm = self.extend(u, &mid);
                let mut foot = x;
                for b in 0..g.dim {
                    foot[b] -= dt * vm[b];
                }
                comp[k] = self.extend(u, &foot)[a];
            });
        }
        out
    }

    fn extend(&self, u: &FaceField, x: &Point) -> Point {
        crate::geometry::extend_field(&self.domain, u, x)
    }

    /// One projection step of length `dt` driven by `force`.
    pub fn step(&self, state: &mut FluidState, force: &ForceField) -> Result<StepReport> {
        if force.grid != self.grid {
            return Err(Error::validation(
                "force grid does not match the fluid grid",
            ));
        }
        if !force.is_finite() {
            return Err(Error::numeric("non-finite force"));
        }
        let dt = self.params.dt;
        let umax = state.u.max_abs();
        let cfl_exceeded = umax * dt > self.grid.min_spacing();
        let mut star = if umax > 0.0 {
            self.advect(&state.u, dt)
        } else {
            state.u.clone()
        };
        star.axpy(dt, force);
        star.zero_boundary();
        let mut diffusion_iterations = 0;
        // Crank-Nicolson: (I - dt/2 Δ) x = (I + dt/2 Δ) u*, i.e. M x = 2 u* - M u*
        for a in 0..self.grid.dim {
            let (op, pre) = &self.diffusion[a];
            let half = self.gather_interior(&star, a);
            let mut rhs = vec![0.0; half.len()];
            crate::linalg::LinearOperator::apply(op, &half, &mut rhs);
            for (r, h) in rhs.iter_mut().zip(&half) {
                *r = 2.0 * h - *r;
            }
            let bn = norm2(&rhs);
            let mut x = half;
            if bn > 0.0 {
                let stats = pcg(
                    op,
                    pre,
                    &rhs,
                    &mut x,
                    self.params.poisson_tol * bn,
                    self.params.poisson_max_iter,
                    false,
                )?;
                diffusion_iterations += stats.iterations;
            }
            self.scatter_interior(&mut star, a, &x);
        }
        let warm: Vec<f64> = state.p.data.iter().map(|p| p * dt).collect();
        let (phi, pressure) = self.project_in_place(&mut star, Some(&warm))?;
        let max_divergence = self.max_divergence(&star);
        if max_divergence > self.params.div_tol {
            return Err(Error::numeric(format!(
                "divergence {max_divergence:e} above tolerance {:e}",
                self.params.div_tol
            )));
        }
        if !star.is_finite() {
            return Err(Error::numeric("fluid velocity became non-finite"));
        }
        state.u = star;
        state.p = CellField {
            grid: self.grid,
            data: phi.data.iter().map(|p| p / dt).collect(),
        };
        state.t += dt;
        Ok(StepReport {
            pressure,
            diffusion_iterations,
            max_divergence,
            cfl_exceeded,
        })
    }

    pub fn norms(&self, u: &FaceField) -> FluidNorms {
        fluid_norms(u)
    }
}

fn mode_velocity(domain: &Domain, x: &Point, amplitude: f64) -> Point {
    use std::f64::consts::PI;
    let lo = domain.lo();
    let len = domain.lengths();
    let xs = (x[0] - lo[0]) / len[0];
    let ys = (x[1] - lo[1]) / len[1];
    let (sx, cx) = (PI * xs).sin_cos();
    let (sy, cy) = (PI * ys).sin_cos();
    let dpsi_dx = 2.0 * PI * sx * cx * sy * sy / len[0];
    let dpsi_dy = 2.0 * PI * sy * cy * sx * sx / len[1];
    let g = if domain.dim() == 3 {
        let zs = (x[2] - lo[2]) / len[2];
        (PI * zs).sin().powi(2)
    } else {
        1.0
    };
    [amplitude * dpsi_dy * g, -amplitude * dpsi_dx * g, 0.0]
}

/// Discrete norms of a boundary-vanishing staggered field.
///
/// `‖u‖_{L²}` and `‖∇u‖_{L²}` are the midpoint sums matching the solver's
/// energy (`‖∇u‖² = ⟨u, −Δ_h u⟩`); the sup norms are taken over cell centres
/// and face nodes.
pub fn fluid_norms(u: &FaceField) -> FluidNorms {
    let g = u.grid;
    let vol = g.cell_volume();
    let l2 = u.inner(u).max(0.0).sqrt();

    let mut grad_sq = 0.0;
    for a in 0..g.dim {
        let fs = g.face_shape(a);
        let comp = &u.comps[a];
        for b in 0..g.dim {
            let h = g.h[b];
            for_each_index(&fs, |k, idx| {
                if b == a {
                    if idx[a] < g.n[a] {
                        let mut up = idx;
                        up[a] += 1;
                        let d = (comp[flat_index(&fs, up)] - comp[k]) / h;
                        grad_sq += d * d * vol;
                    }
                    return;
                }
                if idx[a] == 0 || idx[a] == g.n[a] {
                    return;
                }
                if idx[b] == 0 {
                    let d = comp[k] / (0.5 * h);
                    grad_sq += d * d * 0.5 * vol;
                }
                if idx[b] + 1 < g.n[b] {
                    let mut up = idx;
                    up[b] += 1;
                    let d = (comp[flat_index(&fs, up)] - comp[k]) / h;
                    grad_sq += d * d * vol;
                } else {
                    let d = comp[k] / (0.5 * h);
                    grad_sq += d * d * 0.5 * vol;
                }
            });
        }
    }

    let cs = g.cell_shape();
    let mut centre = vec![ZERO; g.cell_count()];
    for_each_index(&cs, |k, idx| {
        for a in 0..g.dim {
            let fs = g.face_shape(a);
            let mut up = idx;
            up[a] += 1;
            centre[k][a] =
                0.5 * (u.comps[a][flat_index(&fs, idx)] + u.comps[a][flat_index(&fs, up)]);
        }
    });
    let mut linf = centre
        .iter()
        .map(crate::geometry::norm)
        .fold(0.0f64, f64::max);
    for a in 0..g.dim {
        let fs = g.face_shape(a);
        for_each_index(&fs, |_, idx| {
            let x = g.face_position(a, idx);
            linf = linf.max(crate::geometry::norm(&u.interpolate(&x)));
        });
    }

    let mut grad_linf = 0.0f64;
    for_each_index(&cs, |k, idx| {
        let mut fro = 0.0;
        for a in 0..g.dim {
            let fs = g.face_shape(a);
            for b in 0..g.dim {
                let d = if a == b {
                    let mut up = idx;
                    up[a] += 1;
                    (u.comps[a][flat_index(&fs, up)] - u.comps[a][flat_index(&fs, idx)]) / g.h[a]
                } else {
                    let here = centre[k][a];
                    let h = g.h[b];
                    let minus = if idx[b] > 0 {
                        let mut lo = idx;
                        lo[b] -= 1;
                        Some(centre[flat_index(&cs, lo)][a])
                    } else {
                        None
                    };
                    let plus = if idx[b] + 1 < g.n[b] {
                        let mut hi = idx;
                        hi[b] += 1;
                        Some(centre[flat_index(&cs, hi)][a])
                    } else {
                        None
                    };
                    match (minus, plus) {
                        (Some(m), Some(p)) => (p - m) / (2.0 * h),
                        (None, Some(_)) => here / (0.5 * h),
                        (Some(_), None) => -here / (0.5 * h),
                        (None, None) => 0.0,
                    }
                };
                fro += d * d;
            }
        }
        grad_linf = grad_linf.max(fro.sqrt());
    });

    FluidNorms {
        l2,
        grad_l2: grad_sq.max(0.0).sqrt(),
        linf,
        grad_linf,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solver(n: usize, dt: f64) -> FluidSolver {
        FluidSolver::new(&Domain::unit(2), FluidParams::new(vec![n, n], dt)).unwrap()
    }

    #[test]
    fn rest_state_is_fixed() {
        let s = solver(16, 0.01);
        let mut st = FluidState::at_rest(*s.grid());
        let f = FaceField::zeros(*s.grid());
        for _ in 0..5 {
            s.step(&mut st, &f).unwrap();
        }
        assert_eq!(st.u.max_abs(), 0.0);
    }

    #[test]
    fn step_keeps_invariants_and_dissipates() {
        let s = solver(32, 0.005);
        let mut st = s
            .initial_state(&InitialVelocity::Mode { amplitude: 1.0 })
            .unwrap();
        let f = FaceField::zeros(*s.grid());
        let mut e = st.u.inner(&st.u);
        for _ in 0..10 {
            let rep = s.step(&mut st, &f).unwrap();
            assert!(rep.max_divergence <= 1e-8);
            let e_new = st.u.inner(&st.u);
            assert!(e_new < e);
            e = e_new;
            let g = *s.grid();
            for a in 0..2 {
                let fs = g.face_shape(a);
                for_each_index(&fs, |k, idx| {
                    if idx[a] == 0 || idx[a] == g.n[a] {
                        assert_eq!(st.u.comps[a][k], 0.0);
                    }
                });
            }
        }
    }

    #[test]
    fn projection_is_idempotent_and_kills_gradients() {
        let s = solver(16, 0.01);
        let g = *s.grid();
        let raw = FaceField::from_fn(g, |x| {
            [
                (3.0 * x[0]).sin() + x[1] * x[1],
                (2.0 * x[1]).cos() * x[0],
                0.0,
            ]
        });
        let (once, _) = s.leray_project(&raw).unwrap();
        let (twice, _) = s.leray_project(&once).unwrap();
        let mut diff = twice.clone();
        diff.axpy(-1.0, &once);
        assert!(diff.max_abs() < 1e-10);

        // discrete gradient of a cell potential
        let phi = CellField::from_fn(g, |x| (x[0] * 2.0).sin() * (x[1] * 3.0).cos());
        let mut grad = FaceField::zeros(g);
        let neg: Vec<f64> = phi.data.iter().map(|v| -v).collect();
        s.subtract_gradient(&mut grad, &neg);
        let (p, _) = s.leray_project(&grad).unwrap();
        assert!(p.max_abs() < 1e-8 * grad.max_abs().max(1.0));
    }

    #[test]
    fn dirichlet_poisson_symmetry_for_constant_rhs() {
        let s = solver(32, 0.01);
        let g = *s.grid();
        let rhs = CellField::from_fn(g, |_| 1.0);
        let (phi, _) = s.poisson_solve_dirichlet(&rhs).unwrap();
        let n = 32;
        let at = |i: usize, j: usize| phi.data[flat_index(&[n, n, 1], [i, j, 0])];
        let mut max_sym = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                max_sym = max_sym.max((at(i, j) - at(n - 1 - i, j)).abs());
                max_sym = max_sym.max((at(i, j) - at(i, n - 1 - j)).abs());
            }
        }
        assert!(max_sym < 1e-10, "{max_sym}");
        let centre = at(n / 2, n / 2).max(at(n / 2 - 1, n / 2 - 1));
        assert!((phi.max() - centre).abs() < 1e-14);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let s = solver(8, 0.01);
        let (phi, st) = s
            .poisson_solve_dirichlet(&CellField::zeros(*s.grid()))
            .unwrap();
        assert_eq!(st.iterations, 0);
        assert!(phi.data.iter().all(|&v| v == 0.0));
        let n = fluid_norms(&FaceField::zeros(*s.grid()));
        assert_eq!((n.l2, n.grad_l2, n.linf, n.grad_linf), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn dirichlet_energy_matches_vector_laplacian_pairing() {
        let s = solver(16, 0.01);
        let g = *s.grid();
        let u = s
            .initial_state(&InitialVelocity::Mode { amplitude: 0.7 })
            .unwrap()
            .u;
        let lap = s.vector_laplacian(&u);
        let pairing = u.inner(&lap);
        let n = fluid_norms(&u);
        assert!((n.grad_l2 * n.grad_l2 - pairing).abs() < 1e-10 * pairing.abs().max(1.0));
        assert!(g.dim == 2);
    }

    #[test]
    fn three_dimensional_step() {
        let s = FluidSolver::new(&Domain::unit(3), FluidParams::new(vec![8, 8, 8], 0.01)).unwrap();
        let mut st = s
            .initial_state(&InitialVelocity::Mode { amplitude: 1.0 })
            .unwrap();
        let f = FaceField::zeros(*s.grid());
        let e0 = st.u.inner(&st.u);
        s.step(&mut st, &f).unwrap();
        assert!(st.u.inner(&st.u) < e0);
        assert!(s.max_divergence(&st.u) <= 1e-8);
    }
}
