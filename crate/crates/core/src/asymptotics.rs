//! Long-time objects: energy and dissipation, `W₁` and `H⁻¹` metrics, decay
//! fits, the asymptotic map `X_∞` and two constructions of the limit profile.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmap::{exit_time_forward, ExitOutcome, FlowSnapshotSeries, PhaseState, Snapshot};
use crate::fluid::{fluid_norms, FluidSolver};
use crate::geometry::{extend_field, Domain, Point, ZERO};
use crate::grid::{flat_index, for_each_index, CellField, FaceField, MacGrid};
use crate::kinetic::{sample_initial, InitialDataSpec, ParticleEnsemble};
use crate::transport::{w1_empirical, TransportSolution};

/// `E = ½‖u‖² + ½M₂f` and `D = Σ wᵢ|Pu(xᵢ) − vᵢ|² + ‖∇u‖²`.
pub fn energy_and_dissipation(
    ens: &ParticleEnsemble,
    u: &FaceField,
    domain: &Domain,
) -> (f64, f64) {
    let n = fluid_norms(u);
    let mut m2 = 0.0;
    let mut drag = 0.0;
    for i in ens.alive_indices() {
        let w = ens.weight(i);
        let v = &ens.v[i];
        let uf = extend_field(domain, u, &ens.x[i]);
        let (mut s2, mut r2) = (0.0, 0.0);
        for a in 0..ens.dim {
            s2 += v[a] * v[a];
            r2 += (uf[a] - v[a]).powi(2);
        }
        m2 += w * s2;
        drag += w * r2;
    }
    (0.5 * n.l2 * n.l2 + 0.5 * m2, drag + n.grad_l2 * n.grad_l2)
}

/// `W₁(f, ρ_f ⊗ δ₀) = M₁f`: every coupling has to move each velocity to 0,
/// and keeping `x` fixed does exactly that.
pub fn w1_monokinetic(ens: &ParticleEnsemble) -> f64 {
    ens.velocity_moment(1.0)
}

/// `‖ρ₁ − ρ₂‖_{H⁻¹}` as `‖∇φ‖` with `−Δφ = ρ₁ − ρ₂`, `φ = 0` on `∂Ω`.
pub fn hminus1_distance(solver: &FluidSolver, a: &CellField, b: &CellField) -> Result<f64> {
    if a.grid != b.grid || a.grid != *solver.grid() {
        return Err(Error::validation("H^-1 distance needs matching grids"));
    }
    let (phi, _) = solver.poisson_solve_dirichlet(&a.sub(b))?;
    Ok(solver.dirichlet_energy(&phi).max(0.0).sqrt())
}

/// `W₁` between two cell densities, each cell's mass placed at its centre.
/// With `normalize`, both are scaled to unit mass first.
pub fn w1_cells(a: &CellField, b: &CellField, normalize: bool) -> Result<TransportSolution> {
    let vol = a.grid.cell_volume();
    let points = |f: &CellField| -> Vec<(Point, f64)> {
        let mut out = Vec::new();
        for_each_index(&f.shape(), |k, idx| {
            if f.data[k] > 0.0 {
                out.push((f.grid.cell_center(idx), f.data[k] * vol));
            }
        });
        if normalize {
            let total: f64 = out.iter().map(|p| p.1).sum();
            if total > 0.0 {
                out.iter_mut().for_each(|p| p.1 /= total);
            }
        }
        out
    };
    w1_empirical(&points(a), &points(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub points: usize,
}

impl DecayFit {
    pub fn predict(&self, t: f64) -> f64 {
        self.prefactor * (-self.rate * t).exp()
    }
}

/// Least squares on `ln E = ln C − λ t` over `window` (default: last half).
pub fn fit_decay(t: &[f64], e: &[f64], window: Option<(f64, f64)>) -> Result<DecayFit> {
    if t.len() != e.len() || t.is_empty() {
        return Err(Error::validation(
            "decay fit needs matching nonempty series",
        ));
    }
    let (t0, t1) = window.unwrap_or_else(|| {
        let (a, b) = (t[0], t[t.len() - 1]);
        (a + 0.5 * (b - a), b)
    });
    let sel: Vec<(f64, f64)> = t
        .iter()
        .zip(e)
        .filter(|(ti, _)| **ti >= t0 && **ti <= t1)
        .map(|(a, b)| (*a, *b))
        .collect();
    if sel.len() < 10 {
        return Err(Error::validation(format!(
            "decay fit needs at least 10 points, got {}",
            sel.len()
        )));
    }
    if sel.iter().any(|(_, y)| !(*y > 0.0)) {
        return Err(Error::validation(
            "decay fit window contains nonpositive values",
        ));
    }
    let n = sel.len() as f64;
    let mt = sel.iter().map(|p| p.0).sum::<f64>() / n;
    let my = sel.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (ti, yi) in &sel {
        let (dt, dy) = (ti - mt, yi.ln() - my);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return Err(Error::validation("decay fit window has a single time"));
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let ss_res = (syy - slope * sty).max(0.0);
    let r_squared = if syy <= 1e-300 {
        1.0
    } else {
        1.0 - ss_res / syy
    };
    let rate = if slope.abs() < 1e-300 { 0.0 } else { -slope };
    Ok(DecayFit {
        rate,
        prefactor: intercept.exp(),
        window: (t0, t1),
        r_squared,
        points: sel.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallAudit {
    /// `max λ ∫_t^T E / E(t)` over the window.
    pub max_ratio: f64,
    pub pass: bool,
}

/// Check `λ ∫_t^T E ≤ (1 + 5%) E(t)` on the fit window (trapezoid tails).
pub fn gronwall_audit(t: &[f64], e: &[f64], fit: &DecayFit) -> GronwallAudit {
    let n = t.len();
    let mut tail = vec![0.0; n];
    for k in (0..n.saturating_sub(1)).rev() {
        tail[k] = tail[k + 1] + 0.5 * (t[k + 1] - t[k]) * (e[k] + e[k + 1]);
    }
    let mut max_ratio = 0.0f64;
    for k in 0..n {
        if t[k] >= fit.window.0 && t[k] <= fit.window.1 && e[k] > 0.0 {
            max_ratio = max_ratio.max(fit.rate * tail[k] / e[k]);
        }
    }
    GronwallAudit {
        max_ratio,
        pass: max_ratio <= 1.05,
    }
}

/// Bound on `∫_{T}^∞ ‖u‖_{L∞}` from an exponential fit of the snapshot sup
/// norms over the last half of the series.
pub fn velocity_tail_bound(series: &FlowSnapshotSeries) -> Result<f64> {
    let entries = series.entries();
    let t: Vec<f64> = entries.iter().map(|e| e.t).collect();
    let s: Vec<f64> = entries
        .iter()
        .map(|e: &Snapshot| e.field.sup_norm())
        .collect();
    let Some(&t_end) = t.last() else {
        return Ok(0.0);
    };
    let half = t[0] + 0.5 * (t_end - t[0]);
    let late_max = t
        .iter()
        .zip(&s)
        .filter(|(ti, _)| **ti >= half)
        .map(|p| *p.1)
        .fold(0.0, f64::max);
    if late_max == 0.0 {
        return Ok(0.0);
    }
    let fit = fit_decay(&t, &s, None)
        .map_err(|e| Error::validation(format!("velocity tail not controllable: {e}")))?;
    if !(fit.rate > 0.0) {
        return Err(Error::validation(
            "velocity tail not controllable: no decay",
        ));
    }
    Ok(fit.predict(series.end()) / fit.rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XInfinity {
    /// `X_T + V_T` at the series end, `None` when the particle exits.
    pub x_inf: Option<Point>,
    pub t_max: f64,
    pub tail_bound: f64,
}

impl XInfinity {
    pub fn survives(&self) -> bool {
        self.x_inf.is_some()
    }
}

/// `X_∞(z)` truncated at the series end: `x + v + ∫₀^T Pu(τ, X_τ)`, which the
/// replay integrator produces as `X_T + V_T`. After `T` the field is taken to
/// be zero, so the particle survives iff `X_T + V_T ∈ Ω̄`.
pub fn compute_xinfty(
    series: &FlowSnapshotSeries,
    z: &PhaseState,
    tail_tol: f64,
) -> Result<XInfinity> {
    let tail = velocity_tail_bound(series)?;
    if tail > tail_tol {
        return Err(Error::validation(format!(
            "velocity tail bound {tail:e} exceeds tolerance {tail_tol:e}"
        )));
    }
    xinfty_unchecked(series, z, tail)
}

fn xinfty_unchecked(series: &FlowSnapshotSeries, z: &PhaseState, tail: f64) -> Result<XInfinity> {
    let dim = series.domain().dim();
    let (t0, t1) = (series.start(), series.end());
    let x_inf = if series.domain().distance_to_boundary(&z.x) <= 0.0 {
        None
    } else {
        match exit_time_forward(series, t0, z, t1 - t0)? {
            ExitOutcome::Exit { .. } => None,
            ExitOutcome::ExceedsHorizon { state } => {
                let mut p = ZERO;
                for a in 0..dim {
                    p[a] = state.x[a] + state.v[a];
                }
                (series.domain().distance_to_boundary(&p) >= 0.0).then_some(p)
            }
        }
    };
    Ok(XInfinity {
        x_inf,
        t_max: t1,
        tail_bound: tail,
    })
}

/// Default tail tolerance `1e-4 · diam Ω`.
pub fn default_tail_tolerance(domain: &Domain) -> f64 {
    1e-4 * domain.diameter()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Pushforward,
    ChangeOfVariables,
    LongTimeSimulation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEstimate {
    pub rho: CellField,
    pub mass: f64,
    pub kind: ProfileKind,
    /// Largest `‖D_x X_∞ − I‖` met (change of variables only).
    pub max_jacobian_defect: f64,
}

/// Mass-conserving cloud-in-cell deposit of weighted points.
pub fn deposit_points(grid: &MacGrid, points: &[(Point, f64)]) -> CellField {
    let mut rho = CellField::zeros(*grid);
    let cs = grid.cell_shape();
    let inv = 1.0 / grid.cell_volume();
    let axis = |a: usize, x: f64| -> [(usize, f64); 2] {
        if a >= grid.dim {
            return [(0, 1.0), (0, 0.0)];
        }
        let n = grid.n[a];
        let s = (x - grid.lo[a]) / grid.h[a] - 0.5;
        if s <= 0.0 {
            [(0, 1.0), (0, 0.0)]
        } else if s >= (n - 1) as f64 {
            [(n - 1, 1.0), (n - 1, 0.0)]
        } else {
            let i0 = (s.floor() as usize).min(n - 2);
            let t = s - i0 as f64;
            [(i0, 1.0 - t), (i0 + 1, t)]
        }
    };
    for (x, w) in points {
        let st = [axis(0, x[0]), axis(1, x[1]), axis(2, x[2])];
        for &(i, wi) in &st[0] {
            for &(j, wj) in &st[1] {
                for &(l, wl) in &st[2] {
                    let wt = wi * wj * wl;
                    if wt != 0.0 {
                        rho.data[flat_index(&cs, [i, j, l])] += w * wt * inv;
                    }
                }
            }
        }
    }
    rho
}

/// Sample `f₀`, keep survivors and deposit their weight at `X_∞`.
pub fn profile_pushforward(
    f0: &InitialDataSpec,
    series: &FlowSnapshotSeries,
    grid: &MacGrid,
    tail_tol: f64,
) -> Result<ProfileEstimate> {
    let tail = velocity_tail_bound(series)?;
    if tail > tail_tol {
        return Err(Error::validation(format!(
            "velocity tail bound {tail:e} exceeds tolerance"
        )));
    }
    let ens = sample_initial(f0, series.domain())?;
    let results: Vec<Result<XInfinity>> = (0..ens.len())
        .into_par_iter()
        .map(|i| xinfty_unchecked(series, &PhaseState::new(ens.x[i], ens.v[i]), tail))
        .collect();
    let mut pts = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        if let Some(p) = r?.x_inf {
            pts.push((p, ens.weight(i)));
        }
    }
    let mass = pts.iter().map(|p| p.1).sum();
    Ok(ProfileEstimate {
        rho: deposit_points(grid, &pts),
        mass,
        kind: ProfileKind::Pushforward,
        max_jacobian_defect: 0.0,
    })
}

/// `ρ^∞(y) = ∫ 1_{U^∞} f₀(X_{∞,v}^{-1}(y), v) |det D_y X_{∞,v}^{-1}(y)| dv`,
/// with a midpoint rule of `v_nodes` per axis over the velocity support box
/// and `X_{∞,v}` inverted by fixed-point iteration.
pub fn profile_change_of_variables(
    f0: &InitialDataSpec,
    series: &FlowSnapshotSeries,
    grid: &MacGrid,
    v_nodes: usize,
    tail_tol: f64,
) -> Result<ProfileEstimate> {
    let domain = series.domain();
    let dim = domain.dim();
    let tail = velocity_tail_bound(series)?;
    if tail > tail_tol {
        return Err(Error::validation(format!(
            "velocity tail bound {tail:e} exceeds tolerance"
        )));
    }
    if v_nodes == 0 {
        return Err(Error::validation(
            "velocity quadrature needs at least one node per axis",
        ));
    }
    // velocity nodes and weights
    let mut nodes: Vec<(Point, f64)> = Vec::new();
    if let crate::kinetic::VelocityLaw::Delta { v } = &f0.velocity {
        nodes.push((crate::geometry::to_point(v), 1.0));
    } else {
        let (vlo, vhi) = f0.velocity.bounds(dim);
        let mut hv = [0.0; 3];
        for a in 0..dim {
            hv[a] = (vhi[a] - vlo[a]) / v_nodes as f64;
        }
        let cell: f64 = (0..dim).map(|a| hv[a]).product();
        let shape = [v_nodes, v_nodes, if dim == 3 { v_nodes } else { 1 }];
        for_each_index(&shape, |_, idx| {
            let mut v = ZERO;
            for a in 0..dim {
                v[a] = vlo[a] + (idx[a] as f64 + 0.5) * hv[a];
            }
            if let Some(d) = f0.velocity.density(dim, &v) {
                if d > 0.0 {
                    nodes.push((v, d * cell));
                }
            }
        });
    }
    let singular_v = matches!(f0.velocity, crate::kinetic::VelocityLaw::Delta { .. });
    let (slo, shi) = f0.spatial.bounds(dim);
    let (sup_int, _) = series.budgets(series.start(), series.end());
    let reach = sup_int + tail + 2.0 * grid.min_spacing();
    let eta = 1e-5 * domain.diameter();
    let xinf = |x: &Point, v: &Point| -> Result<Option<Point>> {
        Ok(xinfty_unchecked(series, &PhaseState::new(*x, *v), tail)?.x_inf)
    };
    let cs = grid.cell_shape();
    let cells: Vec<[usize; 3]> = {
        let mut out = Vec::new();
        for_each_index(&cs, |_, idx| out.push(idx));
        out
    };
    let per_cell: Vec<Result<(f64, f64)>> = cells
        .par_iter()
        .map(|idx| {
            let y = grid.cell_center(*idx);
            let mut acc = 0.0;
            let mut defect = 0.0f64;
            for (v, wv) in &nodes {
                let mut x = ZERO;
                let mut far = false;
                for a in 0..dim {
                    x[a] = y[a] - v[a];
                    if x[a] < slo[a] - reach || x[a] > shi[a] + reach {
                        far = true;
                    }
                }
                if far {
                    continue;
                }
                // fixed point x <- y - (X_inf(x) - x)
                let mut converged = false;
                let mut image = None;
                for _ in 0..60 {
                    let Some(p) = xinf(&x, v)? else { break };
                    let mut next = ZERO;
                    let mut step = 0.0f64;
                    for a in 0..dim {
                        next[a] = y[a] - (p[a] - x[a]);
                        step = step.max((next[a] - x[a]).abs());
                    }
                    x = next;
                    image = Some(p);
                    if step <= 1e-10 {
                        converged = true;
                        break;
                    }
                }
                let Some(_) = image else { continue };
                if !converged {
                    // the orbit left the survival set or failed to contract
                    if xinf(&x, v)?.is_none() {
                        continue;
                    }
                    return Err(Error::numeric("X_inf inversion failed to contract"));
                }
                let rho_x = f0.spatial.density(dim, &x);
                if rho_x == 0.0 {
                    continue;
                }
                // D_x X_inf by centred differences
                let mut jac = nalgebra::DMatrix::<f64>::zeros(dim, dim);
                let mut ok = true;
                for b in 0..dim {
                    let (mut xp, mut xm) = (x, x);
                    xp[b] += eta;
                    xm[b] -= eta;
                    match (xinf(&xp, v)?, xinf(&xm, v)?) {
                        (Some(pp), Some(pm)) => {
                            for a in 0..dim {
                                jac[(a, b)] = (pp[a] - pm[a]) / (2.0 * eta);
                            }
                        }
                        _ => ok = false,
                    }
                }
                if !ok {
                    continue;
                }
                let defect_m = &jac - nalgebra::DMatrix::<f64>::identity(dim, dim);
                defect = defect.max(defect_m.norm());
                let det = jac.determinant();
                if !(det > 0.0) {
                    return Err(Error::numeric("asymptotic map lost orientation"));
                }
                let wv = if singular_v { 1.0 } else { *wv };
                acc += rho_x * wv / det;
            }
            Ok((acc, defect))
        })
        .collect();
    let mut rho = CellField::zeros(*grid);
    let mut max_defect = 0.0f64;
    for (k, r) in per_cell.into_iter().enumerate() {
        let (val, d) = r?;
        rho.data[k] = val;
        max_defect = max_defect.max(d);
    }
    let mass = rho.integral();
    Ok(ProfileEstimate {
        rho,
        mass,
        kind: ProfileKind::ChangeOfVariables,
        max_jacobian_defect: max_defect,
    })
}

/// Long-time deposit: alive particles placed at `X_T + V_T`.
pub fn profile_long_time(
    ens: &ParticleEnsemble,
    grid: &MacGrid,
    domain: &Domain,
) -> ProfileEstimate {
    let mut pts = Vec::new();
    for i in ens.alive_indices() {
        let mut p = ZERO;
        for a in 0..ens.dim {
            p[a] = ens.x[i][a] + ens.v[i][a];
        }
        if domain.distance_to_boundary(&p) >= 0.0 {
            pts.push((p, ens.weight(i)));
        }
    }
    let mass = pts.iter().map(|p| p.1).sum();
    ProfileEstimate {
        rho: deposit_points(grid, &pts),
        mass,
        kind: ProfileKind::LongTimeSimulation,
        max_jacobian_defect: 0.0,
    }
}

/// Merge blocks of `factor` cells per axis, preserving mass.
pub fn coarsen(f: &CellField, factor: usize) -> Result<CellField> {
    let g = f.grid;
    if factor == 0 || (0..g.dim).any(|a| !g.n[a].is_multiple_of(factor) || g.n[a] / factor < 4) {
        return Err(Error::validation(
            "coarsening factor must divide the grid and leave 4 cells per axis",
        ));
    }
    let mut cg = g;
    for a in 0..g.dim {
        cg.n[a] = g.n[a] / factor;
        cg.h[a] = g.h[a] * factor as f64;
    }
    let mut out = CellField::zeros(cg);
    let scale = 1.0 / factor.pow(g.dim as u32) as f64;
    let cs = cg.cell_shape();
    for_each_index(&f.shape(), |k, idx| {
        let mut c = idx;
        for a in 0..g.dim {
            c[a] /= factor;
        }
        out.data[flat_index(&cs, c)] += f.data[k] * scale;
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    pub horizons: Vec<f64>,
    /// `1_{τ⁺ > T}` per sample and horizon.
    pub indicators: Vec<Vec<bool>>,
    pub monotone_fraction: f64,
    /// Fraction whose indicator no longer changes over the last two horizons.
    pub stabilized_fraction: f64,
}

/// Survival indicators `1_{τ⁺ > T}` over increasing horizons.
pub fn indicator_limit_check(
    series: &FlowSnapshotSeries,
    samples: &[PhaseState],
    horizons: &[f64],
) -> Result<IndicatorReport> {
    let mut hs = horizons.to_vec();
    hs.sort_by(f64::total_cmp);
    let t0 = series.start();
    let indicators: Vec<Vec<bool>> = samples
        .par_iter()
        .map(|z| {
            hs.iter()
                .map(|&h| Ok(!exit_time_forward(series, t0, z, h)?.exited()))
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<_>>()?;
    let n = samples.len().max(1) as f64;
    let monotone = indicators
        .iter()
        .filter(|ind| ind.windows(2).all(|w| w[0] || !w[1]))
        .count() as f64;
    let stable = indicators
        .iter()
        .filter(|ind| ind.len() < 2 || ind[ind.len() - 1] == ind[ind.len() - 2])
        .count() as f64;
    Ok(IndicatorReport {
        horizons: hs,
        indicators,
        monotone_fraction: monotone / n,
        stabilized_fraction: stable / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetic::{SpatialLaw, VelocityLaw};

    #[test]
    fn exact_exponential_fit() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let e: Vec<f64> = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let f = fit_decay(&t, &e, Some((0.0, 5.0))).unwrap();
        assert!((f.rate - 0.7).abs() < 1e-8 && (f.prefactor - 3.0).abs() < 1e-8);
        let c = fit_decay(&t, &vec![2.0; 50], None).unwrap();
        assert!(c.rate.abs() < 1e-10);
        assert!(gronwall_audit(&t, &e, &f).pass);
    }

    #[test]
    fn fit_rejects_bad_windows() {
        let t: Vec<f64> = (0..8).map(|k| k as f64).collect();
        assert!(fit_decay(&t, &[1.0; 8], None).is_err());
        let t: Vec<f64> = (0..30).map(|k| k as f64).collect();
        let mut e = vec![1.0; 30];
        e[29] = 0.0;
        assert!(fit_decay(&t, &e, None).is_err());
    }

    #[test]
    fn two_particle_energy() {
        let d = Domain::unit(2);
        let g = MacGrid::new(&d, &[8, 8]).unwrap();
        let ens = ParticleEnsemble::from_states(
            2,
            &[
                ([0.3, 0.3, 0.0], [1.0, 0.0, 0.0], 0.5),
                ([0.6, 0.6, 0.0], [0.0, 2.0, 0.0], 0.5),
            ],
        );
        let (e, dis) = energy_and_dissipation(&ens, &FaceField::zeros(g), &d);
        assert_eq!((e, dis), (1.25, 2.5));
        assert_eq!(w1_monokinetic(&ens), 1.5);
    }

    #[test]
    fn free_xinfty() {
        let d = Domain::unit(2);
        let s = FlowSnapshotSeries::zero(&d, 2.0, 0.05).unwrap();
        let r =
            compute_xinfty(&s, &PhaseState::new([0.5, 0.5, 0.0], [0.1, 0.0, 0.0]), 1e-4).unwrap();
        let p = r.x_inf.unwrap();
        assert!((p[0] - 0.6).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        let gone =
            compute_xinfty(&s, &PhaseState::new([0.5, 0.5, 0.0], [3.0, 0.0, 0.0]), 1e-4).unwrap();
        assert!(!gone.survives());
    }

    #[test]
    fn free_profiles_are_shifts() {
        let d = Domain::unit(2);
        let g = MacGrid::new(&d, &[16, 16]).unwrap();
        let s = FlowSnapshotSeries::zero(&d, 1.0, 0.25).unwrap();
        let spec = InitialDataSpec {
            spatial: SpatialLaw::Box {
                lo: vec![0.25, 0.25],
                hi: vec![0.75, 0.75],
            },
            velocity: VelocityLaw::Delta {
                v: vec![0.0625, 0.0],
            },
            particles: 4000,
            seed: 1,
        };
        let cov = profile_change_of_variables(&spec, &s, &g, 1, 1e-4).unwrap();
        assert!((cov.mass - 1.0).abs() < 1e-9, "{}", cov.mass);
        let push = profile_pushforward(&spec, &s, &g, 1e-4).unwrap();
        assert!((push.mass - 1.0).abs() < 1e-12);
        let w = w1_cells(&cov.rho, &push.rho, true).unwrap();
        assert!(w.cost < 0.03, "{}", w.cost);
    }

    #[test]
    fn indicators_are_monotone() {
        let d = Domain::unit(2);
        let s = FlowSnapshotSeries::zero(&d, 3.0, 0.05).unwrap();
        let samples = vec![
            PhaseState::new([0.5, 0.5, 0.0], [0.1, 0.0, 0.0]),
            PhaseState::new([0.5, 0.5, 0.0], [2.0, 0.0, 0.0]),
        ];
        let r = indicator_limit_check(&s, &samples, &[0.1, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.monotone_fraction, 1.0);
        assert_eq!(r.indicators[0], vec![true; 4]);
        assert!(r.indicators[1][0]);
        assert!(!r.indicators[1][3]);
    }
}
