//! Characteristics of `Ẋ = V, V̇ = Pu − V` on all of phase space, replayed
//! against stored velocity snapshots.
//!
//! One step of length `h` freezes `ū = Pu(X̃)` at a midpoint predictor
//! `X̃ = x + (1 − e^{−h/2}) v + (h/2 − 1 + e^{−h/2}) Pu(x)` and then applies the
//! exact solution of the frozen system. With `u ≡ 0` or `u` constant the step
//! is exact; in general it is second order. Particle pushes use the very same
//! function, so replay reproduces particle paths bitwise.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluid::fluid_norms;
use crate::geometry::{extend_field, Domain, PhaseBoundaryClass, Point, ZERO};
use crate::grid::FaceField;

/// A velocity field defined on all of `R^d`.
pub trait VectorField: Send + Sync {
    fn eval(&self, x: &Point) -> Point;
    /// `sup |u|`.
    fn sup_norm(&self) -> f64;
    /// `sup |∇u|` (Frobenius).
    fn grad_sup_norm(&self) -> f64;
}

pub struct ZeroField;

impl VectorField for ZeroField {
    fn eval(&self, _x: &Point) -> Point {
        ZERO
    }
    fn sup_norm(&self) -> f64 {
        0.0
    }
    fn grad_sup_norm(&self) -> f64 {
        0.0
    }
}

/// Zero extension of a solver velocity.
pub struct GridVelocity {
    domain: Domain,
    u: FaceField,
    sup: f64,
    grad_sup: f64,
}

impl GridVelocity {
    pub fn new(domain: &Domain, u: FaceField) -> Self {
        let n = fluid_norms(&u);
        GridVelocity {
            domain: domain.clone(),
            u,
            sup: n.linf,
            grad_sup: n.grad_linf,
        }
    }

    pub fn field(&self) -> &FaceField {
        &self.u
    }
}

impl VectorField for GridVelocity {
    fn eval(&self, x: &Point) -> Point {
        extend_field(&self.domain, &self.u, x)
    }
    fn sup_norm(&self) -> f64 {
        self.sup
    }
    fn grad_sup_norm(&self) -> f64 {
        self.grad_sup
    }
}

/// Closure-defined field. Norms are estimated on a lattice over the domain;
/// the closure is responsible for its own behaviour outside it.
pub struct AnalyticField<F> {
    f: F,
    sup: f64,
    grad_sup: f64,
}

impl<F: Fn(&Point) -> Point + Send + Sync> AnalyticField<F> {
    pub fn new(domain: &Domain, f: F) -> Self {
        let d = domain.dim();
        let m: usize = if d == 2 { 65 } else { 17 };
        let (lo, len) = (*domain.lo(), domain.lengths());
        let eta = 1e-6 * domain.diameter();
        let mut sup = 0.0f64;
        let mut grad_sup = 0.0f64;
        let total = m.pow(d as u32);
        for k in 0..total {
            let mut x = ZERO;
            let mut r = k;
            for a in 0..d {
                x[a] = lo[a] + len[a] * (r % m) as f64 / (m - 1) as f64;
                r /= m;
            }
            sup = sup.max(crate::geometry::norm(&f(&x)));
            let g = gradient_of(&f, d, &x, eta);
            let fro: f64 = g.iter().flatten().map(|v| v * v).sum();
            grad_sup = grad_sup.max(fro.sqrt());
        }
        AnalyticField { f, sup, grad_sup }
    }
}

impl<F: Fn(&Point) -> Point + Send + Sync> VectorField for AnalyticField<F> {
    fn eval(&self, x: &Point) -> Point {
        (self.f)(x)
    }
    fn sup_norm(&self) -> f64 {
        self.sup
    }
    fn grad_sup_norm(&self) -> f64 {
        self.grad_sup
    }
}

/// Centred-difference gradient, `g[i][j] = ∂_j u_i`.
fn gradient_of(f: &impl Fn(&Point) -> Point, dim: usize, x: &Point, eta: f64) -> [[f64; 3]; 3] {
    let mut g = [[0.0; 3]; 3];
    for j in 0..dim {
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += eta;
        xm[j] -= eta;
        let (up, um) = (f(&xp), f(&xm));
        for i in 0..dim {
            g[i][j] = (up[i] - um[i]) / (2.0 * eta);
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: Point,
    pub v: Point,
}

impl PhaseState {
    pub fn new(x: Point, v: Point) -> Self {
        PhaseState { x, v }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.v).all(|c| c.is_finite())
    }
}

/// Exact solution of the frozen system after time `tau`.
#[inline]
pub fn advance(dim: usize, z: &PhaseState, ubar: &Point, tau: f64) -> PhaseState {
    let e = (-tau).exp();
    let a = -(-tau).exp_m1();
    let b = tau - a;
    let mut out = PhaseState::new(ZERO, ZERO);
    for i in 0..dim {
        out.x[i] = z.x[i] + a * z.v[i] + b * ubar[i];
        out.v[i] = e * z.v[i] + a * ubar[i];
    }
    out
}

/// Frozen field value and its evaluation point for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepFrame {
    pub ubar: Point,
    pub mid: Point,
}

#[inline]
fn frame_from(dim: usize, field: &dyn Fn(&Point) -> Point, z: &PhaseState, h: f64) -> StepFrame {
    let u0 = field(&z.x);
    let mid = advance(dim, z, &u0, 0.5 * h).x;
    StepFrame {
        ubar: field(&mid),
        mid,
    }
}

/// One forward step; returns the new state and the frozen frame.
pub fn drag_step(
    dim: usize,
    field: &dyn Fn(&Point) -> Point,
    z: &PhaseState,
    h: f64,
) -> (PhaseState, StepFrame) {
    let frame = frame_from(dim, field, z, h);
    (advance(dim, z, &frame.ubar, h), frame)
}

/// Invert [`drag_step`]: fixed-point iteration on the frozen value.
pub fn drag_step_back(
    dim: usize,
    field: &dyn Fn(&Point) -> Point,
    end: &PhaseState,
    h: f64,
) -> (PhaseState, StepFrame) {
    let e_inv = h.exp();
    let a = -(-h).exp_m1();
    let b = h - a;
    let recover = |ubar: &Point| {
        let mut z = PhaseState::new(ZERO, ZERO);
        for i in 0..dim {
            z.v[i] = e_inv * (end.v[i] - a * ubar[i]);
            z.x[i] = end.x[i] - a * z.v[i] - b * ubar[i];
        }
        z
    };
    let mut ubar = field(&end.x);
    let mut frame = StepFrame { ubar, mid: end.x };
    for _ in 0..200 {
        let z = recover(&ubar);
        frame = frame_from(dim, field, &z, h);
        let change = (0..dim).fold(0.0f64, |m, i| m.max((frame.ubar[i] - ubar[i]).abs()));
        let scale = 1.0 + (0..dim).fold(0.0f64, |m, i| m.max(ubar[i].abs()));
        ubar = frame.ubar;
        if change <= 1e-16 * scale {
            break;
        }
    }
    (
        recover(&ubar),
        StepFrame {
            ubar,
            mid: frame.mid,
        },
    )
}

/// First crossing of `∂Ω` along the frozen in-step path within `(0, h]`,
/// located by sampling and bisection to `1e-10` in time.
pub fn exit_within_step(
    domain: &Domain,
    z: &PhaseState,
    ubar: &Point,
    h: f64,
) -> Option<(f64, PhaseState)> {
    const SAMPLES: usize = 8;
    let dim = domain.dim();
    let mut prev = 0.0;
    for k in 1..=SAMPLES {
        let tau = h * k as f64 / SAMPLES as f64;
        let zk = advance(dim, z, ubar, tau);
        if domain.distance_to_boundary(&zk.x) <= 0.0 {
            let (mut lo, mut hi) = (prev, tau);
            while hi - lo > 1e-10 {
                let m = 0.5 * (lo + hi);
                if domain.distance_to_boundary(&advance(dim, z, ubar, m).x) <= 0.0 {
                    hi = m;
                } else {
                    lo = m;
                }
            }
            return Some((hi, advance(dim, z, ubar, hi)));
        }
        prev = tau;
    }
    None
}

#[derive(Clone)]
pub struct Snapshot {
    pub t: f64,
    pub dt: f64,
    pub field: Arc<dyn VectorField>,
}

impl std::fmt::Debug for Snapshot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Snapshot")
            .field("t", &self.t)
            .field("dt", &self.dt)
            .finish()
    }
}

/// Stored velocity history, piecewise constant in time: entry `k` acts on
/// `[t_k, t_k + dt_k)`.
#[derive(Debug, Clone)]
pub struct FlowSnapshotSeries {
    domain: Domain,
    entries: Vec<Snapshot>,
    max_substep: f64,
}

/// One constant-field piece of a replay.
struct Piece<'a> {
    field: &'a dyn VectorField,
    h: f64,
    count: usize,
}

impl FlowSnapshotSeries {
    /// Empty series starting at `t0`. Each entry is replayed with substeps
    /// no longer than `max_substep`.
    pub fn new(domain: &Domain, max_substep: f64) -> Result<Self> {
        if !(max_substep > 0.0 && max_substep.is_finite()) {
            return Err(Error::validation("max_substep must be positive"));
        }
        Ok(FlowSnapshotSeries {
            domain: domain.clone(),
            entries: Vec::new(),
            max_substep,
        })
    }

    /// Zero field on `[0, t_end]`.
    pub fn zero(domain: &Domain, t_end: f64, max_substep: f64) -> Result<Self> {
        let mut s = Self::new(domain, max_substep)?;
        s.push(0.0, t_end, Arc::new(ZeroField))?;
        Ok(s)
    }

    /// Sample a time-dependent field at `t0 + k dt`, `k < steps`.
    pub fn sample(
        domain: &Domain,
        t0: f64,
        dt: f64,
        steps: usize,
        mut field_at: impl FnMut(f64) -> Arc<dyn VectorField>,
    ) -> Result<Self> {
        let mut s = Self::new(domain, dt)?;
        let mut t = t0;
        for _ in 0..steps {
            s.push(t, dt, field_at(t))?;
            t += dt;
        }
        Ok(s)
    }

    pub fn push(&mut self, t: f64, dt: f64, field: Arc<dyn VectorField>) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite() && t.is_finite()) {
            return Err(Error::validation("snapshot interval must be positive"));
        }
        if let Some(last) = self.entries.last() {
            let end = last.t + last.dt;
            if (t - end).abs() > 1e-12 * (1.0 + end.abs()) {
                return Err(Error::validation(format!(
                    "snapshot at t={t} does not continue the series ending at {end}"
                )));
            }
        }
        self.entries.push(Snapshot { t, dt, field });
        Ok(())
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn entries(&self) -> &[Snapshot] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.entries.first().map_or(0.0, |e| e.t)
    }

    pub fn end(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.t + e.dt)
    }

    pub fn max_substep(&self) -> f64 {
        self.max_substep
    }

    fn check_cover(&self, from: f64, to: f64) -> Result<()> {
        let (a, b) = if from <= to { (from, to) } else { (to, from) };
        let slack = 1e-12 * (1.0 + self.end().abs());
        if self.entries.is_empty() || a < self.start() - slack || b > self.end() + slack {
            return Err(Error::Coverage {
                start: self.start(),
                end: self.end(),
                from,
                to,
            });
        }
        Ok(())
    }

    /// `∫ sup|u|` and `∫ sup|∇u|` over `[a, b]`.
    pub fn budgets(&self, a: f64, b: f64) -> (f64, f64) {
        let (mut s, mut g) = (0.0, 0.0);
        for e in &self.entries {
            let lo = e.t.max(a);
            let hi = (e.t + e.dt).min(b);
            if hi > lo {
                s += (hi - lo) * e.field.sup_norm();
                g += (hi - lo) * e.field.grad_sup_norm();
            }
        }
        (s, g)
    }

    fn index_forward(&self, t: f64) -> usize {
        let k = self.entries.partition_point(|e| e.t <= t);
        k.saturating_sub(1)
    }

    fn index_backward(&self, t: f64) -> usize {
        let k = self.entries.partition_point(|e| e.t < t);
        k.saturating_sub(1)
    }

    fn pieces(&self, t: f64, s: f64) -> Vec<Piece<'_>> {
        let mut out = Vec::new();
        if t == s || self.entries.is_empty() {
            return out;
        }
        let split = |len: f64| -> (f64, usize) {
            let count = ((len / self.max_substep) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            (len / count as f64, count)
        };
        if s > t {
            let mut cur = t;
            let mut k = self.index_forward(t);
            while cur < s && k < self.entries.len() {
                let e = &self.entries[k];
                let end = e.t + e.dt;
                let len = if cur == e.t && s >= end {
                    e.dt
                } else {
                    s.min(end) - cur
                };
                if len > 0.0 {
                    let (h, count) = split(len);
                    out.push(Piece {
                        field: e.field.as_ref(),
                        h,
                        count,
                    });
                }
                cur = if s >= end { end } else { s };
                k += 1;
            }
        } else {
            let mut cur = t;
            let mut k = self.index_backward(t) as isize;
            while cur > s && k >= 0 {
                let e = &self.entries[k as usize];
                let end = e.t + e.dt;
                let len = if cur == end && s <= e.t {
                    e.dt
                } else {
                    cur - s.max(e.t)
                };
                if len > 0.0 {
                    let (h, count) = split(len);
                    out.push(Piece {
                        field: e.field.as_ref(),
                        h,
                        count,
                    });
                }
                cur = if s <= e.t { e.t } else { s };
                k -= 1;
            }
        }
        out
    }

    fn eta(&self) -> f64 {
        1e-6 * self.domain.diameter()
    }
}

/// `Z_{s,t}(z)`: the state at time `s` of the characteristic through `z` at `t`.
pub fn flow(series: &FlowSnapshotSeries, t: f64, s: f64, z: &PhaseState) -> Result<PhaseState> {
    series.check_cover(t, s)?;
    let dim = series.domain.dim();
    let mut cur = *z;
    let forward = s > t;
    for p in series.pieces(t, s) {
        let f = |x: &Point| p.field.eval(x);
        for _ in 0..p.count {
            cur = if forward {
                drag_step(dim, &f, &cur, p.h).0
            } else {
                drag_step_back(dim, &f, &cur, p.h).0
            };
        }
    }
    Ok(cur)
}

fn frozen_propagator(dim: usize, g: &[[f64; 3]; 3], h: f64) -> DMatrix<f64> {
    let n = 2 * dim;
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..dim {
        a[(i, dim + i)] = 1.0;
        a[(dim + i, dim + i)] = -1.0;
        for j in 0..dim {
            a[(dim + i, j)] = g[i][j];
        }
    }
    (a * h).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub z: PhaseState,
    /// `D_z Z`, rows and columns ordered `(x, v)`.
    pub jacobian: DMatrix<f64>,
    pub det: f64,
}

/// Flow with its phase-space Jacobian. Each step multiplies by the
/// exponential of the frozen linearisation `[[0, I], [∇Pu, −I]] h` (inverse
/// when going backwards), so `det` follows `e^{−d(s−t)}` exactly.
pub fn phase_jacobian(
    series: &FlowSnapshotSeries,
    t: f64,
    s: f64,
    z: &PhaseState,
) -> Result<VariationalState> {
    jacobian_walk(series, t, s, z, |_, _| {})
}

fn jacobian_walk(
    series: &FlowSnapshotSeries,
    t: f64,
    s: f64,
    z: &PhaseState,
    mut on_step: impl FnMut(f64, &VariationalState),
) -> Result<VariationalState> {
    series.check_cover(t, s)?;
    let dim = series.domain.dim();
    let eta = series.eta();
    let mut state = VariationalState {
        z: *z,
        jacobian: DMatrix::identity(2 * dim, 2 * dim),
        det: 1.0,
    };
    let forward = s > t;
    let mut time = t;
    on_step(time, &state);
    for p in series.pieces(t, s) {
        let f = |x: &Point| p.field.eval(x);
        for _ in 0..p.count {
            let (next, frame) = if forward {
                drag_step(dim, &f, &state.z, p.h)
            } else {
                drag_step_back(dim, &f, &state.z, p.h)
            };
            let g = gradient_of(&f, dim, &frame.mid, eta);
            let m = frozen_propagator(dim, &g, if forward { p.h } else { -p.h });
            state.jacobian = m * &state.jacobian;
            state.z = next;
            time += if forward { p.h } else { -p.h };
            state.det = state.jacobian.determinant();
            on_step(time, &state);
        }
    }
    state.det = state.jacobian.determinant();
    Ok(state)
}

/// Row of a trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub s: f64,
    pub z: PhaseState,
    pub det: f64,
}

pub fn trajectory(
    series: &FlowSnapshotSeries,
    t: f64,
    s: f64,
    z: &PhaseState,
) -> Result<Vec<TrajectoryRow>> {
    let mut rows = Vec::new();
    jacobian_walk(series, t, s, z, |time, st| {
        rows.push(TrajectoryRow {
            s: time,
            z: st.z,
            det: st.det,
        })
    })?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExitOutcome {
    Exit {
        tau: f64,
        state: PhaseState,
        class: PhaseBoundaryClass,
    },
    /// No crossing up to the horizon; carries the state at the horizon.
    ExceedsHorizon { state: PhaseState },
}

impl ExitOutcome {
    pub fn exited(&self) -> bool {
        matches!(self, ExitOutcome::Exit { .. })
    }
}

/// `τ⁺` of the characteristic starting at `z` at time `t0`, searched up to `t0 + horizon`.
pub fn exit_time_forward(
    series: &FlowSnapshotSeries,
    t0: f64,
    z: &PhaseState,
    horizon: f64,
) -> Result<ExitOutcome> {
    let domain = &series.domain;
    if domain.distance_to_boundary(&z.x) <= 0.0 {
        return Err(Error::validation(
            "exit time needs an interior starting point",
        ));
    }
    let t_end = t0 + horizon;
    series.check_cover(t0, t_end)?;
    let dim = domain.dim();
    let mut cur = *z;
    let mut time = t0;
    for p in series.pieces(t0, t_end) {
        let f = |x: &Point| p.field.eval(x);
        for _ in 0..p.count {
            let (next, frame) = drag_step(dim, &f, &cur, p.h);
            if let Some((tau, at)) = exit_within_step(domain, &cur, &frame.ubar, p.h) {
                let class = domain.classify_phase(&at.x, &at.v)?;
                return Ok(ExitOutcome::Exit {
                    tau: time + tau,
                    state: at,
                    class,
                });
            }
            cur = next;
            time += p.h;
        }
    }
    Ok(ExitOutcome::ExceedsHorizon { state: cur })
}

/// Backward characteristic from `(t, z)` to time 0; `None` if it leaves `Ω`
/// (the point is not in `O^t`). Times before the series start are frozen.
pub fn backward_to_origin(
    series: &FlowSnapshotSeries,
    t: f64,
    z: &PhaseState,
) -> Result<Option<PhaseState>> {
    let domain = &series.domain;
    if domain.distance_to_boundary(&z.x) <= 0.0 {
        return Ok(None);
    }
    series.check_cover(series.start(), t)?;
    let dim = domain.dim();
    let mut cur = *z;
    for p in series.pieces(t, series.start()) {
        let f = |x: &Point| p.field.eval(x);
        for _ in 0..p.count {
            let (prev, frame) = drag_step_back(dim, &f, &cur, p.h);
            if domain.distance_to_boundary(&prev.x) <= 0.0
                || exit_within_step(domain, &prev, &frame.ubar, p.h).is_some()
            {
                return Ok(None);
            }
            cur = prev;
        }
    }
    Ok(Some(cur))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Straightening {
    pub gamma: Point,
    /// `D_v Γ`, `d × d`.
    pub jacobian: DMatrix<f64>,
    pub det: f64,
    pub budget: f64,
}

/// `Γ_{t,x}(v) = V(0; t, x, v)` and `det D_v Γ`. Refuses when
/// `∫₀^t ‖∇u‖_{L∞} ≥ δ`.
pub fn straightening_map(
    series: &FlowSnapshotSeries,
    t: f64,
    x: &Point,
    v: &Point,
    delta: f64,
) -> Result<Straightening> {
    let (_, budget) = series.budgets(series.start(), t);
    if budget >= delta {
        return Err(Error::validation(format!(
            "gradient budget {budget:e} is not below delta {delta:e}"
        )));
    }
    let dim = series.domain.dim();
    let st = phase_jacobian(series, t, series.start(), &PhaseState::new(*x, *v))?;
    let jv = st.jacobian.view((dim, dim), (dim, dim)).into_owned();
    let det = jv.determinant();
    Ok(Straightening {
        gamma: st.z.v,
        jacobian: jv,
        det,
        budget,
    })
}
