//! Per-step records of the monitored quantities, running time integrals and
//! the smallness and moment-interpolation audits.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluid::FluidNorms;
use crate::grid::MacGrid;
use crate::kinetic::{KineticMoments, ParticleEnsemble};

/// One row of `timeseries.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "D")]
    pub dissipation: f64,
    pub mass_alive: f64,
    pub mass_absorbed: f64,
    #[serde(rename = "M1")]
    pub m1: f64,
    #[serde(rename = "M2")]
    pub m2: f64,
    #[serde(rename = "M6")]
    pub m6: f64,
    #[serde(rename = "N_q")]
    pub n_q: f64,
    pub sup_rho: f64,
    pub sup_j: f64,
    pub u_l2: f64,
    pub grad_u_l2: f64,
    pub u_linf: f64,
    pub grad_u_linf: f64,
    /// `∫₀^t ‖∇u‖_{L∞}`.
    pub int_grad_u_linf: f64,
    /// `∫₀^t ‖F‖²_{L²}`.
    pub int_force_l2_sq: f64,
    /// `E(t) + ∫₀^t D − E(0)`.
    pub energy_residual: f64,
}

pub const TIMESERIES_COLUMNS: [&str; 18] = [
    "t",
    "E",
    "D",
    "mass_alive",
    "mass_absorbed",
    "M1",
    "M2",
    "M6",
    "N_q",
    "sup_rho",
    "sup_j",
    "u_l2",
    "grad_u_l2",
    "u_linf",
    "grad_u_linf",
    "int_grad_u_linf",
    "int_force_l2_sq",
    "energy_residual",
];

impl DiagnosticsRecord {
    pub fn values(&self) -> [f64; 18] {
        [
            self.t,
            self.energy,
            self.dissipation,
            self.mass_alive,
            self.mass_absorbed,
            self.m1,
            self.m2,
            self.m6,
            self.n_q,
            self.sup_rho,
            self.sup_j,
            self.u_l2,
            self.grad_u_l2,
            self.u_linf,
            self.grad_u_linf,
            self.int_grad_u_linf,
            self.int_force_l2_sq,
            self.energy_residual,
        ]
    }
}

/// 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Running trapezoid integrals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulators {
    pub e0: Option<f64>,
    pub int_grad_u_linf: f64,
    /// `∫₁^t ‖∇u‖_{L∞}`, the budget anchored at `t = 1`.
    pub int_grad_u_linf_from1: f64,
    pub int_u_linf: f64,
    pub int_force_l2_sq: f64,
    pub int_dissipation: f64,
    pub int_sqrt_energy: f64,
    last: Option<Sample>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct Sample {
    t: f64,
    grad: f64,
    u: f64,
    f2: f64,
    d: f64,
    sqrt_e: f64,
}

fn trapezoid(t0: f64, t1: f64, a: f64, b: f64) -> f64 {
    0.5 * (t1 - t0) * (a + b)
}

/// Trapezoid restricted to `[1, ∞)`, interpolating linearly inside the step.
fn trapezoid_from1(t0: f64, t1: f64, a: f64, b: f64) -> f64 {
    if t1 <= 1.0 {
        0.0
    } else if t0 >= 1.0 {
        trapezoid(t0, t1, a, b)
    } else {
        let s = (1.0 - t0) / (t1 - t0);
        trapezoid(1.0, t1, a + s * (b - a), b)
    }
}

impl Accumulators {
    fn advance(&mut self, s: Sample) {
        if let Some(p) = self.last {
            self.int_grad_u_linf += trapezoid(p.t, s.t, p.grad, s.grad);
            self.int_grad_u_linf_from1 += trapezoid_from1(p.t, s.t, p.grad, s.grad);
            self.int_u_linf += trapezoid(p.t, s.t, p.u, s.u);
            self.int_force_l2_sq += trapezoid(p.t, s.t, p.f2, s.f2);
            self.int_dissipation += trapezoid(p.t, s.t, p.d, s.d);
            self.int_sqrt_energy += trapezoid(p.t, s.t, p.sqrt_e, s.sqrt_e);
        }
        self.last = Some(s);
    }
}

/// Quantities gathered by the run loop at one record time.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    pub t: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub norms: FluidNorms,
    pub force_l2_sq: f64,
    pub ensemble: &'a ParticleEnsemble,
    pub moments: &'a KineticMoments,
}

/// Build the record for this step and advance the integrals.
pub fn record_step(inp: &StepInputs<'_>, acc: &mut Accumulators) -> DiagnosticsRecord {
    let e0 = *acc.e0.get_or_insert(inp.energy);
    acc.advance(Sample {
        t: inp.t,
        grad: inp.norms.grad_linf,
        u: inp.norms.linf,
        f2: inp.force_l2_sq,
        d: inp.dissipation,
        sqrt_e: inp.energy.max(0.0).sqrt(),
    });
    let m = inp.moments;
    DiagnosticsRecord {
        t: inp.t,
        energy: inp.energy,
        dissipation: inp.dissipation,
        mass_alive: inp.ensemble.mass_alive(),
        mass_absorbed: inp.ensemble.mass_absorbed(),
        m1: m.m1,
        m2: m.m2,
        m6: m.m6,
        n_q: m.n_q.unwrap_or(f64::NAN),
        sup_rho: m.sup_rho(),
        sup_j: m.sup_j(),
        u_l2: inp.norms.l2,
        grad_u_l2: inp.norms.grad_l2,
        u_linf: inp.norms.linf,
        grad_u_linf: inp.norms.grad_linf,
        int_grad_u_linf: acc.int_grad_u_linf,
        int_force_l2_sq: acc.int_force_l2_sq,
        energy_residual: inp.energy + acc.int_dissipation - e0,
    }
}

pub fn write_timeseries<W: Write>(out: W, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::parse(format!("timeseries write: {e}"));
    w.write_record(TIMESERIES_COLUMNS).map_err(io)?;
    for r in records {
        w.write_record(r.values().iter().map(|v| fmt17(*v)))
            .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::parse(format!("timeseries write: {e}")))?;
    Ok(())
}

pub fn read_timeseries<R: Read>(input: R) -> Result<Vec<DiagnosticsRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(format!("timeseries header: {e}")))?
        .clone();
    if headers.iter().ne(TIMESERIES_COLUMNS.iter().copied()) {
        return Err(Error::parse(
            "timeseries header does not match the record layout",
        ));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::parse(format!("timeseries row: {e}"))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConstants {
    pub c1: f64,
    pub c2: f64,
    pub delta: f64,
}

impl Default for MonitorConstants {
    fn default() -> Self {
        MonitorConstants {
            c1: 1.0,
            c2: 1.0,
            delta: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallnessReport {
    pub e0: f64,
    pub u0_h1: f64,
    pub nq0: f64,
    pub m6_0: f64,
    pub c1: f64,
    pub c2: f64,
    pub delta: f64,
    /// `1/√(8C₁C₂) − (‖∇u₀‖² + C₁∫‖F‖²)` at the end of the history.
    pub strong_existence_margin: f64,
    /// Largest recorded time with a nonnegative strong-existence margin.
    pub strong_existence_time: f64,
    /// `δ − ∫₀^t ‖∇u‖_{L∞}`.
    pub budget_margin_from0: f64,
    /// `δ − ∫₁^t ‖∇u‖_{L∞}`.
    pub budget_margin_from1: f64,
    /// First time each budget is exceeded; `None` means not within the horizon.
    pub t_star_from0: Option<f64>,
    pub t_star_from1: Option<f64>,
    /// `∫‖F‖² / (sup‖ρ_f‖_{L∞} E(0))`.
    pub brinkman_factor: f64,
    pub brinkman_pass: bool,
}

/// Margins computed from the recorded series only.
pub fn smallness_report(
    history: &[DiagnosticsRecord],
    consts: &MonitorConstants,
) -> Result<SmallnessReport> {
    let first = history
        .first()
        .ok_or_else(|| Error::validation("empty history"))?;
    let last = history.last().unwrap();
    let threshold = 1.0 / (8.0 * consts.c1 * consts.c2).sqrt();
    let g0 = first.grad_u_l2 * first.grad_u_l2;
    let margin_at = |r: &DiagnosticsRecord| threshold - (g0 + consts.c1 * r.int_force_l2_sq);
    let mut strong_time = f64::NEG_INFINITY;
    for r in history {
        if margin_at(r) >= 0.0 {
            strong_time = r.t;
        } else {
            break;
        }
    }
    // budget anchored at t = 1, rebuilt from the per-step gradient norms
    let mut from1 = 0.0;
    let mut t_star_from1 = None;
    let mut t_star_from0 = None;
    for w in history.windows(2) {
        from1 += trapezoid_from1(w[0].t, w[1].t, w[0].grad_u_linf, w[1].grad_u_linf);
        if t_star_from1.is_none() && from1 > consts.delta {
            t_star_from1 = Some(w[1].t);
        }
    }
    for r in history {
        if r.int_grad_u_linf > consts.delta {
            t_star_from0 = Some(r.t);
            break;
        }
    }
    let sup_rho = history.iter().map(|r| r.sup_rho).fold(0.0, f64::max);
    let denom = sup_rho * first.energy;
    let brinkman_factor = if last.int_force_l2_sq == 0.0 {
        0.0
    } else if denom > 0.0 {
        last.int_force_l2_sq / denom
    } else {
        f64::INFINITY
    };
    Ok(SmallnessReport {
        e0: first.energy,
        u0_h1: (first.u_l2 * first.u_l2 + g0).sqrt(),
        nq0: first.n_q,
        m6_0: first.m6,
        c1: consts.c1,
        c2: consts.c2,
        delta: consts.delta,
        strong_existence_margin: margin_at(last),
        strong_existence_time: strong_time,
        budget_margin_from0: consts.delta - last.int_grad_u_linf,
        budget_margin_from1: consts.delta - from1,
        t_star_from0,
        t_star_from1,
        brinkman_factor,
        brinkman_pass: brinkman_factor <= 1.1,
    })
}

/// Surface area of the unit sphere in `R^d`.
fn sphere_area(dim: usize) -> f64 {
    if dim == 2 {
        2.0 * std::f64::consts::PI
    } else {
        4.0 * std::f64::consts::PI
    }
}

/// Constant in `m_ℓ ≤ (‖g‖∞ + 1) C m_k^{(ℓ+d)/(k+d)}`, from optimising the
/// split `m_ℓ ≤ ‖g‖∞ ω_d R^{ℓ+d}/(ℓ+d) + R^{ℓ−k} m_k` over `R`.
pub fn interpolation_constant(dim: usize, k: f64, l: f64) -> f64 {
    let d = dim as f64;
    if k == l {
        return 1.0;
    }
    let theta = (k - l) / (k + d);
    let c = (k - l) / (l + d);
    (sphere_area(dim) / (l + d)).powf(theta) * (c.powf(1.0 - theta) + c.powf(-theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationAudit {
    pub k: f64,
    pub l: f64,
    pub constant: f64,
    pub g_sup: f64,
    /// Largest `m_ℓ / [(‖g‖∞+1) C m_k^{(ℓ+d)/(k+d)}]` over spatial cells.
    pub max_ratio: f64,
}

/// Phase-space histogram of the alive particles: `cells` per spatial axis,
/// `bins` per velocity axis over `[-V, V]^d` with `V` the largest speed.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseHistogram {
    pub dim: usize,
    pub cells: usize,
    pub bins: usize,
    pub vmax: f64,
    pub cell_volume: f64,
    pub bin_volume: f64,
    /// `density[cell][bin]`, sparse per cell.
    pub density: Vec<Vec<(usize, f64)>>,
}

impl PhaseHistogram {
    pub fn build(ens: &ParticleEnsemble, grid: &MacGrid, cells: usize, bins: usize) -> Self {
        let dim = ens.dim;
        let vmax = ens
            .alive_indices()
            .map(|i| ens.v[i][..dim].iter().fold(0.0f64, |m, c| m.max(c.abs())))
            .fold(0.0f64, f64::max)
            .max(1e-300)
            * (1.0 + 1e-12);
        let hx: Vec<f64> = (0..dim)
            .map(|a| grid.h[a] * grid.n[a] as f64 / cells as f64)
            .collect();
        let hv = 2.0 * vmax / bins as f64;
        let cell_volume: f64 = hx.iter().product();
        let bin_volume = hv.powi(dim as i32);
        let ncell = cells.pow(dim as u32);
        let mut maps: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); ncell];
        for i in ens.alive_indices() {
            let (mut c, mut b) = (0usize, 0usize);
            for a in 0..dim {
                let ci =
                    (((ens.x[i][a] - grid.lo[a]) / hx[a]).floor().max(0.0) as usize).min(cells - 1);
                let bi = (((ens.v[i][a] + vmax) / hv).floor().max(0.0) as usize).min(bins - 1);
                c = c * cells + ci;
                b = b * bins + bi;
            }
            *maps[c].entry(b).or_default() += ens.weight(i) / (cell_volume * bin_volume);
        }
        PhaseHistogram {
            dim,
            cells,
            bins,
            vmax,
            cell_volume,
            bin_volume,
            density: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
        }
    }

    pub fn sup(&self) -> f64 {
        self.density
            .iter()
            .flatten()
            .map(|p| p.1)
            .fold(0.0, f64::max)
    }

    /// `∫ g |v|^α dv` per spatial cell, 3-point Gauss-Legendre per bin axis.
    pub fn local_moment(&self, cell: usize, alpha: f64) -> f64 {
        const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let hv = 2.0 * self.vmax / self.bins as f64;
        let mut total = 0.0;
        for &(b, g) in &self.density[cell] {
            let mut idx = [0usize; 3];
            let mut r = b;
            for a in (0..self.dim).rev() {
                idx[a] = r % self.bins;
                r /= self.bins;
            }
            let mut acc = 0.0;
            let npts = 3usize.pow(self.dim as u32);
            for q in 0..npts {
                let mut r = q;
                let mut w = 1.0;
                let mut s2 = 0.0;
                for a in 0..self.dim {
                    let k = r % 3;
                    r /= 3;
                    let centre = -self.vmax + (idx[a] as f64 + 0.5) * hv;
                    let v = centre + 0.5 * hv * NODES[k];
                    w *= 0.5 * WEIGHTS[k];
                    s2 += v * v;
                }
                acc += w * if alpha == 0.0 {
                    1.0
                } else {
                    s2.powf(0.5 * alpha)
                };
            }
            total += g * acc * self.bin_volume;
        }
        total
    }
}

pub fn moment_interpolation_audit(
    hist: &PhaseHistogram,
    k: f64,
    l: f64,
) -> Result<InterpolationAudit> {
    if !(0.0 <= l && l <= k) {
        return Err(Error::validation("moment audit needs 0 <= l <= k"));
    }
    let d = hist.dim as f64;
    let constant = interpolation_constant(hist.dim, k, l);
    let g_sup = hist.sup();
    let mut max_ratio = 0.0f64;
    for cell in 0..hist.density.len() {
        if hist.density[cell].is_empty() {
            continue;
        }
        let ml = hist.local_moment(cell, l);
        let mk = hist.local_moment(cell, k);
        let rhs = (g_sup + 1.0) * constant * mk.powf((l + d) / (k + d));
        if rhs > 0.0 {
            max_ratio = max_ratio.max(ml / rhs);
        } else if ml > 0.0 {
            max_ratio = f64::INFINITY;
        }
    }
    Ok(InterpolationAudit {
        k,
        l,
        constant,
        g_sup,
        max_ratio,
    })
}
