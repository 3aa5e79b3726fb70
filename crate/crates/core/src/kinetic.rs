//! Weighted particles for the Vlasov equation with drag `u − v`, absorbing
//! walls, moment deposition and the Brinkman force.
//!
//! Weights are held as integer multiples of `2^-50`, so moving mass between
//! the alive set and the absorption ledger is exact.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmap::{
    backward_to_origin, drag_step, exit_within_step, FlowSnapshotSeries, PhaseState, StepFrame,
    VectorField,
};
use crate::geometry::{norm, to_point, Domain, PhaseBoundaryClass, Point, ZERO};
use crate::grid::{flat_index, visit_stencil, CellField, FaceField, MacGrid};

/// Weight quantum: total mass 1 is `2^50` units.
pub const MASS_UNITS: u64 = 1 << 50;
const UNIT: f64 = 1.0 / MASS_UNITS as f64;

pub fn units_to_mass(units: u64) -> f64 {
    units as f64 * UNIT
}

/// Volume of the `d`-ball of radius `r`.
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    match dim {
        2 => std::f64::consts::PI * r * r,
        _ => 4.0 / 3.0 * std::f64::consts::PI * r * r * r,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialLaw {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityLaw {
    /// Uniform on `|v| < radius`.
    Ball { radius: f64 },
    /// Uniform on `inner ≤ |v| ≤ outer`.
    Annulus { inner: f64, outer: f64 },
    /// All particles at one velocity (no density).
    Delta { v: Vec<f64> },
    /// Mass `alpha` from `low`, `1 − alpha` from `high`, stratified.
    Mixture {
        alpha: f64,
        low: Box<VelocityLaw>,
        high: Box<VelocityLaw>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDataSpec {
    pub spatial: SpatialLaw,
    pub velocity: VelocityLaw,
    pub particles: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SpatialLaw {
    fn validate(&self, domain: &Domain) -> Result<()> {
        let d = domain.dim();
        match self {
            SpatialLaw::Ball { center, radius } => {
                if center.len() != d || !(*radius > 0.0) {
                    return Err(Error::validation(
                        "spatial ball needs a d-vector centre and positive radius",
                    ));
                }
                if domain.distance_to_boundary(&to_point(center)) - radius <= 0.0 {
                    return Err(Error::validation(
                        "spatial support is not inside the domain",
                    ));
                }
            }
            SpatialLaw::Box { lo, hi } => {
                if lo.len() != d || hi.len() != d {
                    return Err(Error::validation("spatial box corners must have length d"));
                }
                for a in 0..d {
                    if !(lo[a] < hi[a] && lo[a] >= domain.lo()[a] && hi[a] <= domain.hi()[a]) {
                        return Err(Error::validation(
                            "spatial support is not inside the domain",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn sample(&self, dim: usize, rng: &mut ChaCha8Rng) -> Point {
        match self {
            SpatialLaw::Ball { center, radius } => {
                let mut p = uniform_ball(dim, *radius, rng);
                for a in 0..dim {
                    p[a] += center[a];
                }
                p
            }
            SpatialLaw::Box { lo, hi } => {
                let mut p = ZERO;
                for a in 0..dim {
                    p[a] = lo[a] + (hi[a] - lo[a]) * rng.random::<f64>();
                }
                p
            }
        }
    }

    pub fn density(&self, dim: usize, x: &Point) -> f64 {
        match self {
            SpatialLaw::Ball { center, radius } => {
                let r = norm(&crate::geometry::sub(x, &to_point(center)));
                if r < *radius {
                    1.0 / ball_volume(dim, *radius)
                } else {
                    0.0
                }
            }
            SpatialLaw::Box { lo, hi } => {
                let mut vol = 1.0;
                for a in 0..dim {
                    if x[a] < lo[a] || x[a] >= hi[a] {
                        return 0.0;
                    }
                    vol *= hi[a] - lo[a];
                }
                1.0 / vol
            }
        }
    }

    /// Bounding box of the support.
    pub fn bounds(&self, dim: usize) -> (Point, Point) {
        let (mut lo, mut hi) = (ZERO, ZERO);
        match self {
            SpatialLaw::Ball { center, radius } => {
                for a in 0..dim {
                    lo[a] = center[a] - radius;
                    hi[a] = center[a] + radius;
                }
            }
            SpatialLaw::Box { lo: l, hi: h } => {
                for a in 0..dim {
                    lo[a] = l[a];
                    hi[a] = h[a];
                }
            }
        }
        (lo, hi)
    }
}

fn uniform_ball(dim: usize, radius: f64, rng: &mut ChaCha8Rng) -> Point {
    uniform_annulus(dim, 0.0, radius, rng)
}

fn uniform_annulus(dim: usize, inner: f64, outer: f64, rng: &mut ChaCha8Rng) -> Point {
    let mut dir = ZERO;
    loop {
        for a in 0..dim {
            dir[a] = rng.sample(StandardNormal);
        }
        if norm(&dir) > 1e-12 {
            break;
        }
    }
    let n = norm(&dir);
    let p = dim as f64;
    let u: f64 = rng.random();
    let r = (inner.powf(p) + u * (outer.powf(p) - inner.powf(p))).powf(1.0 / p);
    let r = r.clamp(inner, outer);
    let mut out = ZERO;
    for a in 0..dim {
        out[a] = dir[a] / n * r;
    }
    out
}

impl VelocityLaw {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            VelocityLaw::Ball { radius } if *radius > 0.0 && radius.is_finite() => Ok(()),
            VelocityLaw::Annulus { inner, outer }
                if 0.0 <= *inner && inner < outer && outer.is_finite() =>
            {
                Ok(())
            }
            VelocityLaw::Delta { v } if v.len() == dim && v.iter().all(|c| c.is_finite()) => Ok(()),
            VelocityLaw::Mixture { alpha, low, high } if (0.0..=1.0).contains(alpha) => {
                if matches!(**low, VelocityLaw::Mixture { .. })
                    || matches!(**high, VelocityLaw::Mixture { .. })
                {
                    return Err(Error::validation(
                        "nested velocity mixtures are not supported",
                    ));
                }
                low.validate(dim)?;
                high.validate(dim)
            }
            _ => Err(Error::validation(format!("invalid velocity law {self:?}"))),
        }
    }

    fn sample(&self, dim: usize, rng: &mut ChaCha8Rng) -> Point {
        match self {
            VelocityLaw::Ball { radius } => uniform_ball(dim, *radius, rng),
            VelocityLaw::Annulus { inner, outer } => uniform_annulus(dim, *inner, *outer, rng),
            VelocityLaw::Delta { v } => to_point(v),
            VelocityLaw::Mixture { .. } => unreachable!("mixtures are split before sampling"),
        }
    }

    /// Probability density, `None` for a point mass.
    pub fn density(&self, dim: usize, v: &Point) -> Option<f64> {
        let r = norm(v);
        match self {
            VelocityLaw::Ball { radius } => Some(if r < *radius {
                1.0 / ball_volume(dim, *radius)
            } else {
                0.0
            }),
            VelocityLaw::Annulus { inner, outer } => Some(if r >= *inner && r <= *outer {
                1.0 / (ball_volume(dim, *outer) - ball_volume(dim, *inner))
            } else {
                0.0
            }),
            VelocityLaw::Delta { .. } => None,
            VelocityLaw::Mixture { alpha, low, high } => {
                Some(alpha * low.density(dim, v)? + (1.0 - alpha) * high.density(dim, v)?)
            }
        }
    }

    /// Largest speed in the support.
    pub fn max_speed(&self) -> f64 {
        match self {
            VelocityLaw::Ball { radius } => *radius,
            VelocityLaw::Annulus { outer, .. } => *outer,
            VelocityLaw::Delta { v } => v.iter().map(|c| c * c).sum::<f64>().sqrt(),
            VelocityLaw::Mixture { low, high, .. } => low.max_speed().max(high.max_speed()),
        }
    }

    /// Bounding box of the support, `(lo, hi)`.
    pub fn bounds(&self, dim: usize) -> (Point, Point) {
        if let VelocityLaw::Delta { v } = self {
            let p = to_point(v);
            return (p, p);
        }
        let r = self.max_speed();
        let (mut lo, mut hi) = (ZERO, ZERO);
        for a in 0..dim {
            lo[a] = -r;
            hi[a] = r;
        }
        (lo, hi)
    }
}

impl InitialDataSpec {
    pub fn validate(&self, domain: &Domain) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::validation("particle count must be positive"));
        }
        self.spatial.validate(domain)?;
        self.velocity.validate(domain.dim())
    }

    /// Phase-space density of `f₀` (total mass 1), `None` for singular laws.
    pub fn density(&self, dim: usize, x: &Point, v: &Point) -> Option<f64> {
        let rx = self.spatial.density(dim, x);
        if rx == 0.0 {
            return self.velocity.density(dim, v).map(|_| 0.0);
        }
        self.velocity.density(dim, v).map(|rv| rx * rv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionRecord {
    pub t_exit: f64,
    pub x: Point,
    pub v: Point,
    pub units: u64,
    pub class: PhaseBoundaryClass,
    pub particle: usize,
}

impl AbsorptionRecord {
    pub fn weight(&self) -> f64 {
        units_to_mass(self.units)
    }
}

/// The frozen step last applied to a particle, kept for exit back-tracking.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PendingStep {
    start: PhaseState,
    ubar: Point,
    h: f64,
    t: f64,
}

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub dim: usize,
    pub x: Vec<Point>,
    pub v: Vec<Point>,
    pub units: Vec<u64>,
    pub alive: Vec<bool>,
    /// Mixture component (0 = low / only, 1 = high).
    pub component: Vec<u8>,
    pub ledger: Vec<AbsorptionRecord>,
    pub seed: u64,
    /// Exits classified as grazing.
    pub grazing_count: usize,
    initial_units: u64,
    pending: Vec<Option<PendingStep>>,
}

/// Split `total` units as evenly as possible over `n` slots.
fn split_units(total: u64, n: usize) -> Vec<u64> {
    if n == 0 {
        return Vec::new();
    }
    let base = total / n as u64;
    let extra = (total % n as u64) as usize;
    (0..n).map(|i| base + u64::from(i < extra)).collect()
}

pub fn sample_initial(spec: &InitialDataSpec, domain: &Domain) -> Result<ParticleEnsemble> {
    spec.validate(domain)?;
    let dim = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.particles;
    // (law, component, units)
    let groups: Vec<(&VelocityLaw, u8, Vec<u64>)> = match &spec.velocity {
        VelocityLaw::Mixture { alpha, low, high } => {
            let low_units = (alpha * MASS_UNITS as f64).round() as u64;
            let high_units = MASS_UNITS - low_units;
            let mut n_low = ((alpha * n as f64).round() as usize).min(n);
            if low_units > 0 && n_low == 0 {
                n_low = 1;
            }
            if high_units > 0 && n_low == n {
                n_low = n.saturating_sub(1);
            }
            if low_units > 0 && n_low == 0 || high_units > 0 && n - n_low == 0 {
                return Err(Error::validation(
                    "too few particles for the requested mixture",
                ));
            }
            vec![
                (low.as_ref(), 0, split_units(low_units, n_low)),
                (high.as_ref(), 1, split_units(high_units, n - n_low)),
            ]
        }
        law => vec![(law, 0, split_units(MASS_UNITS, n))],
    };
    let mut ens = ParticleEnsemble {
        dim,
        x: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        units: Vec::with_capacity(n),
        alive: Vec::with_capacity(n),
        component: Vec::with_capacity(n),
        ledger: Vec::new(),
        seed: spec.seed,
        grazing_count: 0,
        initial_units: MASS_UNITS,
        pending: Vec::new(),
    };
    for (law, comp, units) in groups {
        for w in units {
            let x = loop {
                let x = spec.spatial.sample(dim, &mut rng);
                if domain.distance_to_boundary(&x) > 0.0 {
                    break x;
                }
            };
            ens.x.push(x);
            ens.v.push(law.sample(dim, &mut rng));
            ens.units.push(w);
            ens.alive.push(true);
            ens.component.push(comp);
        }
    }
    ens.pending = vec![None; ens.len()];
    Ok(ens)
}

impl ParticleEnsemble {
    /// Ensemble from explicit states and weights (weights are rounded to the
    /// unit quantum).
    pub fn from_states(dim: usize, states: &[(Point, Point, f64)]) -> Self {
        let units: Vec<u64> = states
            .iter()
            .map(|s| (s.2 * MASS_UNITS as f64).round() as u64)
            .collect();
        let total = units.iter().sum();
        let n = states.len();
        ParticleEnsemble {
            dim,
            x: states.iter().map(|s| s.0).collect(),
            v: states.iter().map(|s| s.1).collect(),
            units,
            alive: vec![true; n],
            component: vec![0; n],
            ledger: Vec::new(),
            seed: 0,
            grazing_count: 0,
            initial_units: total,
            pending: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        units_to_mass(self.units[i])
    }

    pub fn alive_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.alive[i])
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn initial_units(&self) -> u64 {
        self.initial_units
    }

    pub fn alive_units(&self) -> u64 {
        self.alive_indices().map(|i| self.units[i]).sum()
    }

    pub fn absorbed_units(&self) -> u64 {
        self.ledger.iter().map(|r| r.units).sum()
    }

    pub fn initial_mass(&self) -> f64 {
        units_to_mass(self.initial_units)
    }

    pub fn mass_alive(&self) -> f64 {
        units_to_mass(self.alive_units())
    }

    pub fn mass_absorbed(&self) -> f64 {
        units_to_mass(self.absorbed_units())
    }

    /// Alive mass per mixture component.
    pub fn component_mass(&self, comp: u8) -> f64 {
        units_to_mass(
            self.alive_indices()
                .filter(|&i| self.component[i] == comp)
                .map(|i| self.units[i])
                .sum(),
        )
    }

    /// `Σ w |v|^α` over alive particles.
    pub fn velocity_moment(&self, alpha: f64) -> f64 {
        self.alive_indices()
            .map(|i| {
                let s = norm(&self.v[i]);
                let p = if alpha == 0.0 { 1.0 } else { s.powf(alpha) };
                self.weight(i) * p
            })
            .sum()
    }

    /// Largest `|x − centre|` over alive particles.
    pub fn support_radius(&self, centre: &Point) -> f64 {
        self.alive_indices()
            .map(|i| norm(&crate::geometry::sub(&self.x[i], centre)))
            .fold(0.0, f64::max)
    }
}

/// Advance every alive particle by `dt` in the field `u`, starting at time `t`.
/// Crossings are resolved by [`absorb`].
pub fn push_particles(ens: &mut ParticleEnsemble, u: &dyn VectorField, t: f64, dt: f64) {
    let dim = ens.dim;
    let field = |x: &Point| u.eval(x);
    let results: Vec<Option<(PhaseState, StepFrame)>> = (0..ens.len())
        .into_par_iter()
        .with_min_len(256)
        .map(|i| {
            if !ens.alive[i] {
                return None;
            }
            Some(drag_step(
                dim,
                &field,
                &PhaseState::new(ens.x[i], ens.v[i]),
                dt,
            ))
        })
        .collect();
    for (i, r) in results.into_iter().enumerate() {
        if let Some((next, frame)) = r {
            ens.pending[i] = Some(PendingStep {
                start: PhaseState::new(ens.x[i], ens.v[i]),
                ubar: frame.ubar,
                h: dt,
                t,
            });
            ens.x[i] = next.x;
            ens.v[i] = next.v;
        }
    }
}

/// Move particles whose last step crossed `∂Ω` to the ledger, with the exit
/// point found on the frozen in-step path. Returns the number absorbed.
pub fn absorb(ens: &mut ParticleEnsemble, domain: &Domain) -> usize {
    let hits: Vec<Option<(f64, PhaseState)>> = (0..ens.len())
        .into_par_iter()
        .with_min_len(256)
        .map(|i| {
            let p = ens.pending[i]?;
            if !ens.alive[i] {
                return None;
            }
            exit_within_step(domain, &p.start, &p.ubar, p.h)
                .map(|(tau, z)| (p.t + tau, z))
                .or_else(|| {
                    (domain.distance_to_boundary(&ens.x[i]) <= 0.0)
                        .then(|| (p.t + p.h, PhaseState::new(ens.x[i], ens.v[i])))
                })
        })
        .collect();
    let mut count = 0;
    for (i, hit) in hits.into_iter().enumerate() {
        ens.pending[i] = None;
        let Some((t_exit, z)) = hit else { continue };
        let class = domain
            .classify_phase(&z.x, &z.v)
            .unwrap_or(PhaseBoundaryClass::Outgoing);
        if class == PhaseBoundaryClass::Grazing {
            ens.grazing_count += 1;
        }
        ens.alive[i] = false;
        ens.ledger.push(AbsorptionRecord {
            t_exit,
            x: z.x,
            v: z.v,
            units: ens.units[i],
            class,
            particle: i,
        });
        ens.x[i] = z.x;
        ens.v[i] = z.v;
        count += 1;
    }
    count
}

/// Deposited moments on the fluid grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticMoments {
    /// Cell-centred `ρ_f`.
    pub rho: CellField,
    /// Cell-centred `j_f` components.
    pub j: Vec<CellField>,
    /// `ρ_f` and `j_f` on the faces of each component, for the force.
    pub rho_face: FaceField,
    pub j_face: FaceField,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub m6: f64,
    /// `(α, M_α)` for any extra requested exponents.
    pub extra: Vec<(f64, f64)>,
    pub n_q: Option<f64>,
}

impl KineticMoments {
    pub fn sup_rho(&self) -> f64 {
        self.rho.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn sup_j(&self) -> f64 {
        (0..self.rho.data.len())
            .map(|k| {
                self.j
                    .iter()
                    .map(|c| c.data[k] * c.data[k])
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Mass-conserving cell-centred stencil: weight beyond the outermost centres
/// stays in the boundary cell.
fn clamped_axis(grid: &MacGrid, axis: usize, x: f64) -> [(usize, f64); 2] {
    if axis >= grid.dim {
        return [(0, 1.0), (0, 0.0)];
    }
    let n = grid.n[axis];
    let s = (x - grid.lo[axis]) / grid.h[axis] - 0.5;
    if s <= 0.0 {
        [(0, 1.0), (0, 0.0)]
    } else if s >= (n - 1) as f64 {
        [(n - 1, 1.0), (n - 1, 0.0)]
    } else {
        let i0 = (s.floor() as usize).min(n - 2);
        let t = s - i0 as f64;
        [(i0, 1.0 - t), (i0 + 1, t)]
    }
}

/// Cloud-in-cell deposition of `ρ_f`, `j_f` and the velocity moments.
pub fn deposit_moments(
    ens: &ParticleEnsemble,
    grid: &MacGrid,
    alphas: &[f64],
    q: Option<f64>,
) -> KineticMoments {
    let dim = grid.dim;
    let inv_vol = 1.0 / grid.cell_volume();
    let cs = grid.cell_shape();
    let mut rho = CellField::zeros(*grid);
    let mut j: Vec<CellField> = (0..dim).map(|_| CellField::zeros(*grid)).collect();
    let mut rho_face = FaceField::zeros(*grid);
    let mut j_face = FaceField::zeros(*grid);
    for i in ens.alive_indices() {
        let w = ens.weight(i);
        let (x, v) = (&ens.x[i], &ens.v[i]);
        let st = [
            clamped_axis(grid, 0, x[0]),
            clamped_axis(grid, 1, x[1]),
            clamped_axis(grid, 2, x[2]),
        ];
        for &(a, wa) in &st[0] {
            for &(b, wb) in &st[1] {
                for &(c, wc) in &st[2] {
                    let wt = wa * wb * wc;
                    if wt == 0.0 {
                        continue;
                    }
                    let k = flat_index(&cs, [a, b, c]);
                    rho.data[k] += w * wt * inv_vol;
                    for (comp, jc) in j.iter_mut().enumerate() {
                        jc.data[k] += w * v[comp] * wt * inv_vol;
                    }
                }
            }
        }
        for comp in 0..dim {
            let fs = grid.face_shape(comp);
            let st = grid.stencil(Some(comp), x);
            let (rf, jf) = (&mut rho_face.comps[comp], &mut j_face.comps[comp]);
            visit_stencil(&fs, &st, |k, wt| {
                rf[k] += w * wt * inv_vol;
                jf[k] += w * v[comp] * wt * inv_vol;
            });
        }
    }
    rho_face.zero_boundary();
    j_face.zero_boundary();
    KineticMoments {
        rho,
        j,
        rho_face,
        j_face,
        m0: ens.velocity_moment(0.0),
        m1: ens.velocity_moment(1.0),
        m2: ens.velocity_moment(2.0),
        m6: ens.velocity_moment(6.0),
        extra: alphas
            .iter()
            .map(|&a| (a, ens.velocity_moment(a)))
            .collect(),
        n_q: q.map(|q| estimate_nq(ens, q, 512)),
    }
}

/// `F = j_f − ρ_f u` on the faces; zero on the walls.
pub fn brinkman_force(moments: &KineticMoments, u: &FaceField) -> FaceField {
    let mut f = moments.j_face.clone();
    for (a, comp) in f.comps.iter_mut().enumerate() {
        for (k, val) in comp.iter_mut().enumerate() {
            *val -= moments.rho_face.comps[a][k] * u.comps[a][k];
        }
    }
    f.zero_boundary();
    f
}

/// `sup (1 + |v|^q) f̂(x, v)` over (at most `max_queries`) alive particles,
/// with `f̂` a truncated-Gaussian kernel density estimate in phase space.
/// Infinite when some phase-space coordinate has no spread.
pub fn estimate_nq(ens: &ParticleEnsemble, q: f64, max_queries: usize) -> f64 {
    let dim = ens.dim;
    let big_d = 2 * dim;
    let idx: Vec<usize> = ens.alive_indices().collect();
    if idx.is_empty() {
        return 0.0;
    }
    let total: f64 = idx.iter().map(|&i| ens.weight(i)).sum();
    let coord = |i: usize, c: usize| {
        if c < dim {
            ens.x[i][c]
        } else {
            ens.v[i][c - dim]
        }
    };
    let mut bw = [0.0; 6];
    let sum_w2: f64 = idx.iter().map(|&i| (ens.weight(i) / total).powi(2)).sum();
    let n_eff = 1.0 / sum_w2;
    let factor = (4.0 / ((big_d as f64 + 2.0) * n_eff)).powf(1.0 / (big_d as f64 + 4.0));
    for (c, b) in bw.iter_mut().enumerate().take(big_d) {
        let mean: f64 = idx
            .iter()
            .map(|&i| ens.weight(i) * coord(i, c))
            .sum::<f64>()
            / total;
        let var: f64 = idx
            .iter()
            .map(|&i| ens.weight(i) * (coord(i, c) - mean).powi(2))
            .sum::<f64>()
            / total;
        let sd = var.sqrt();
        if !(sd > 1e-14) {
            return f64::INFINITY;
        }
        *b = sd * factor;
    }
    let cut = 3.0;
    let key = |z: &[f64; 6]| -> Vec<i64> {
        (0..big_d)
            .map(|c| (z[c] / (cut * bw[c])).floor() as i64)
            .collect()
    };
    let point = |i: usize| {
        let mut z = [0.0; 6];
        for (c, zc) in z.iter_mut().enumerate().take(big_d) {
            *zc = coord(i, c);
        }
        z
    };
    let mut bins: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for &i in &idx {
        bins.entry(key(&point(i))).or_default().push(i);
    }
    // truncated Gaussian normalisation per axis
    let trunc = erf(cut / std::f64::consts::SQRT_2);
    let norm_c: f64 = (0..big_d)
        .map(|c| 1.0 / (bw[c] * (2.0 * std::f64::consts::PI).sqrt() * trunc))
        .product();
    let stride = idx.len().div_ceil(max_queries.max(1));
    let queries: Vec<usize> = idx.iter().step_by(stride).copied().collect();
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(big_d as u32))
        .map(|mut k| {
            (0..big_d)
                .map(|_| {
                    let o = (k % 3) as i64 - 1;
                    k /= 3;
                    o
                })
                .collect()
        })
        .collect();
    queries
        .par_iter()
        .map(|&qi| {
            let zq = point(qi);
            let kq = key(&zq);
            let mut dens = 0.0;
            for off in &offsets {
                let nb: Vec<i64> = kq.iter().zip(off).map(|(a, b)| a + b).collect();
                let Some(list) = bins.get(&nb) else { continue };
                for &i in list {
                    let zi = point(i);
                    let mut e = 0.0;
                    let mut inside = true;
                    for c in 0..big_d {
                        let u = (zq[c] - zi[c]) / bw[c];
                        if u.abs() > cut {
                            inside = false;
                            break;
                        }
                        e += u * u;
                    }
                    if inside {
                        dens += ens.weight(i) * (-0.5 * e).exp();
                    }
                }
            }
            (1.0 + norm(&ens.v[qi]).powf(q)) * dens * norm_c
        })
        .reduce(|| 0.0, f64::max)
}

/// Rational approximation of erf, absolute error below 1.5e-7.
fn erf(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.3275911 * x.abs());
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    if x >= 0.0 {
        y
    } else {
        -y
    }
}

/// `f(t, x, v) = e^{d t} f₀(Z_{0,t}(x, v))` on `O^t`, zero elsewhere.
pub fn representation_eval(
    f0: &InitialDataSpec,
    series: &FlowSnapshotSeries,
    t: f64,
    x: &Point,
    v: &Point,
) -> Result<f64> {
    let dim = series.domain().dim();
    let Some(z0) = backward_to_origin(series, t, &PhaseState::new(*x, *v))? else {
        return Ok(0.0);
    };
    let dens = f0.density(dim, &z0.x, &z0.v).ok_or_else(|| {
        Error::validation("representation formula needs a velocity law with a density")
    })?;
    Ok((dim as f64 * (t - series.start())).exp() * dens)
}

/// `∫∫ f(t, x, v) dx dv` on a lattice of `x_nodes` per axis over the domain
/// and `v_nodes` per axis over `[-vmax, vmax]^d`. Node `i` on an axis sits at
/// `(i + offset)` cells; `offset` holds one fraction per phase axis
/// (0.5 everywhere is the midpoint rule).
pub fn representation_mass(
    f0: &InitialDataSpec,
    series: &FlowSnapshotSeries,
    t: f64,
    x_nodes: usize,
    v_nodes: usize,
    vmax: f64,
    offset: &[f64],
) -> Result<f64> {
    let domain = series.domain();
    let dim = domain.dim();
    if x_nodes == 0 || v_nodes == 0 || !(vmax > 0.0) {
        return Err(Error::validation(
            "representation quadrature needs nodes and a positive speed bound",
        ));
    }
    if offset.len() != 2 * dim || offset.iter().any(|o| !(0.0..1.0).contains(o)) {
        return Err(Error::validation(
            "lattice offset needs 2d fractions in [0, 1)",
        ));
    }
    let len = domain.lengths();
    let hx: Vec<f64> = (0..dim).map(|a| len[a] / x_nodes as f64).collect();
    let hv = 2.0 * vmax / v_nodes as f64;
    let nx = x_nodes.pow(dim as u32);
    let nv = v_nodes.pow(dim as u32);
    let node = |mut k: usize, n: usize, f: &dyn Fn(usize, usize) -> f64| -> Point {
        let mut p = ZERO;
        for a in (0..dim).rev() {
            p[a] = f(a, k % n);
            k /= n;
        }
        p
    };
    let cell = (0..dim).map(|a| hx[a] * hv).product::<f64>();
    let per_x: Vec<f64> = (0..nx)
        .into_par_iter()
        .map(|kx| {
            let x = node(kx, x_nodes, &|a, i| {
                domain.lo()[a] + (i as f64 + offset[a]) * hx[a]
            });
            let mut acc = 0.0;
            for kv in 0..nv {
                let v = node(kv, v_nodes, &|a, i| {
                    -vmax + (i as f64 + offset[dim + a]) * hv
                });
                acc += representation_eval(f0, series, t, &x, &v)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(per_x.iter().sum::<f64>() * cell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowmap::ZeroField;

    #[test]
    fn two_particle_moments() {
        let ens = ParticleEnsemble::from_states(
            2,
            &[
                ([0.3, 0.3, 0.0], [1.0, 0.0, 0.0], 0.5),
                ([0.6, 0.6, 0.0], [0.0, 2.0, 0.0], 0.5),
            ],
        );
        let g = MacGrid::new(&Domain::unit(2), &[8, 8]).unwrap();
        let m = deposit_moments(&ens, &g, &[], None);
        assert_eq!(m.m1, 1.5);
        assert_eq!(m.m2, 2.5);
        assert!((m.rho.integral() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn brinkman_arithmetic() {
        let g = MacGrid::new(&Domain::unit(2), &[4, 4]).unwrap();
        let mut m = deposit_moments(&ParticleEnsemble::from_states(2, &[]), &g, &[], None);
        let k = flat_index(&g.face_shape(0), [2, 1, 0]);
        m.rho_face.comps[0][k] = 2.0;
        m.j_face.comps[0][k] = 1.0;
        let mut u = FaceField::zeros(g);
        u.comps[0][k] = 0.25;
        let f = brinkman_force(&m, &u);
        assert_eq!(f.comps[0][k], 0.5);
        let f0 = brinkman_force(&m, &FaceField::zeros(g));
        assert_eq!(f0.comps[0][k], 1.0);
    }

    #[test]
    fn sampling_respects_supports_and_mixture_split() {
        let d = Domain::unit(2);
        let spec = InitialDataSpec {
            spatial: SpatialLaw::Ball {
                center: vec![0.5, 0.5],
                radius: 0.2,
            },
            velocity: VelocityLaw::Mixture {
                alpha: 0.3,
                low: Box::new(VelocityLaw::Ball { radius: 0.1 }),
                high: Box::new(VelocityLaw::Annulus {
                    inner: 3.0,
                    outer: 6.0,
                }),
            },
            particles: 1000,
            seed: 7,
        };
        let ens = sample_initial(&spec, &d).unwrap();
        assert_eq!(
            ens.component_mass(0),
            units_to_mass((0.3 * MASS_UNITS as f64).round() as u64)
        );
        assert_eq!(ens.mass_alive(), 1.0);
        for i in 0..ens.len() {
            assert!(norm(&crate::geometry::sub(&ens.x[i], &[0.5, 0.5, 0.0])) < 0.2);
            let s = norm(&ens.v[i]);
            if ens.component[i] == 0 {
                assert!(s < 0.1);
            } else {
                assert!((3.0..=6.0).contains(&s));
            }
        }
        let again = sample_initial(&spec, &d).unwrap();
        assert_eq!(ens.x, again.x);
    }

    #[test]
    fn rejects_support_outside() {
        let spec = InitialDataSpec {
            spatial: SpatialLaw::Ball {
                center: vec![0.9, 0.5],
                radius: 0.2,
            },
            velocity: VelocityLaw::Ball { radius: 1.0 },
            particles: 10,
            seed: 0,
        };
        assert!(matches!(
            sample_initial(&spec, &Domain::unit(2)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn absorb_locates_exit_point() {
        let d = Domain::unit(2);
        let mut ens =
            ParticleEnsemble::from_states(2, &[([0.99, 0.5, 0.0], [10.0, 0.0, 0.0], 1.0)]);
        push_particles(&mut ens, &ZeroField, 0.0, 0.1);
        assert_eq!(absorb(&mut ens, &d), 1);
        let r = ens.ledger[0];
        assert!((r.x[0] - 1.0).abs() < 1e-8);
        assert_eq!(r.class, PhaseBoundaryClass::Outgoing);
        assert_eq!(
            ens.alive_units() + ens.absorbed_units(),
            ens.initial_units()
        );
    }

    #[test]
    fn slow_particles_stay() {
        let d = Domain::unit(2);
        let mut ens = ParticleEnsemble::from_states(
            2,
            &[
                ([0.5, 0.5, 0.0], [1e-3, 0.0, 0.0], 0.5),
                ([0.4, 0.6, 0.0], [0.0, -1e-3, 0.0], 0.5),
            ],
        );
        for k in 0..10 {
            push_particles(&mut ens, &ZeroField, k as f64 * 0.1, 0.1);
            assert_eq!(absorb(&mut ens, &d), 0);
        }
    }

    #[test]
    fn nq_is_finite_for_spread_data_and_infinite_for_monokinetic() {
        let d = Domain::unit(2);
        let spec = InitialDataSpec {
            spatial: SpatialLaw::Ball {
                center: vec![0.5, 0.5],
                radius: 0.2,
            },
            velocity: VelocityLaw::Ball { radius: 1.0 },
            particles: 4000,
            seed: 3,
        };
        let ens = sample_initial(&spec, &d).unwrap();
        let nq = estimate_nq(&ens, 2.0, 256);
        // true sup of (1+|v|^2) f0 is 2/(π·0.04·π)
        let exact = 2.0 / (std::f64::consts::PI * 0.04 * std::f64::consts::PI);
        assert!(
            nq.is_finite() && nq > 0.2 * exact && nq < 3.0 * exact,
            "{nq} vs {exact}"
        );
        let mono = InitialDataSpec {
            velocity: VelocityLaw::Delta { v: vec![0.0, 0.0] },
            ..spec
        };
        assert!(estimate_nq(&sample_initial(&mono, &d).unwrap(), 2.0, 64).is_infinite());
    }

    #[test]
    fn representation_free_flight() {
        let d = Domain::unit(2);
        let spec = InitialDataSpec {
            spatial: SpatialLaw::Ball {
                center: vec![0.5, 0.5],
                radius: 0.2,
            },
            velocity: VelocityLaw::Ball { radius: 1.0 },
            particles: 1,
            seed: 0,
        };
        let s = FlowSnapshotSeries::zero(&d, 1.0, 0.01).unwrap();
        let (x, v) = ([0.6, 0.5, 0.0], [0.1, 0.0, 0.0]);
        let t: f64 = 0.5;
        let got = representation_eval(&spec, &s, t, &x, &v).unwrap();
        let x0 = [x[0] + (1.0 - t.exp()) * v[0], 0.5, 0.0];
        let v0 = [t.exp() * v[0], 0.0, 0.0];
        let want = (2.0 * t).exp() * spec.density(2, &x0, &v0).unwrap();
        assert!((got - want).abs() < 1e-12 * want);
        let at0 = representation_eval(&spec, &s, 0.0, &x, &v).unwrap();
        assert_eq!(at0, spec.density(2, &x, &v).unwrap());
    }
}
