//! The three constructive regimes: confinement, escape, and a prescribed
//! asymptotic mass `α`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{
    DomainConfig, FluidConfig, MetricsConfig, MonitorConfig, ParticleConfig, RunConfig, RunSection,
};
use crate::error::{Error, Result};
use crate::fluid::InitialVelocity;
use crate::geometry::{Domain, Point};
use crate::kinetic::{units_to_mass, InitialDataSpec, SpatialLaw, VelocityLaw, MASS_UNITS};
use crate::run::{simulate, RunOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Confinement,
    Escape,
    Mixed,
}

impl ScenarioKind {
    pub fn label(self) -> &'static str {
        match self {
            ScenarioKind::Confinement => "confinement",
            ScenarioKind::Escape => "escape",
            ScenarioKind::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "confinement" => Ok(ScenarioKind::Confinement),
            "escape" => Ok(ScenarioKind::Escape),
            "mixed" => Ok(ScenarioKind::Mixed),
            _ => Err(Error::validation(format!("unknown scenario {s:?}"))),
        }
    }
}

/// Scenario block of a run config. The centre `a` is the domain's reference
/// point; unset fields take per-kind defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Velocity radius `R` (confinement only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Escape horizon `T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escape_time: Option<f64>,
}

impl ScenarioParams {
    pub fn new(kind: ScenarioKind) -> Self {
        ScenarioParams {
            kind,
            epsilon: None,
            radius: None,
            alpha: None,
            escape_time: None,
        }
    }

    pub fn build(&self, domain: &Domain) -> Result<ScenarioConfig> {
        let a = *domain.reference_point();
        let t = self.escape_time.unwrap_or(1.0);
        match self.kind {
            ScenarioKind::Confinement => build_confinement(
                domain,
                &a,
                self.epsilon.unwrap_or(0.2),
                self.radius.unwrap_or(0.1),
            ),
            ScenarioKind::Escape => build_escape(domain, &a, self.epsilon.unwrap_or(0.1), t),
            ScenarioKind::Mixed => build_mixed(
                domain,
                &a,
                self.epsilon.unwrap_or(0.2),
                self.alpha.unwrap_or(0.3),
                t,
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDerived {
    /// `d(B̄(a, ε), ∂Ω)`.
    pub gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// `ε + R + 2δ`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confinement_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    /// `(2L + ε)/(1 − e^{−T})`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escape_threshold: Option<f64>,
    /// Required `‖u‖_{L¹L∞}` bound for the escape construction, `L/8`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escape_budget: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub center: Point,
    pub dim: usize,
    pub epsilon: f64,
    /// `R` for confinement, `R₁` for mixed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_int: Option<f64>,
    /// Inner radius of the escaping annulus (`R` or `R₂`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_ext: Option<f64>,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escape_time: Option<f64>,
    pub derived: ScenarioDerived,
}

fn gap(domain: &Domain, a: &Point, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::validation("epsilon must be positive"));
    }
    let g = domain.distance_to_boundary(a) - eps;
    if !(g > 0.0) {
        return Err(Error::validation(format!(
            "ball B(a, {eps}) is not strictly inside the domain"
        )));
    }
    Ok(g)
}

fn confinement_data(gap: f64, eps: f64, r: f64) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(Error::validation("velocity radius must be positive"));
    }
    if 2.0 * r >= gap {
        return Err(Error::validation(format!(
            "confinement condition violated: 2R = {} >= gap {gap}",
            2.0 * r
        )));
    }
    let delta = 0.5 * (0.5 * gap - r);
    Ok((delta, eps + r + 2.0 * delta))
}

fn escape_data(domain: &Domain, a: &Point, eps: f64, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::validation("escape horizon must be positive"));
    }
    let l = 2.0 * domain.circumradius_about(a);
    if l <= eps {
        return Err(Error::validation("escape construction needs L > epsilon"));
    }
    Ok((l, (2.0 * l + eps) / -(-t).exp_m1()))
}

pub fn build_confinement(domain: &Domain, a: &Point, eps: f64, r: f64) -> Result<ScenarioConfig> {
    let g = gap(domain, a, eps)?;
    let (delta, radius) = confinement_data(g, eps, r)?;
    Ok(ScenarioConfig {
        kind: ScenarioKind::Confinement,
        center: *a,
        dim: domain.dim(),
        epsilon: eps,
        r_int: Some(r),
        r_ext: None,
        alpha: 1.0,
        escape_time: None,
        derived: ScenarioDerived {
            gap: g,
            delta: Some(delta),
            confinement_radius: Some(radius),
            ..Default::default()
        },
    })
}

pub fn build_escape(domain: &Domain, a: &Point, eps: f64, t: f64) -> Result<ScenarioConfig> {
    let g = gap(domain, a, eps)?;
    let (l, threshold) = escape_data(domain, a, eps, t)?;
    Ok(ScenarioConfig {
        kind: ScenarioKind::Escape,
        center: *a,
        dim: domain.dim(),
        epsilon: eps,
        r_int: None,
        r_ext: Some(1.05 * threshold),
        alpha: 0.0,
        escape_time: Some(t),
        derived: ScenarioDerived {
            gap: g,
            l: Some(l),
            escape_threshold: Some(threshold),
            escape_budget: Some(l / 8.0),
            ..Default::default()
        },
    })
}

/// `R₁ = gap/3` satisfies the confinement condition with room for a
/// positive `δ`; `R₂` is the escape radius.
pub fn build_mixed(
    domain: &Domain,
    a: &Point,
    eps: f64,
    alpha: f64,
    t: f64,
) -> Result<ScenarioConfig> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::validation("alpha must lie in [0, 1]"));
    }
    let g = gap(domain, a, eps)?;
    let r1 = g / 3.0;
    let (delta, radius) = confinement_data(g, eps, r1)?;
    let (l, threshold) = escape_data(domain, a, eps, t)?;
    let r2 = 1.05 * threshold;
    if !(r1 < r2) {
        return Err(Error::validation(
            "no feasible pair R1 < R2 for this geometry",
        ));
    }
    Ok(ScenarioConfig {
        kind: ScenarioKind::Mixed,
        center: *a,
        dim: domain.dim(),
        epsilon: eps,
        r_int: Some(r1),
        r_ext: Some(r2),
        alpha,
        escape_time: Some(t),
        derived: ScenarioDerived {
            gap: g,
            delta: Some(delta),
            confinement_radius: Some(radius),
            l: Some(l),
            escape_threshold: Some(threshold),
            escape_budget: Some(l / 8.0),
        },
    })
}

impl ScenarioConfig {
    pub fn initial_spec(&self, particles: usize, seed: u64) -> InitialDataSpec {
        let spatial = SpatialLaw::Ball {
            center: self.center[..self.dim].to_vec(),
            radius: self.epsilon,
        };
        let annulus = |r: f64| VelocityLaw::Annulus {
            inner: r,
            outer: 2.0 * r,
        };
        let velocity = match self.kind {
            ScenarioKind::Confinement => VelocityLaw::Ball {
                radius: self.r_int.unwrap(),
            },
            ScenarioKind::Escape => annulus(self.r_ext.unwrap()),
            ScenarioKind::Mixed => VelocityLaw::Mixture {
                alpha: self.alpha,
                low: Box::new(VelocityLaw::Ball {
                    radius: self.r_int.unwrap(),
                }),
                high: Box::new(annulus(self.r_ext.unwrap())),
            },
        };
        InitialDataSpec {
            spatial,
            velocity,
            particles,
            seed,
        }
    }

    /// Units of mass carried by the confined component.
    pub fn confined_units(&self) -> u64 {
        match self.kind {
            ScenarioKind::Confinement => MASS_UNITS,
            ScenarioKind::Escape => 0,
            ScenarioKind::Mixed => (self.alpha * MASS_UNITS as f64).round() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub kind: ScenarioKind,
    pub params: ScenarioConfig,
    pub derived: ScenarioDerived,
    pub predictions: BTreeMap<String, Value>,
    pub measured: BTreeMap<String, Value>,
    /// The `‖u‖_{L¹L∞}` hypothesis of the construction held on the run.
    pub budget_ok: bool,
    pub pass: bool,
}

/// Compare a finished run against the scenario's predictions.
pub fn evaluate(scn: &ScenarioConfig, out: &RunOutput) -> ScenarioReport {
    let mut predictions = BTreeMap::new();
    let mut measured = BTreeMap::new();
    let last = out.records.last();
    let int_u = last.map_or(0.0, |_| out.int_u_linf);
    let final_mass = last.map_or(f64::NAN, |r| r.mass_alive);
    let final_units = out.ensemble.alive_units();
    measured.insert("int_u_linf".into(), json!(int_u));
    measured.insert("final_mass".into(), json!(final_mass));
    measured.insert("absorbed_mass".into(), json!(out.ensemble.mass_absorbed()));
    if let Some(fit) = &out.energy_fit {
        measured.insert("energy_decay_rate".into(), json!(fit.rate));
        measured.insert("energy_decay_r_squared".into(), json!(fit.r_squared));
    }
    if let Some(p) = &out.limit_profile {
        measured.insert("limit_profile_mass".into(), json!(p.mass));
    }
    let budget_ok;
    let pass = match scn.kind {
        ScenarioKind::Confinement => {
            let radius = scn.derived.confinement_radius.unwrap();
            let delta = scn.derived.delta.unwrap();
            predictions.insert("absorbed_mass".into(), json!(0.0));
            predictions.insert("max_support_radius_bound".into(), json!(radius));
            predictions.insert("int_u_linf_bound".into(), json!(delta));
            measured.insert("max_support_radius".into(), json!(out.max_support_radius));
            budget_ok = int_u <= delta;
            out.ensemble.absorbed_units() == 0 && out.max_support_radius <= radius
        }
        ScenarioKind::Escape => {
            let budget = scn.derived.escape_budget.unwrap();
            let after = alive_after(out, scn.escape_time.unwrap());
            predictions.insert("alive_mass_after_T".into(), json!(0.0));
            predictions.insert("int_u_linf_bound".into(), json!(budget));
            measured.insert("max_alive_mass_after_T".into(), json!(after));
            budget_ok = int_u < budget;
            after == Some(0.0)
        }
        ScenarioKind::Mixed => {
            let budget = scn
                .derived
                .escape_budget
                .unwrap()
                .min(scn.derived.delta.unwrap());
            let confined = scn.confined_units();
            predictions.insert("final_mass".into(), json!(scn.alpha));
            predictions.insert(
                "final_mass_allocated".into(),
                json!(units_to_mass(confined)),
            );
            predictions.insert("int_u_linf_bound".into(), json!(budget));
            let after = alive_after(out, scn.escape_time.unwrap());
            let int_absorbed = out
                .ensemble
                .ledger
                .iter()
                .filter(|r| out.ensemble.component[r.particle] == 0)
                .count();
            measured.insert("confined_particles_absorbed".into(), json!(int_absorbed));
            measured.insert("max_alive_mass_after_T".into(), json!(after));
            budget_ok = int_u < budget;
            let reached = out
                .records
                .last()
                .is_some_and(|r| r.t >= scn.escape_time.unwrap());
            reached
                && final_units == confined
                && int_absorbed == 0
                && (final_mass - scn.alpha).abs() <= 1.0 / MASS_UNITS as f64
        }
    };
    ScenarioReport {
        kind: scn.kind,
        params: scn.clone(),
        derived: scn.derived.clone(),
        predictions,
        measured,
        budget_ok,
        pass,
    }
}

/// Largest alive mass over records at `t ≥ T`; `None` if the run stops first.
fn alive_after(out: &RunOutput, t: f64) -> Option<f64> {
    let after: Vec<f64> = out
        .records
        .iter()
        .filter(|r| r.t >= t - 1e-12)
        .map(|r| r.mass_alive)
        .collect();
    (!after.is_empty()).then(|| after.into_iter().fold(0.0, f64::max))
}

/// Full coupled run of the config's scenario and its report.
pub fn run_scenario(cfg: &RunConfig) -> Result<(ScenarioReport, RunOutput)> {
    let domain = cfg.validate()?;
    let scn = cfg
        .scenario_config(&domain)?
        .ok_or_else(|| Error::validation("config has no [scenario] block"))?;
    let out = simulate(cfg)?;
    Ok((evaluate(&scn, &out), out))
}

/// Desk-scale run config for a scenario on the unit square: 64² grid,
/// `Δt = 0.01`, `2·10⁴` particles and a small initial fluid mode.
pub fn default_run_config(kind: ScenarioKind, alpha: Option<f64>) -> RunConfig {
    let mut fluid = FluidConfig::new(vec![64, 64], 0.01);
    fluid.initial = InitialVelocity::Mode { amplitude: 0.01 };
    let horizon = match kind {
        ScenarioKind::Confinement => 8.0,
        ScenarioKind::Escape | ScenarioKind::Mixed => 2.0,
    };
    let mut params = ScenarioParams::new(kind);
    params.alpha = alpha;
    RunConfig {
        domain: DomainConfig::unit(2),
        fluid,
        particles: ParticleConfig {
            count: 20_000,
            seed: 1,
        },
        initial: None,
        scenario: Some(params),
        run: RunSection {
            horizon,
            snapshot_stride: 1,
            dump_snapshots: true,
            output_dir: format!("vnslab-{}", kind.label()),
            deterministic: true,
            record_every: 1,
        },
        monitors: MonitorConfig::default(),
        metrics: MetricsConfig::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_confinement_instance() {
        let d = Domain::unit(2);
        let c = build_confinement(&d, d.reference_point(), 0.2, 0.1).unwrap();
        assert!((c.derived.gap - 0.3).abs() < 1e-15);
        assert!((c.derived.delta.unwrap() - 0.025).abs() < 1e-15);
        assert!((c.derived.confinement_radius.unwrap() - 0.35).abs() < 1e-15);
        assert!(build_confinement(&d, d.reference_point(), 0.2, 0.2).is_err());
    }

    #[test]
    fn point_mass_limit_is_continuous() {
        let d = Domain::unit(2);
        let c = build_confinement(&d, d.reference_point(), 1e-12, 0.1).unwrap();
        assert!((c.derived.delta.unwrap() - 0.5 * (0.25 - 0.1)).abs() < 1e-12);
    }

    #[test]
    fn escape_threshold() {
        // square of side s about its centre has circumradius s/√2, so L = 1
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = Domain::new(2, &[0.0, 0.0], &[s, s], &[0.5 * s, 0.5 * s]).unwrap();
        let e = build_escape(&d, d.reference_point(), 0.1, 1.0).unwrap();
        assert!((e.derived.l.unwrap() - 1.0).abs() < 1e-12);
        assert!((e.derived.escape_threshold.unwrap() - 3.32216).abs() < 1e-5);
        assert!((e.r_ext.unwrap() - 3.48827).abs() < 5e-5);
        let far = build_escape(&d, d.reference_point(), 0.1, 60.0).unwrap();
        assert!((far.derived.escape_threshold.unwrap() - 2.1).abs() < 1e-12);
    }

    #[test]
    fn mixed_split() {
        let d = Domain::unit(2);
        let m = build_mixed(&d, d.reference_point(), 0.2, 0.3, 1.0).unwrap();
        assert!(m.r_int.unwrap() < m.r_ext.unwrap());
        assert_eq!(m.confined_units(), (0.3 * MASS_UNITS as f64).round() as u64);
        assert!((units_to_mass(m.confined_units()) - 0.3).abs() <= 1.0 / MASS_UNITS as f64);
        assert!(build_mixed(&d, d.reference_point(), 0.2, 1.5, 1.0).is_err());
    }
}
