//! Run configuration, read from TOML.
//!
//! ```toml
//! [domain]
//! dim = 2
//! lo = [0.0, 0.0]
//! hi = [1.0, 1.0]
//! ref_point_a = [0.5, 0.5]
//!
//! [fluid]
//! resolution = [64, 64]
//! dt = 0.01
//! initial = { kind = "mode", amplitude = 0.02 }
//!
//! [particles]
//! count = 20000
//! seed = 1
//!
//! [initial]
//! spatial = { kind = "ball", center = [0.5, 0.5], radius = 0.2 }
//! velocity = { kind = "ball", radius = 0.1 }
//!
//! [run]
//! horizon = 5.0
//! output_dir = "out"
//! ```
//!
//! `[initial]` may be replaced by a `[scenario]` table.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::MonitorConstants;
use crate::error::{Error, Result};
use crate::fluid::{FluidParams, InitialVelocity};
use crate::geometry::Domain;
use crate::kinetic::{InitialDataSpec, SpatialLaw, VelocityLaw};
use crate::scenarios::{ScenarioConfig, ScenarioParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub dim: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub ref_point_a: Vec<f64>,
}

impl DomainConfig {
    pub fn build(&self) -> Result<Domain> {
        Domain::new(self.dim, &self.lo, &self.hi, &self.ref_point_a)
    }

    pub fn unit(dim: usize) -> Self {
        DomainConfig {
            dim,
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
            ref_point_a: vec![0.5; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidConfig {
    pub resolution: Vec<usize>,
    pub dt: f64,
    #[serde(default = "default_div_tol")]
    pub div_tol: f64,
    #[serde(default = "default_poisson_tol")]
    pub poisson_tol: f64,
    #[serde(default = "default_max_iter")]
    pub poisson_max_iter: usize,
    /// Keep `u` at its initial value and skip the fluid solve.
    #[serde(default)]
    pub frozen: bool,
    #[serde(default = "default_initial_velocity")]
    pub initial: InitialVelocity,
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

fn default_initial_velocity() -> InitialVelocity {
    InitialVelocity::Zero
}

impl FluidConfig {
    pub fn new(resolution: Vec<usize>, dt: f64) -> Self {
        FluidConfig {
            resolution,
            dt,
            div_tol: default_div_tol(),
            poisson_tol: default_poisson_tol(),
            poisson_max_iter: default_max_iter(),
            frozen: false,
            initial: InitialVelocity::Zero,
        }
    }

    pub fn params(&self) -> FluidParams {
        FluidParams {
            resolution: self.resolution.clone(),
            dt: self.dt,
            div_tol: self.div_tol,
            poisson_tol: self.poisson_tol,
            poisson_max_iter: self.poisson_max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig {
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub spatial: SpatialLaw,
    pub velocity: VelocityLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: f64,
    /// Steps between stored flow snapshots; 0 disables them.
    #[serde(default = "one")]
    pub snapshot_stride: usize,
    /// Write the snapshots as field dumps (needed by `replay`).
    #[serde(default = "yes")]
    pub dump_snapshots: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default = "yes")]
    pub deterministic: bool,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_output_dir() -> String {
    "vnslab-out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    #[serde(default = "c_one")]
    pub c1: f64,
    #[serde(default = "c_one")]
    pub c2: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    /// Steps between `N_q` estimates; 0 disables them.
    #[serde(default = "default_nq_every")]
    pub nq_every: usize,
    #[serde(default = "default_nq_queries")]
    pub nq_queries: usize,
    #[serde(default = "default_k")]
    pub moment_k: f64,
    #[serde(default)]
    pub moment_l: f64,
    #[serde(default = "default_hist_cells")]
    pub hist_cells: usize,
    #[serde(default = "default_hist_bins")]
    pub hist_bins: usize,
}

fn c_one() -> f64 {
    1.0
}

fn default_delta() -> f64 {
    0.1
}

fn default_q() -> f64 {
    4.0
}

fn default_nq_every() -> usize {
    10
}

fn default_nq_queries() -> usize {
    256
}

fn default_k() -> f64 {
    2.0
}

fn default_hist_cells() -> usize {
    8
}

fn default_hist_bins() -> usize {
    16
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            c1: 1.0,
            c2: 1.0,
            delta: default_delta(),
            q: default_q(),
            nq_every: default_nq_every(),
            nq_queries: default_nq_queries(),
            moment_k: default_k(),
            moment_l: 0.0,
            hist_cells: default_hist_cells(),
            hist_bins: default_hist_bins(),
        }
    }
}

impl MonitorConfig {
    pub fn constants(&self) -> MonitorConstants {
        MonitorConstants {
            c1: self.c1,
            c2: self.c2,
            delta: self.delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Steps between rows of `metrics.csv`; 0 disables the file.
    #[serde(default = "default_metrics_every")]
    pub every: usize,
    /// `H⁻¹` distance of `ρ_f(t)` to the long-time profile.
    #[serde(default = "yes")]
    pub hminus1: bool,
    /// Cells per axis of the coarse grid used for `W₁` between densities.
    #[serde(default = "default_w1_grid")]
    pub w1_grid: usize,
    /// Cells per axis for replayed profiles.
    #[serde(default = "default_profile_grid")]
    pub profile_grid: usize,
    /// Velocity nodes per axis for the change-of-variables profile.
    #[serde(default = "default_v_nodes")]
    pub v_nodes: usize,
}

fn default_metrics_every() -> usize {
    10
}

fn default_w1_grid() -> usize {
    16
}

fn default_profile_grid() -> usize {
    32
}

fn default_v_nodes() -> usize {
    16
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            every: default_metrics_every(),
            hminus1: true,
            w1_grid: default_w1_grid(),
            profile_grid: default_profile_grid(),
            v_nodes: default_v_nodes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub fluid: FluidConfig,
    pub particles: ParticleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioParams>,
    pub run: RunSection,
    #[serde(default)]
    pub monitors: MonitorConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::parse(e.to_string()))
    }

    /// Hex sha256 of the canonical serialisation.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(
            self.to_toml_string()?.as_bytes(),
        )))
    }

    pub fn steps(&self) -> usize {
        (self.run.horizon / self.fluid.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn scenario_config(&self, domain: &Domain) -> Result<Option<ScenarioConfig>> {
        self.scenario.as_ref().map(|p| p.build(domain)).transpose()
    }

    /// The initial data this run samples.
    pub fn initial_spec(&self, domain: &Domain) -> Result<InitialDataSpec> {
        let (spatial, velocity) = match (&self.initial, self.scenario_config(domain)?) {
            (Some(init), None) => (init.spatial.clone(), init.velocity.clone()),
            (None, Some(scn)) => {
                let s = scn.initial_spec(self.particles.count, self.particles.seed);
                (s.spatial, s.velocity)
            }
            _ => {
                return Err(Error::validation(
                    "exactly one of [initial] and [scenario] must be present",
                ))
            }
        };
        Ok(InitialDataSpec {
            spatial,
            velocity,
            particles: self.particles.count,
            seed: self.particles.seed,
        })
    }

    pub fn validate(&self) -> Result<Domain> {
        let domain = self.domain.build()?;
        if self.fluid.resolution.len() != domain.dim() {
            return Err(Error::validation("fluid resolution length must equal dim"));
        }
        self.fluid.params().validate()?;
        if !(self.run.horizon > 0.0 && self.run.horizon.is_finite()) {
            return Err(Error::validation("horizon must be positive"));
        }
        if self.run.record_every == 0 {
            return Err(Error::validation("record_every must be at least 1"));
        }
        let m = &self.monitors;
        if !(m.c1 > 0.0 && m.c2 > 0.0 && m.delta > 0.0) {
            return Err(Error::validation("monitor constants must be positive"));
        }
        if !(m.q > 1.0) {
            return Err(Error::validation("N_q exponent must exceed 1"));
        }
        if !(0.0 <= m.moment_l && m.moment_l <= m.moment_k) {
            return Err(Error::validation("moment audit needs 0 <= l <= k"));
        }
        if m.hist_cells == 0 || m.hist_bins == 0 {
            return Err(Error::validation("histogram sizes must be positive"));
        }
        let x = &self.metrics;
        if x.w1_grid < 4 || x.profile_grid < 4 || x.v_nodes == 0 {
            return Err(Error::validation(
                "metric grids need at least 4 cells and one velocity node",
            ));
        }
        self.initial_spec(&domain)?.validate(&domain)?;
        Ok(domain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[domain]
dim = 2
lo = [0.0, 0.0]
hi = [1.0, 1.0]
ref_point_a = [0.5, 0.5]

[fluid]
resolution = [16, 16]
dt = 0.01

[particles]
count = 100

[initial]
spatial = { kind = "ball", center = [0.5, 0.5], radius = 0.2 }
velocity = { kind = "ball", radius = 0.1 }

[run]
horizon = 1.0
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.steps(), 100);
        assert_eq!(cfg.monitors.delta, 0.1);
        let again = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn rejects_unknown_keys_and_missing_initial() {
        let bad = SAMPLE.replace("horizon = 1.0", "horizon = 1.0\nspeed = 3");
        assert!(matches!(
            RunConfig::from_toml_str(&bad),
            Err(Error::Parse(_))
        ));
        let mut cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        cfg.initial = None;
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }
}
