//! The coupled time loop, artifact emission and post-hoc replay.
//!
//! Each step, in this order: deposit moments from the current ensemble and
//! form `F = j_f − ρ_f u`; record diagnostics; store the snapshot of `u`;
//! advance the fluid with `F`; push and absorb the particles with the
//! pre-step field.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    coarsen, compute_xinfty, default_tail_tolerance, deposit_points, energy_and_dissipation,
    fit_decay, hminus1_distance, profile_change_of_variables, profile_long_time,
    profile_pushforward, velocity_tail_bound, w1_cells, DecayFit, ProfileEstimate,
};
use crate::config::RunConfig;
use crate::diagnostics::{
    fmt17, moment_interpolation_audit, read_timeseries, record_step, smallness_report,
    write_timeseries, Accumulators, DiagnosticsRecord, PhaseHistogram, SmallnessReport, StepInputs,
};
use crate::error::{Error, Result};
use crate::flowmap::{FlowSnapshotSeries, GridVelocity, PhaseState, VectorField};
use crate::fluid::{FluidSolver, FluidState};
use crate::geometry::{Domain, Point, ZERO};
use crate::grid::{CellField, MacGrid};
use crate::io::{
    read_face_field, write_cell_field, write_face_field, FileLog, RunManifest, RunStatus,
    SnapshotEntry, MANIFEST_NAME,
};
use crate::kinetic::{
    absorb, brinkman_force, deposit_moments, estimate_nq, push_particles, representation_mass,
    sample_initial, InitialDataSpec, ParticleEnsemble,
};
use crate::scenarios::{evaluate, ScenarioReport};

/// One row of `metrics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: f64,
    /// `W₁(f, ρ_f ⊗ δ₀) = M₁f`.
    pub w1_monokinetic: f64,
    /// `√(2 E M₀)`.
    pub w1_bound: f64,
    pub support_radius: f64,
    pub int_u_linf: f64,
    pub int_grad_u_linf_from1: f64,
    pub moment_ratio: f64,
    pub hminus1_to_limit: f64,
    pub w1_to_limit: f64,
}

pub const METRICS_COLUMNS: [&str; 9] = [
    "t",
    "w1_monokinetic",
    "w1_bound",
    "support_radius",
    "int_u_linf",
    "int_grad_u_linf_from1",
    "moment_ratio",
    "hminus1_to_limit",
    "w1_to_limit",
];

impl MetricsRow {
    fn values(&self) -> [f64; 9] {
        [
            self.t,
            self.w1_monokinetic,
            self.w1_bound,
            self.support_radius,
            self.int_u_linf,
            self.int_grad_u_linf_from1,
            self.moment_ratio,
            self.hminus1_to_limit,
            self.w1_to_limit,
        ]
    }
}

pub fn write_metrics<W: std::io::Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::parse(e.to_string());
    w.write_record(METRICS_COLUMNS).map_err(err)?;
    for r in rows {
        w.write_record(r.values().map(fmt17)).map_err(err)?;
    }
    w.flush().map_err(|e| Error::parse(e.to_string()))
}

/// A stored snapshot: the field on `[t, t + dt)`.
#[derive(Clone)]
pub struct StoredSnapshot {
    pub t: f64,
    pub dt: f64,
    pub u: Arc<GridVelocity>,
}

pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub metrics: Vec<MetricsRow>,
    pub ensemble: ParticleEnsemble,
    pub fluid: FluidState,
    pub grid: MacGrid,
    pub snapshots: Vec<StoredSnapshot>,
    pub series: Option<FlowSnapshotSeries>,
    pub smallness: SmallnessReport,
    /// Fits over the last half of the run; `None` when the series is not
    /// positive there.
    pub energy_fit: Option<DecayFit>,
    pub w1_fit: Option<DecayFit>,
    pub hminus1_fit: Option<DecayFit>,
    /// Alive particles deposited at `X_T + V_T`.
    pub limit_profile: Option<ProfileEstimate>,
    pub int_u_linf: f64,
    pub max_support_radius: f64,
    pub max_moment_ratio: f64,
    /// Records where `M₁ > √(2 E M₀)` beyond rounding.
    pub w1_bound_violations: usize,
    pub cfl_violations: usize,
    pub max_divergence: f64,
}

/// Run summary written next to the time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub final_time: f64,
    pub initial_mass: f64,
    pub final_mass: f64,
    pub absorbed_mass: f64,
    pub absorbed_particles: usize,
    pub grazing_exits: usize,
    pub smallness: SmallnessReport,
    pub energy_fit: Option<DecayFit>,
    pub w1_fit: Option<DecayFit>,
    pub hminus1_fit: Option<DecayFit>,
    pub int_u_linf: f64,
    pub max_support_radius: f64,
    pub max_moment_ratio: f64,
    pub w1_bound_violations: usize,
    pub cfl_violations: usize,
    pub max_divergence: f64,
}

impl RunOutput {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            steps: self.records.len().saturating_sub(1),
            final_time: self.records.last().map_or(0.0, |r| r.t),
            initial_mass: self.ensemble.initial_mass(),
            final_mass: self.ensemble.mass_alive(),
            absorbed_mass: self.ensemble.mass_absorbed(),
            absorbed_particles: self.ensemble.ledger.len(),
            grazing_exits: self.ensemble.grazing_count,
            smallness: self.smallness.clone(),
            energy_fit: self.energy_fit,
            w1_fit: self.w1_fit,
            hminus1_fit: self.hminus1_fit,
            int_u_linf: self.int_u_linf,
            max_support_radius: self.max_support_radius,
            max_moment_ratio: self.max_moment_ratio,
            w1_bound_violations: self.w1_bound_violations,
            cfl_violations: self.cfl_violations,
            max_divergence: self.max_divergence,
        }
    }
}

struct DensitySample {
    t: f64,
    rho: CellField,
    coarse: CellField,
}

/// Stepwise driver for one run.
pub struct Simulation {
    cfg: RunConfig,
    domain: Domain,
    solver: FluidSolver,
    coarse: MacGrid,
    pub fluid: FluidState,
    pub ensemble: ParticleEnsemble,
    acc: Accumulators,
    pub records: Vec<DiagnosticsRecord>,
    metrics: Vec<MetricsRow>,
    densities: Vec<DensitySample>,
    snapshots: Vec<StoredSnapshot>,
    force: Option<crate::grid::FaceField>,
    step: usize,
    steps: usize,
    observed: Option<usize>,
    max_support_radius: f64,
    max_moment_ratio: f64,
    w1_bound_violations: usize,
    cfl_violations: usize,
    max_divergence: f64,
}

fn fit_last_half(t: &[f64], y: &[f64]) -> Option<DecayFit> {
    let (t0, t1) = (*t.first()?, *t.last()?);
    fit_decay(t, y, Some((t0 + 0.5 * (t1 - t0), t1))).ok()
}

impl Simulation {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let domain = cfg.validate()?;
        let spec = cfg.initial_spec(&domain)?;
        let ensemble = sample_initial(&spec, &domain)?;
        Self::with_ensemble(cfg, ensemble)
    }

    /// Start from an explicit ensemble instead of sampling the config's
    /// initial data.
    pub fn with_ensemble(cfg: &RunConfig, ensemble: ParticleEnsemble) -> Result<Self> {
        let domain = cfg.domain.build()?;
        let solver = FluidSolver::new(&domain, cfg.fluid.params())?;
        let fluid = solver.initial_state(&cfg.fluid.initial)?;
        let w = cfg.metrics.w1_grid;
        let coarse = MacGrid::new(&domain, &vec![w; domain.dim()])?;
        Ok(Simulation {
            cfg: cfg.clone(),
            domain,
            coarse,
            fluid,
            ensemble,
            acc: Accumulators::default(),
            records: Vec::new(),
            metrics: Vec::new(),
            densities: Vec::new(),
            snapshots: Vec::new(),
            force: None,
            step: 0,
            steps: cfg.steps(),
            observed: None,
            max_support_radius: 0.0,
            max_moment_ratio: 0.0,
            w1_bound_violations: 0,
            cfl_violations: 0,
            max_divergence: 0.0,
            solver,
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.fluid.dt
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.steps
    }

    pub fn solver(&self) -> &FluidSolver {
        &self.solver
    }

    /// Deposit, form the force and record at the current time.
    fn observe(&mut self) -> Result<()> {
        if self.observed == Some(self.step) {
            return Ok(());
        }
        let k = self.step;
        let t = self.time();
        let mon = &self.cfg.monitors;
        let grid = *self.solver.grid();
        let mut moments = deposit_moments(&self.ensemble, &grid, &[], None);
        if mon.nq_every > 0 && k.is_multiple_of(mon.nq_every) {
            moments.n_q = Some(estimate_nq(&self.ensemble, mon.q, mon.nq_queries));
        }
        let force = brinkman_force(&moments, &self.fluid.u);
        let centre = *self.domain.reference_point();
        let support = self.ensemble.support_radius(&centre);
        self.max_support_radius = self.max_support_radius.max(support);
        let last = k == self.steps;
        if k.is_multiple_of(self.cfg.run.record_every) || last {
            let (energy, dissipation) =
                energy_and_dissipation(&self.ensemble, &self.fluid.u, &self.domain);
            if !(energy.is_finite() && dissipation.is_finite()) {
                return Err(Error::numeric(format!("non-finite energy at t = {t}")));
            }
            let norms = self.solver.norms(&self.fluid.u);
            let rec = record_step(
                &StepInputs {
                    t,
                    energy,
                    dissipation,
                    norms,
                    force_l2_sq: force.inner(&force),
                    ensemble: &self.ensemble,
                    moments: &moments,
                },
                &mut self.acc,
            );
            let bound = (2.0 * energy * moments.m0).sqrt();
            if rec.m1 > bound * (1.0 + 1e-12) + 1e-300 {
                self.w1_bound_violations += 1;
            }
            let hist = PhaseHistogram::build(&self.ensemble, &grid, mon.hist_cells, mon.hist_bins);
            let ratio = moment_interpolation_audit(&hist, mon.moment_k, mon.moment_l)?.max_ratio;
            self.max_moment_ratio = self.max_moment_ratio.max(ratio);
            let every = self.cfg.metrics.every;
            if every > 0 && (k.is_multiple_of(every) || last) {
                self.metrics.push(MetricsRow {
                    t,
                    w1_monokinetic: rec.m1,
                    w1_bound: bound,
                    support_radius: support,
                    int_u_linf: self.acc.int_u_linf,
                    int_grad_u_linf_from1: self.acc.int_grad_u_linf_from1,
                    moment_ratio: ratio,
                    hminus1_to_limit: f64::NAN,
                    w1_to_limit: f64::NAN,
                });
                let pts: Vec<(Point, f64)> = self
                    .ensemble
                    .alive_indices()
                    .map(|i| (self.ensemble.x[i], self.ensemble.weight(i)))
                    .collect();
                self.densities.push(DensitySample {
                    t,
                    rho: moments.rho.clone(),
                    coarse: deposit_points(&self.coarse, &pts),
                });
            }
            self.records.push(rec);
        }
        self.force = Some(force);
        self.observed = Some(k);
        Ok(())
    }

    /// Snapshot, fluid step, particle push with the pre-step field.
    fn advance(&mut self) -> Result<()> {
        self.observe()?;
        let k = self.step;
        let dt = self.cfg.fluid.dt;
        let t = self.time();
        let field = Arc::new(GridVelocity::new(&self.domain, self.fluid.u.clone()));
        let stride = self.cfg.run.snapshot_stride;
        if stride > 0 && k.is_multiple_of(stride) {
            let span = stride.min(self.steps - k);
            self.snapshots.push(StoredSnapshot {
                t,
                dt: span as f64 * dt,
                u: field.clone(),
            });
        }
        if !self.cfg.fluid.frozen {
            let force = self.force.take().expect("observed before advancing");
            let report = self.solver.step(&mut self.fluid, &force)?;
            self.max_divergence = self.max_divergence.max(report.max_divergence);
            if report.cfl_exceeded {
                self.cfl_violations += 1;
            }
        }
        push_particles(&mut self.ensemble, field.as_ref(), t, dt);
        absorb(&mut self.ensemble, &self.domain);
        if self
            .ensemble
            .x
            .iter()
            .zip(&self.ensemble.v)
            .any(|(x, v)| !PhaseState::new(*x, *v).is_finite())
        {
            return Err(Error::numeric(format!(
                "non-finite particle state after t = {t}"
            )));
        }
        self.step += 1;
        self.fluid.t = self.time();
        Ok(())
    }

    pub fn step_once(&mut self) -> Result<()> {
        if self.is_done() {
            return self.observe();
        }
        self.advance()
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while !self.is_done() {
            self.advance()?;
        }
        self.observe()
    }

    pub fn finish(mut self) -> Result<RunOutput> {
        self.run_to_end()?;
        let smallness = smallness_report(&self.records, &self.cfg.monitors.constants())?;
        let t: Vec<f64> = self.records.iter().map(|r| r.t).collect();
        let e: Vec<f64> = self.records.iter().map(|r| r.energy).collect();
        let m1: Vec<f64> = self.records.iter().map(|r| r.m1).collect();
        let energy_fit = fit_last_half(&t, &e);
        let w1_fit = fit_last_half(&t, &m1);
        let grid = *self.solver.grid();
        let limit = (self.ensemble.alive_count() > 0)
            .then(|| profile_long_time(&self.ensemble, &grid, &self.domain));
        let mut hminus1_fit = None;
        if let Some(limit) = &limit {
            let pts: Vec<(Point, f64)> = self
                .ensemble
                .alive_indices()
                .map(|i| {
                    let mut p = ZERO;
                    for a in 0..self.ensemble.dim {
                        p[a] = self.ensemble.x[i][a] + self.ensemble.v[i][a];
                    }
                    (p, self.ensemble.weight(i))
                })
                .filter(|(p, _)| self.domain.distance_to_boundary(p) >= 0.0)
                .collect();
            let coarse_limit = deposit_points(&self.coarse, &pts);
            let hminus1 = self.cfg.metrics.hminus1;
            let solver = &self.solver;
            let values: Vec<(f64, f64)> = self
                .densities
                .par_iter()
                .map(|d| {
                    let h = if hminus1 {
                        hminus1_distance(solver, &d.rho, &limit.rho)?
                    } else {
                        f64::NAN
                    };
                    let w = if d.coarse.data.iter().any(|&x| x > 0.0) {
                        w1_cells(&d.coarse, &coarse_limit, true)?.cost
                    } else {
                        f64::NAN
                    };
                    Ok((h, w))
                })
                .collect::<Result<_>>()?;
            for (row, (h, w)) in self.metrics.iter_mut().zip(values) {
                row.hminus1_to_limit = h;
                row.w1_to_limit = w;
            }
            if hminus1 {
                let ts: Vec<f64> = self.densities.iter().map(|d| d.t).collect();
                let hs: Vec<f64> = self.metrics.iter().map(|r| r.hminus1_to_limit).collect();
                hminus1_fit = fit_last_half(&ts, &hs);
            }
        }
        let series = if self.snapshots.is_empty() {
            None
        } else {
            let mut s = FlowSnapshotSeries::new(&self.domain, self.cfg.fluid.dt)?;
            for snap in &self.snapshots {
                s.push(snap.t, snap.dt, snap.u.clone() as Arc<dyn VectorField>)?;
            }
            Some(s)
        };
        Ok(RunOutput {
            int_u_linf: self.acc.int_u_linf,
            records: self.records,
            metrics: self.metrics,
            ensemble: self.ensemble,
            fluid: self.fluid,
            grid,
            snapshots: self.snapshots,
            series,
            smallness,
            energy_fit,
            w1_fit,
            hminus1_fit,
            limit_profile: limit,
            max_support_radius: self.max_support_radius,
            max_moment_ratio: self.max_moment_ratio,
            w1_bound_violations: self.w1_bound_violations,
            cfl_violations: self.cfl_violations,
            max_divergence: self.max_divergence,
        })
    }
}

/// Run a config in memory.
pub fn simulate(cfg: &RunConfig) -> Result<RunOutput> {
    Simulation::new(cfg)?.finish()
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    serde_json::to_vec_pretty(v).map_err(|e| Error::parse(e.to_string()))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn emit(cfg: &RunConfig, out: &RunOutput, log: &mut FileLog) -> Result<Vec<SnapshotEntry>> {
    let dim = cfg.domain.dim;
    log.write(
        "timeseries.csv",
        &csv_bytes(|b| write_timeseries(b, &out.records))?,
    )?;
    if !out.metrics.is_empty() {
        log.write(
            "metrics.csv",
            &csv_bytes(|b| write_metrics(b, &out.metrics))?,
        )?;
    }
    log.write(
        "ledger.csv",
        &csv_bytes(|b| crate::io::write_ledger(b, dim, &out.ensemble.ledger))?,
    )?;
    log.write("summary.json", &json_bytes(&out.summary())?)?;
    let fields = log.root().join("fields");
    fs::create_dir_all(&fields).map_err(|e| Error::io(&fields, e))?;
    let t_end = out.records.last().map_or(0.0, |r| r.t);
    for p in write_face_field(&fields, "u_final", &out.fluid.u, t_end)? {
        log.add(&p)?;
    }
    for p in write_cell_field(&fields, "p_final", &out.fluid.p, "p", t_end)? {
        log.add(&p)?;
    }
    let rho = deposit_moments(&out.ensemble, &out.grid, &[], None).rho;
    for p in write_cell_field(&fields, "rho_final", &rho, "rho", t_end)? {
        log.add(&p)?;
    }
    if let Some(limit) = &out.limit_profile {
        for p in write_cell_field(&fields, "rho_long_time", &limit.rho, "rho", t_end)? {
            log.add(&p)?;
        }
    }
    let mut entries = Vec::new();
    if cfg.run.dump_snapshots && !out.snapshots.is_empty() {
        let dir = log.root().join("snapshots");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (k, s) in out.snapshots.iter().enumerate() {
            let mut files = Vec::new();
            for p in write_face_field(&dir, &format!("s{k:06}"), s.u.field(), s.t)? {
                let rel = log.add(&p)?;
                if rel.ends_with(".bin") {
                    files.push(rel);
                }
            }
            entries.push(SnapshotEntry {
                t: s.t,
                dt: s.dt,
                files,
            });
        }
    }
    Ok(entries)
}

/// Outcome of [`run`].
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub output: RunOutput,
    pub scenario: Option<ScenarioReport>,
}

/// Run a config and write every artifact plus `manifest.json` into `dir`
/// (the config's output directory when `None`). On failure a manifest
/// marked failed is still written.
pub fn run(cfg: &RunConfig, dir: Option<&Path>) -> Result<RunArtifacts> {
    let dir = dir.map_or_else(|| PathBuf::from(&cfg.run.output_dir), Path::to_path_buf);
    let domain = cfg.validate()?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let started = unix_now();
    let clock = Instant::now();
    let mut log = FileLog::new(&dir);
    log.write("config.toml", cfg.to_toml_string()?.as_bytes())?;
    let mut sim = Simulation::new(cfg)?;
    let outcome = sim.run_to_end();
    let manifest =
        |log: &FileLog, status, error: Option<String>, snapshots| -> Result<RunManifest> {
            let m = RunManifest {
                config_hash: cfg.hash()?,
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                started,
                finished: unix_now(),
                wall_seconds: clock.elapsed().as_secs_f64(),
                status,
                error,
                files: log.files.clone(),
                snapshots,
            };
            let path = dir.join(MANIFEST_NAME);
            fs::write(&path, m.to_json()?).map_err(|e| Error::io(&path, e))?;
            Ok(m)
        };
    if let Err(e) = outcome {
        log.write(
            "timeseries.csv",
            &csv_bytes(|b| write_timeseries(b, &sim.records))?,
        )?;
        log.write(
            "ledger.csv",
            &csv_bytes(|b| crate::io::write_ledger(b, domain.dim(), &sim.ensemble.ledger))?,
        )?;
        manifest(&log, RunStatus::Failed, Some(e.to_string()), Vec::new())?;
        return Err(e);
    }
    let output = match sim.finish() {
        Ok(o) => o,
        Err(e) => {
            manifest(&log, RunStatus::Failed, Some(e.to_string()), Vec::new())?;
            return Err(e);
        }
    };
    let scenario = match cfg.scenario_config(&domain)? {
        Some(scn) => {
            let report = evaluate(&scn, &output);
            log.write("scenario_report.json", &json_bytes(&report)?)?;
            Some(report)
        }
        None => None,
    };
    let snapshots = match emit(cfg, &output, &mut log) {
        Ok(s) => s,
        Err(e) => {
            manifest(&log, RunStatus::Failed, Some(e.to_string()), Vec::new())?;
            return Err(e);
        }
    };
    let manifest = manifest(&log, RunStatus::Ok, None, snapshots)?;
    Ok(RunArtifacts {
        dir,
        manifest,
        output,
        scenario,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplayTask {
    Xinfty,
    Profiles,
    RepresentationCheck,
}

impl ReplayTask {
    pub fn label(self) -> &'static str {
        match self {
            ReplayTask::Xinfty => "xinfty",
            ReplayTask::Profiles => "profiles",
            ReplayTask::RepresentationCheck => "representation-check",
        }
    }
}

impl std::str::FromStr for ReplayTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xinfty" => Ok(ReplayTask::Xinfty),
            "profiles" => Ok(ReplayTask::Profiles),
            "representation-check" => Ok(ReplayTask::RepresentationCheck),
            _ => Err(Error::validation(format!("unknown replay task {s:?}"))),
        }
    }
}

/// A finished run reloaded from its output directory.
pub struct StoredRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub config: RunConfig,
    pub domain: Domain,
    pub spec: InitialDataSpec,
    pub series: FlowSnapshotSeries,
    pub records: Vec<DiagnosticsRecord>,
}

impl StoredRun {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = RunManifest::load(manifest_path)?;
        let dir = manifest_path
            .parent()
            .unwrap_or(Path::new("."))
            .to_path_buf();
        if manifest.status != RunStatus::Ok {
            return Err(Error::validation("cannot replay a failed run"));
        }
        let text = String::from_utf8(manifest.read_checked(&dir, "config.toml")?)
            .map_err(|e| Error::parse(e.to_string()))?;
        let config = RunConfig::from_toml_str(&text)?;
        if config.hash()? != manifest.config_hash {
            return Err(Error::validation("config hash does not match the manifest"));
        }
        let domain = config.validate()?;
        let spec = config.initial_spec(&domain)?;
        if manifest.snapshots.is_empty() {
            return Err(Error::validation("run has no stored snapshots"));
        }
        let grid = MacGrid::new(&domain, &config.fluid.resolution)?;
        let mut series = FlowSnapshotSeries::new(&domain, config.fluid.dt)?;
        for s in &manifest.snapshots {
            let mut bins = Vec::new();
            for rel in &s.files {
                manifest.read_checked(&dir, rel)?;
                manifest.read_checked(&dir, &rel.replace(".bin", ".json"))?;
                bins.push(dir.join(rel));
            }
            let (u, _) = read_face_field(&grid, &bins)?;
            series.push(s.t, s.dt, Arc::new(GridVelocity::new(&domain, u)))?;
        }
        let records = read_timeseries(&manifest.read_checked(&dir, "timeseries.csv")?[..])?;
        Ok(StoredRun {
            dir,
            manifest,
            config,
            domain,
            spec,
            series,
            records,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XinftyReport {
    pub samples: usize,
    pub survivors: usize,
    pub survival_fraction: f64,
    pub t_max: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilesReport {
    pub grid: usize,
    pub v_nodes: usize,
    pub pushforward_mass: f64,
    pub change_of_variables_mass: f64,
    /// `W₁` between the two normalised profiles on the coarse metric grid.
    pub w1_gap: f64,
    pub max_jacobian_defect: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationReport {
    pub t: f64,
    pub particle_mass: f64,
    /// Mean over randomly shifted lattices.
    pub quadrature_mass: f64,
    /// Standard error of that mean.
    pub quadrature_error: f64,
    pub shifts: usize,
    pub particles: usize,
    /// Three combined standard errors (particle sampling and quadrature).
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum ReplayReport {
    Xinfty(XinftyReport),
    Profiles(ProfilesReport),
    RepresentationCheck(RepresentationReport),
}

pub fn replay_xinfty(run: &StoredRun, log: &mut FileLog) -> Result<XinftyReport> {
    let tol = default_tail_tolerance(&run.domain);
    let ens = sample_initial(&run.spec, &run.domain)?;
    let dim = run.domain.dim();
    let results: Vec<_> = (0..ens.len())
        .into_par_iter()
        .map(|i| compute_xinfty(&run.series, &PhaseState::new(ens.x[i], ens.v[i]), tol))
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::parse(e.to_string());
    let mut header: Vec<String> = Vec::new();
    header.extend((0..dim).map(|a| format!("x{a}")));
    header.extend((0..dim).map(|a| format!("v{a}")));
    header.push("survives".into());
    header.extend((0..dim).map(|a| format!("xinf{a}")));
    w.write_record(&header).map_err(err)?;
    let mut survivors = 0;
    for (i, r) in results.iter().enumerate() {
        let mut row: Vec<String> = Vec::new();
        row.extend((0..dim).map(|a| fmt17(ens.x[i][a])));
        row.extend((0..dim).map(|a| fmt17(ens.v[i][a])));
        row.push(u8::from(r.survives()).to_string());
        match r.x_inf {
            Some(p) => {
                survivors += 1;
                row.extend((0..dim).map(|a| fmt17(p[a])));
            }
            None => row.extend((0..dim).map(|_| String::new())),
        }
        w.write_record(&row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::parse(e.to_string()))?;
    log.write("xinfty.csv", &bytes)?;
    let n = ens.len();
    Ok(XinftyReport {
        samples: n,
        survivors,
        survival_fraction: survivors as f64 / n as f64,
        t_max: run.series.end(),
        tail_bound: results.first().map_or(0.0, |r| r.tail_bound),
    })
}

pub fn replay_profiles(run: &StoredRun, log: &mut FileLog) -> Result<ProfilesReport> {
    let m = &run.config.metrics;
    let dim = run.domain.dim();
    let tol = default_tail_tolerance(&run.domain);
    let grid = MacGrid::new(&run.domain, &vec![m.profile_grid; dim])?;
    let push = profile_pushforward(&run.spec, &run.series, &grid, tol)?;
    let cov = profile_change_of_variables(&run.spec, &run.series, &grid, m.v_nodes, tol)?;
    let t = run.series.end();
    for (stem, p) in [
        ("rho_pushforward", &push),
        ("rho_change_of_variables", &cov),
    ] {
        for path in write_cell_field(log.root(), stem, &p.rho, "rho", t)? {
            log.add(&path)?;
        }
    }
    let w1_gap = if push.mass > 0.0 && cov.mass > 0.0 {
        let factor = (m.profile_grid / m.w1_grid).max(1);
        let (a, b) = if factor > 1 && m.profile_grid.is_multiple_of(m.w1_grid) {
            (coarsen(&push.rho, factor)?, coarsen(&cov.rho, factor)?)
        } else {
            (push.rho.clone(), cov.rho.clone())
        };
        w1_cells(&a, &b, true)?.cost
    } else {
        f64::NAN
    };
    Ok(ProfilesReport {
        grid: m.profile_grid,
        v_nodes: m.v_nodes,
        pushforward_mass: push.mass,
        change_of_variables_mass: cov.mass,
        w1_gap,
        max_jacobian_defect: cov.max_jacobian_defect,
        tail_bound: velocity_tail_bound(&run.series)?,
    })
}

/// Quadrature of the representation formula at the end of the series
/// against the particle estimate of the alive mass. The quadrature is a
/// randomly shifted lattice rule, so its mean is unbiased and the spread of
/// the shifts gives its error.
pub fn representation_check(
    spec: &InitialDataSpec,
    series: &FlowSnapshotSeries,
    particle_mass: f64,
    x_nodes: usize,
    v_nodes: usize,
    shifts: usize,
) -> Result<RepresentationReport> {
    if shifts < 2 {
        return Err(Error::validation(
            "representation check needs at least two lattice shifts",
        ));
    }
    let t = series.end();
    let dim = series.domain().dim();
    let (int_u, _) = series.budgets(series.start(), t);
    let vmax = (-(t - series.start())).exp() * spec.velocity.max_speed() + int_u;
    let vmax = vmax * (1.0 + 1e-9) + 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed);
    let mut values = Vec::with_capacity(shifts);
    for _ in 0..shifts {
        let offset: Vec<f64> = (0..2 * dim).map(|_| rng.random::<f64>()).collect();
        values.push(representation_mass(
            spec, series, t, x_nodes, v_nodes, vmax, &offset,
        )?);
    }
    let k = shifts as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let quad_err = (var / k).sqrt();
    let n = spec.particles as f64;
    let sigma = (particle_mass * (1.0 - particle_mass)).max(0.0).sqrt() / n.sqrt();
    let tolerance = 3.0 * (sigma * sigma + quad_err * quad_err).sqrt();
    Ok(RepresentationReport {
        t,
        particle_mass,
        quadrature_mass: mean,
        quadrature_error: quad_err,
        shifts,
        particles: spec.particles,
        tolerance,
        pass: (mean - particle_mass).abs() <= tolerance,
    })
}

/// Run a post-hoc task against a stored run; outputs go to
/// `<run dir>/replay/<task>/`.
pub fn replay(manifest_path: &Path, task: ReplayTask) -> Result<ReplayReport> {
    let run = StoredRun::load(manifest_path)?;
    let out_dir = run.dir.join("replay").join(task.label());
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut log = FileLog::new(&out_dir);
    let report = match task {
        ReplayTask::Xinfty => ReplayReport::Xinfty(replay_xinfty(&run, &mut log)?),
        ReplayTask::Profiles => ReplayReport::Profiles(replay_profiles(&run, &mut log)?),
        ReplayTask::RepresentationCheck => {
            let t = run.series.end();
            let rec = run
                .records
                .iter()
                .find(|r| (r.t - t).abs() <= 1e-9 * t.max(1.0))
                .ok_or_else(|| {
                    Error::validation("no recorded step at the end of the snapshot series")
                })?;
            let m = &run.config.metrics;
            ReplayReport::RepresentationCheck(representation_check(
                &run.spec,
                &run.series,
                rec.mass_alive,
                m.profile_grid,
                m.v_nodes,
                8,
            )?)
        }
    };
    #[derive(Serialize)]
    struct Wrapped<'a> {
        #[serde(flatten)]
        report: &'a ReplayReport,
        files: &'a [crate::io::ManifestFile],
    }
    let files = log.files.clone();
    log.write(
        "report.json",
        &json_bytes(&Wrapped {
            report: &report,
            files: &files,
        })?,
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{
        DomainConfig, FluidConfig, InitialConfig, MetricsConfig, MonitorConfig, ParticleConfig,
        RunSection,
    };
    use crate::kinetic::{SpatialLaw, VelocityLaw};

    pub(crate) fn small_config(frozen: bool) -> RunConfig {
        let mut fluid = FluidConfig::new(vec![16, 16], 0.02);
        fluid.frozen = frozen;
        RunConfig {
            domain: DomainConfig::unit(2),
            fluid,
            particles: ParticleConfig {
                count: 400,
                seed: 3,
            },
            initial: Some(InitialConfig {
                spatial: SpatialLaw::Ball {
                    center: vec![0.5, 0.5],
                    radius: 0.2,
                },
                velocity: VelocityLaw::Ball { radius: 0.2 },
            }),
            scenario: None,
            run: RunSection {
                horizon: 0.4,
                snapshot_stride: 1,
                dump_snapshots: true,
                output_dir: "unused".into(),
                deterministic: true,
                record_every: 1,
            },
            monitors: MonitorConfig::default(),
            metrics: MetricsConfig {
                every: 2,
                ..MetricsConfig::default()
            },
        }
    }

    #[test]
    fn frozen_zero_fluid_energy_is_closed_form() {
        let out = simulate(&small_config(true)).unwrap();
        let e0 = out.records[0].energy;
        for r in &out.records {
            assert!((r.energy - e0 * (-2.0 * r.t).exp()).abs() <= 1e-10 * e0);
        }
    }

    #[test]
    fn null_run_is_all_zero() {
        let mut cfg = small_config(false);
        cfg.initial.as_mut().unwrap().velocity = VelocityLaw::Delta { v: vec![0.0, 0.0] };
        let out = simulate(&cfg).unwrap();
        for r in &out.records {
            assert_eq!(r.energy, 0.0);
            assert_eq!(r.dissipation, 0.0);
            assert_eq!(r.u_linf, 0.0);
            assert_eq!(r.int_grad_u_linf, 0.0);
        }
    }

    #[test]
    fn run_writes_manifest_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(false);
        let art = run(&cfg, Some(dir.path())).unwrap();
        assert_eq!(art.manifest.status, RunStatus::Ok);
        assert_eq!(art.manifest.snapshots.len(), cfg.steps());
        for f in &art.manifest.files {
            art.manifest.read_checked(dir.path(), &f.path).unwrap();
        }
        let report = replay(
            &dir.path().join(MANIFEST_NAME),
            ReplayTask::RepresentationCheck,
        )
        .unwrap();
        let ReplayReport::RepresentationCheck(r) = report else {
            panic!()
        };
        assert!(r.pass, "{r:?}");
    }
}
