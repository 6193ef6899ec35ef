//! Scenario configuration and execution of the validation cases.
//!
//! A configuration file is TOML with flat keys at the top level and one
//! table per parameter group; keys missing from the file keep the preset
//! value of the chosen scenario:
//!
//! ```toml
//! scenario = "point-source-ballistic"
//! mode = "cell-to-cell"
//! n_particles = 100000
//! seed = 7
//!
//! [hit]
//! c0 = 2.1
//! ```

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell_to_cell::{step_ensemble, IntegratorMode, ParticleState, StepError, StepReport};
use crate::fields::{couette_provider, hit_provider, FieldError, FieldProvider};
use crate::mesh::{
    build_annulus, build_box_hexa, build_box_tetra, build_cartesian_slab, build_perturbed_hexa_scaled, Mesh,
    MeshError,
};
use crate::noise::NoiseStream;
use crate::stats::{
    analytic_moments, ci_envelope, concentration_radial, max_dimensionless_distance, mean_concentration_error,
    moments, AnnulusBins, ConcentrationProfile, DistanceDiagnostic, MomentRecord,
};
use crate::tracking::contains_point;
use crate::vec3::Vec3;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("mesh failed validation:\n{0}")]
    InvalidMesh(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("output: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    PointSourceBallistic,
    PointSourceDiffusive,
    CouetteSingleParticle,
    CouetteConcentration,
    CouetteConvergence,
    MeshRobustness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshKind {
    Hexa,
    Tetra,
    Annulus,
    Jittered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HitParams {
    pub u_alpha: f64,
    pub t_l: f64,
    pub c0: f64,
}

/// Slab used by the point-source cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlabParams {
    /// `U_alpha * dt / dx`.
    pub cells_per_flight: f64,
    /// Half length in units of the final analytic spread.
    pub half_length_sigmas: f64,
    /// Transverse extent in units of the final analytic spread.
    pub transverse_sigmas: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouetteParams {
    pub r_in: f64,
    pub r_out: f64,
    pub omega_in: f64,
    pub n_theta: usize,
    pub n_r: usize,
    pub depth: f64,
    /// Initial radii of the single-particle case.
    pub particle_radii: Vec<f64>,
    /// End time of the convergence case (s).
    pub t_end: f64,
    /// Time steps of the convergence case (s).
    pub dt_grid: Vec<f64>,
}

impl CouetteParams {
    /// Azimuthal cell width in radians.
    pub fn dtheta(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.n_theta as f64
    }

    /// `t+ = t * omega_in / dtheta`.
    pub fn t_plus(&self, t: f64) -> f64 {
        t * self.omega_in / self.dtheta()
    }

    pub fn bins(&self) -> AnnulusBins {
        AnnulusBins { n_theta: self.n_theta, n_r: self.n_r, r_in: self.r_in, r_out: self.r_out }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessParams {
    pub mesh: MeshKind,
    pub n_per_side: usize,
    pub side: f64,
    pub jitter: f64,
    pub mesh_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub mode: IntegratorMode,
    pub n_particles: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub strict: bool,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
    pub hit: HitParams,
    pub slab: SlabParams,
    pub couette: CouetteParams,
    pub robustness: RobustnessParams,
}

impl ScenarioConfig {
    pub fn preset(kind: ScenarioKind) -> Self {
        let couette = CouetteParams {
            r_in: 1.0,
            r_out: 2.0,
            omega_in: 1.0,
            n_theta: 360,
            n_r: 21,
            depth: 0.1,
            particle_radii: vec![1.05, 1.5],
            t_end: 41.0,
            dt_grid: (0..7).map(|k| 0.05 * 4000f64.powf(k as f64 / 6.0)).collect(),
        };
        let mut c = ScenarioConfig {
            scenario: kind,
            mode: IntegratorMode::CellToCell,
            n_particles: 100_000,
            dt: 0.05,
            n_steps: 120,
            seed: 20_240_601,
            output_dir: None,
            strict: false,
            threads: 0,
            hit: HitParams { u_alpha: 1.0, t_l: 1.0, c0: 2.1 },
            slab: SlabParams { cells_per_flight: 50.0, half_length_sigmas: 6.0, transverse_sigmas: 20.0 },
            couette,
            robustness: RobustnessParams {
                mesh: MeshKind::Jittered,
                n_per_side: 20,
                side: 1.0,
                jitter: 0.3,
                mesh_seed: 1,
            },
        };
        match kind {
            ScenarioKind::PointSourceBallistic => {}
            ScenarioKind::PointSourceDiffusive => {
                c.dt = 200.0;
                c.slab.cells_per_flight = 20.0;
            }
            ScenarioKind::CouetteSingleParticle => {
                c.n_particles = c.couette.particle_radii.len();
                c.dt = 1.024;
                c.n_steps = 400;
            }
            ScenarioKind::CouetteConcentration => {
                c.n_particles = 200_000;
                c.dt = 5.5 * c.couette.dtheta() / c.couette.omega_in;
                c.n_steps = 400;
            }
            ScenarioKind::CouetteConvergence => {
                c.n_particles = 200_000;
                c.dt = c.couette.dt_grid[0];
                c.n_steps = 1;
            }
            ScenarioKind::MeshRobustness => {
                c.n_steps = 200;
            }
        }
        c
    }

    /// Parse a TOML configuration on top of the preset named by its
    /// `scenario` key.
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Config(e.to_string()))?;
        let kind = match file.get("scenario") {
            Some(v) => ScenarioKind::deserialize(v.clone()).map_err(|e| ScenarioError::Config(e.to_string()))?,
            None => return Err(ScenarioError::Config("missing `scenario` key".into())),
        };
        let preset = ScenarioConfig::preset(kind);
        let mut merged = toml::Table::try_from(&preset).map_err(|e| ScenarioError::Config(e.to_string()))?;
        merge(&mut merged, file);
        let cfg = ScenarioConfig::deserialize(toml::Value::Table(merged))
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        // A preset-derived dt must follow edited Couette resolution.
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Config(m.to_string()));
        if self.n_particles == 0 {
            return bad("n_particles must be positive");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if self.n_steps == 0 {
            return bad("n_steps must be positive");
        }
        let h = &self.hit;
        if !(h.u_alpha > 0.0 && h.t_l > 0.0 && h.c0 > 0.0) {
            return bad("hit parameters must be positive");
        }
        let s = &self.slab;
        if !(s.cells_per_flight > 0.0 && s.half_length_sigmas > 0.0 && s.transverse_sigmas > 0.0) {
            return bad("slab parameters must be positive");
        }
        let c = &self.couette;
        if !(c.r_in > 0.0 && c.r_out > c.r_in && c.depth > 0.0 && c.n_theta >= 3 && c.n_r >= 1) {
            return bad("couette geometry is degenerate");
        }
        if !(c.t_end > 0.0) || c.dt_grid.is_empty() || c.dt_grid.iter().any(|&d| !(d > 0.0)) {
            return bad("couette t_end and dt_grid must be positive and non-empty");
        }
        if self.scenario == ScenarioKind::CouetteSingleParticle
            && c.particle_radii.iter().any(|&r| !(r > c.r_in && r < c.r_out))
        {
            return bad("particle_radii must lie strictly between r_in and r_out");
        }
        let r = &self.robustness;
        if r.n_per_side == 0 || !(r.side > 0.0) || !(0.0..0.5).contains(&r.jitter) {
            return bad("robustness mesh parameters out of range");
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusSample {
    pub step: usize,
    pub t: f64,
    pub t_plus: f64,
    pub particle: usize,
    pub r: f64,
    pub rel_drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub dt: f64,
    pub dt_plus: f64,
    pub mean_error: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioData {
    Moments { source: Vec3, records: Vec<MomentRecord> },
    RadiusTrace(Vec<RadiusSample>),
    Concentration(Vec<ConcentrationProfile>),
    Convergence(Vec<ConvergencePoint>),
    Distance(Vec<DistanceDiagnostic>),
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: ScenarioKind,
    pub mode: IntegratorMode,
    pub wall_time: Duration,
    pub steps: Vec<StepReport>,
    pub n_lost: usize,
    pub n_wall_stops: usize,
    pub outputs: Vec<PathBuf>,
    pub data: ScenarioData,
}

/// Output interval: every step up to 200 steps, else `ceil(n/200)`.
pub fn output_every(n_steps: usize) -> usize {
    if n_steps <= 200 {
        1
    } else {
        n_steps.div_ceil(200)
    }
}

fn is_output(step: usize, n_steps: usize) -> bool {
    step % output_every(n_steps) == 0 || step == n_steps
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport, ScenarioError> {
    cfg.validate()?;
    if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        pool.install(|| run_inner(cfg))
    } else {
        run_inner(cfg)
    }
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    steps: Vec<StepReport>,
}

impl Ctx<'_> {
    fn step(
        &mut self,
        mode: IntegratorMode,
        ps: &mut [ParticleState],
        mesh: &Mesh,
        fields: &FieldProvider,
        dt: f64,
        index: u64,
    ) -> Result<(), ScenarioError> {
        let r = step_ensemble(mode, ps, mesh, fields, dt, self.cfg.seed, index, self.cfg.strict)?;
        self.steps.push(r);
        Ok(())
    }
}

fn run_inner(cfg: &ScenarioConfig) -> Result<RunReport, ScenarioError> {
    let start = Instant::now();
    let mut ctx = Ctx { cfg, steps: Vec::new() };
    let data = match cfg.scenario {
        ScenarioKind::PointSourceBallistic | ScenarioKind::PointSourceDiffusive => run_point_source(&mut ctx)?,
        ScenarioKind::CouetteSingleParticle => run_couette_single(&mut ctx)?,
        ScenarioKind::CouetteConcentration => run_couette_concentration(&mut ctx)?,
        ScenarioKind::CouetteConvergence => run_couette_convergence(&mut ctx)?,
        ScenarioKind::MeshRobustness => run_robustness(&mut ctx)?,
    };
    let mut report = RunReport {
        scenario: cfg.scenario,
        mode: cfg.mode,
        wall_time: start.elapsed(),
        n_lost: ctx.steps.iter().map(|s| s.n_lost).sum(),
        n_wall_stops: ctx.steps.iter().map(|s| s.n_wall_stops).sum(),
        steps: ctx.steps,
        outputs: Vec::new(),
        data,
    };
    if let Some(dir) = &cfg.output_dir {
        report.outputs = write_outputs(cfg, &report, dir)?;
    }
    Ok(report)
}

fn checked(mesh: Mesh) -> Result<Mesh, ScenarioError> {
    let rep = mesh.validate();
    if rep.is_empty() {
        Ok(mesh)
    } else {
        Err(ScenarioError::InvalidMesh(rep.to_string()))
    }
}

/// The slab used by the point-source cases, with the source cell index.
pub fn point_source_slab(cfg: &ScenarioConfig) -> Result<(Mesh, usize), ScenarioError> {
    let h = &cfg.hit;
    let t_final = cfg.dt * cfg.n_steps as f64;
    let sigma = analytic_moments(t_final, h.u_alpha, h.t_l).0.sqrt();
    let dx = h.u_alpha * cfg.dt / cfg.slab.cells_per_flight;
    let half = cfg.slab.half_length_sigmas * sigma + dx;
    let n_cells = 2 * (half / dx).ceil() as usize + 1;
    if n_cells > 5_000_000 {
        return Err(ScenarioError::Config(format!("slab would need {n_cells} cells")));
    }
    let mesh = checked(build_cartesian_slab(n_cells, dx, cfg.slab.transverse_sigmas * sigma)?)?;
    Ok((mesh, n_cells / 2))
}

fn run_point_source(ctx: &mut Ctx) -> Result<ScenarioData, ScenarioError> {
    let cfg = ctx.cfg;
    let h = &cfg.hit;
    let (mesh, c0) = point_source_slab(cfg)?;
    let fields = hit_provider(h.u_alpha, h.t_l, h.c0, &mesh)?;
    let source = mesh.cells[c0].center;
    let mut ps: Vec<ParticleState> =
        (0..cfg.n_particles).map(|i| ParticleState::new(i as u64, source, Vec3::ZERO, c0)).collect();
    let mut records = Vec::new();
    for step in 1..=cfg.n_steps {
        ctx.step(cfg.mode, &mut ps, &mesh, &fields, cfg.dt, step as u64)?;
        if is_output(step, cfg.n_steps) {
            let t = step as f64 * cfg.dt;
            match moments(&ps, source) {
                Ok(mut m) => {
                    m.t = t;
                    m.t_star = t / h.t_l;
                    records.push(m);
                }
                Err(_) => break,
            }
        }
    }
    Ok(ScenarioData::Moments { source, records })
}

fn annulus(cfg: &ScenarioConfig) -> Result<(Mesh, FieldProvider), ScenarioError> {
    let c = &cfg.couette;
    let mesh = checked(build_annulus(c.n_theta, c.n_r, c.r_in, c.r_out, c.depth)?)?;
    let fields = couette_provider(c.r_in, c.r_out, c.omega_in, &mesh)?;
    Ok((mesh, fields))
}

fn radius(p: Vec3) -> f64 {
    (p.x * p.x + p.y * p.y).sqrt()
}

fn run_couette_single(ctx: &mut Ctx) -> Result<ScenarioData, ScenarioError> {
    let cfg = ctx.cfg;
    let c = &cfg.couette;
    let (mesh, fields) = annulus(cfg)?;
    let phi = c.dtheta() / 2.0;
    let mut ps = Vec::new();
    for (i, &r) in c.particle_radii.iter().enumerate() {
        let x = Vec3::new(r * phi.cos(), r * phi.sin(), c.depth / 2.0);
        let cell = mesh
            .locate(x)
            .ok_or_else(|| ScenarioError::Config(format!("initial radius {r} is outside the mesh")))?;
        ps.push(ParticleState::new(i as u64, x, fields.get(cell).mean_u, cell));
    }
    let r0: Vec<f64> = ps.iter().map(|p| radius(p.x)).collect();
    let mut trace = Vec::new();
    let sample = |trace: &mut Vec<RadiusSample>, step: usize, ps: &[ParticleState]| {
        let t = step as f64 * cfg.dt;
        for (i, p) in ps.iter().enumerate() {
            let r = radius(p.x);
            trace.push(RadiusSample { step, t, t_plus: c.t_plus(t), particle: i, r, rel_drift: (r - r0[i]).abs() / r0[i] });
        }
    };
    sample(&mut trace, 0, &ps);
    for step in 1..=cfg.n_steps {
        ctx.step(cfg.mode, &mut ps, &mesh, &fields, cfg.dt, step as u64)?;
        sample(&mut trace, step, &ps);
    }
    Ok(ScenarioData::RadiusTrace(trace))
}

/// Uniform seeding: a uniformly chosen cell, then a uniform point in it.
pub fn seed_uniform(mesh: &Mesh, fields: &FieldProvider, n: usize, seed: u64) -> Vec<ParticleState> {
    let mut rng = NoiseStream::auxiliary(seed, 1);
    (0..n)
        .map(|i| {
            let cell = rng.below(mesh.n_cells());
            let c = &mesh.cells[cell];
            let (mut lo, mut hi) = (c.center, c.center);
            for &v in &c.vertices {
                lo = lo.min(mesh.vertices[v]);
                hi = hi.max(mesh.vertices[v]);
            }
            let x = loop {
                let p = lo + (hi - lo).hadamard(Vec3::new(rng.uniform(), rng.uniform(), rng.uniform()));
                if contains_point(mesh, cell, p).unwrap_or(false) {
                    break p;
                }
            };
            ParticleState::new(i as u64, x, fields.get(cell).mean_u, cell)
        })
        .collect()
}

fn run_couette_concentration(ctx: &mut Ctx) -> Result<ScenarioData, ScenarioError> {
    let cfg = ctx.cfg;
    let c = &cfg.couette;
    let (mesh, fields) = annulus(cfg)?;
    let bins = c.bins();
    let mut ps = seed_uniform(&mesh, &fields, cfg.n_particles, cfg.seed);
    let mut profiles = vec![concentration_radial(&ps, &bins, cfg.n_particles, 0.0)];
    for step in 1..=cfg.n_steps {
        ctx.step(cfg.mode, &mut ps, &mesh, &fields, cfg.dt, step as u64)?;
        if is_output(step, cfg.n_steps) {
            let t = step as f64 * cfg.dt;
            profiles.push(concentration_radial(&ps, &bins, cfg.n_particles, c.t_plus(t)));
        }
    }
    Ok(ScenarioData::Concentration(profiles))
}

/// Mean concentration error of one run up to `t_end`, the last step being
/// shortened to land on `t_end`. Profiles after every step are averaged.
pub fn convergence_error(
    ctx_mode: IntegratorMode,
    mesh: &Mesh,
    fields: &FieldProvider,
    initial: &[ParticleState],
    bins: &AnnulusBins,
    dt: f64,
    t_end: f64,
    seed: u64,
    strict: bool,
) -> Result<(f64, Vec<StepReport>), ScenarioError> {
    let mut ps = initial.to_vec();
    let n_steps = ((t_end / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut profiles = Vec::with_capacity(n_steps);
    let mut reports = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let h = dt.min(t_end - k as f64 * dt);
        reports.push(step_ensemble(ctx_mode, &mut ps, mesh, fields, h, seed, k as u64 + 1, strict)?);
        profiles.push(concentration_radial(&ps, bins, initial.len(), 0.0));
    }
    Ok((mean_concentration_error(&profiles), reports))
}

fn run_couette_convergence(ctx: &mut Ctx) -> Result<ScenarioData, ScenarioError> {
    let cfg = ctx.cfg;
    let c = &cfg.couette;
    let (mesh, fields) = annulus(cfg)?;
    let bins = c.bins();
    let initial = seed_uniform(&mesh, &fields, cfg.n_particles, cfg.seed);
    let mut points = Vec::new();
    for &dt in &c.dt_grid {
        let (err, reports) =
            convergence_error(cfg.mode, &mesh, &fields, &initial, &bins, dt, c.t_end, cfg.seed, cfg.strict)?;
        ctx.steps.extend(reports);
        points.push(ConvergencePoint { dt, dt_plus: c.t_plus(dt), mean_error: err, n_steps: (c.t_end / dt).ceil() as usize });
    }
    Ok(ScenarioData::Convergence(points))
}

/// Mesh of the robustness case.
pub fn robustness_mesh(cfg: &ScenarioConfig) -> Result<Mesh, ScenarioError> {
    let r = &cfg.robustness;
    let c = &cfg.couette;
    let mesh = match r.mesh {
        MeshKind::Hexa => build_box_hexa(r.n_per_side, r.side)?,
        MeshKind::Tetra => build_box_tetra(r.n_per_side, r.side)?,
        MeshKind::Jittered => build_perturbed_hexa_scaled(r.n_per_side, r.side, r.jitter, r.mesh_seed)?,
        MeshKind::Annulus => build_annulus(c.n_theta, c.n_r, c.r_in, c.r_out, c.depth)?,
    };
    checked(mesh)
}

fn run_robustness(ctx: &mut Ctx) -> Result<ScenarioData, ScenarioError> {
    let cfg = ctx.cfg;
    let h = &cfg.hit;
    let mesh = robustness_mesh(cfg)?;
    let fields = hit_provider(h.u_alpha, h.t_l, h.c0, &mesh)?;
    // the box centre, or mid-gap for the annulus whose centre is the hole
    let c0 = match cfg.robustness.mesh {
        MeshKind::Annulus => {
            let c = &cfg.couette;
            mesh.nearest_cell(Vec3::new(0.5 * (c.r_in + c.r_out), 0.0, 0.5 * c.depth))
        }
        _ => {
            let (lo, hi) = mesh.bounds();
            mesh.nearest_cell((lo + hi) * 0.5)
        }
    };
    let source = mesh.cells[c0].center;
    let mut ps: Vec<ParticleState> =
        (0..cfg.n_particles).map(|i| ParticleState::new(i as u64, source, Vec3::ZERO, c0)).collect();
    let mut out = vec![DistanceDiagnostic { t_star: 0.0, d_star_max: max_dimensionless_distance(&ps, &mesh) }];
    for step in 1..=cfg.n_steps {
        ctx.step(cfg.mode, &mut ps, &mesh, &fields, cfg.dt, step as u64)?;
        if is_output(step, cfg.n_steps) {
            let t = step as f64 * cfg.dt;
            out.push(DistanceDiagnostic { t_star: t / h.t_l, d_star_max: max_dimensionless_distance(&ps, &mesh) });
        }
    }
    Ok(ScenarioData::Distance(out))
}

#[derive(Serialize)]
struct MomentRow {
    t: f64,
    t_star: f64,
    xx: f64,
    xu: f64,
    uu: f64,
    xx_exact: f64,
    xu_exact: f64,
    uu_exact: f64,
    ci_xx: f64,
    ci_xu: f64,
    ci_uu: f64,
    n_active: usize,
}

#[derive(Serialize)]
struct ConcentrationRow {
    t_plus: f64,
    bin_index: usize,
    r_center: f64,
    c_plus: f64,
}

#[derive(Serialize)]
struct StepRow {
    step: u64,
    n_active: usize,
    n_subiters_total: u64,
    max_subiters: usize,
    n_wall_stops: usize,
    n_lost: usize,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_outputs(cfg: &ScenarioConfig, rep: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let h = &cfg.hit;
    match &rep.data {
        ScenarioData::Moments { records, .. } => {
            let p = dir.join("moments.csv");
            write_csv(
                &p,
                records.iter().map(|m| {
                    let (xx_e, xu_e, uu_e) = analytic_moments(m.t, h.u_alpha, h.t_l);
                    let (ci_xx, ci_xu, ci_uu) = ci_envelope(m.t, m.n_active, h.u_alpha, h.t_l);
                    MomentRow {
                        t: m.t,
                        t_star: m.t_star,
                        xx: m.xx.x,
                        xu: m.xu.x,
                        uu: m.uu.x,
                        xx_exact: xx_e,
                        xu_exact: xu_e,
                        uu_exact: uu_e,
                        ci_xx,
                        ci_xu,
                        ci_uu,
                        n_active: m.n_active,
                    }
                }),
            )?;
            files.push(p);
        }
        ScenarioData::RadiusTrace(tr) => {
            let p = dir.join("radius.csv");
            write_csv(&p, tr.iter().copied())?;
            files.push(p);
        }
        ScenarioData::Concentration(profiles) => {
            let p = dir.join("concentration.csv");
            write_csv(
                &p,
                profiles.iter().flat_map(|pr| {
                    pr.c_plus.iter().enumerate().map(move |(k, &c)| ConcentrationRow {
                        t_plus: pr.t_plus,
                        bin_index: k,
                        r_center: pr.r_centers[k],
                        c_plus: c,
                    })
                }),
            )?;
            files.push(p);
        }
        ScenarioData::Convergence(points) => {
            let p = dir.join("convergence.csv");
            write_csv(&p, points.iter().copied())?;
            files.push(p);
        }
        ScenarioData::Distance(d) => {
            #[derive(Serialize)]
            struct Row {
                t_star: f64,
                d_star_max: f64,
            }
            let p = dir.join("distance.csv");
            write_csv(&p, d.iter().map(|x| Row { t_star: x.t_star, d_star_max: x.d_star_max }))?;
            files.push(p);
        }
    }
    let p = dir.join("steps.csv");
    write_csv(
        &p,
        rep.steps.iter().map(|s| StepRow {
            step: s.step,
            n_active: s.n_active,
            n_subiters_total: s.n_subiters_total,
            max_subiters: s.max_subiters,
            n_wall_stops: s.n_wall_stops,
            n_lost: s.n_lost,
        }),
    )?;
    files.push(p);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for k in [
            ScenarioKind::PointSourceBallistic,
            ScenarioKind::PointSourceDiffusive,
            ScenarioKind::CouetteSingleParticle,
            ScenarioKind::CouetteConcentration,
            ScenarioKind::CouetteConvergence,
            ScenarioKind::MeshRobustness,
        ] {
            ScenarioConfig::preset(k).validate().unwrap();
        }
    }

    #[test]
    fn toml_overrides_preset() {
        let cfg = ScenarioConfig::from_toml_str(
            "scenario = \"point-source-diffusive\"\nn_particles = 10\nmode = \"single\"\n[hit]\nc0 = 5.0\n",
        )
        .unwrap();
        assert_eq!(cfg.n_particles, 10);
        assert_eq!(cfg.mode, IntegratorMode::SingleStep);
        assert_eq!(cfg.hit.c0, 5.0);
        assert_eq!(cfg.hit.t_l, 1.0);
        assert_eq!(cfg.dt, 200.0);
    }

    #[test]
    fn toml_errors() {
        assert!(ScenarioConfig::from_toml_str("n_particles = 3").is_err());
        assert!(ScenarioConfig::from_toml_str("scenario = \"nope\"").is_err());
        assert!(ScenarioConfig::from_toml_str("scenario = \"mesh-robustness\"\nbogus = 1").is_err());
        assert!(ScenarioConfig::from_toml_str("scenario = \"mesh-robustness\"\ndt = -1.0").is_err());
    }

    #[test]
    fn decimation() {
        assert_eq!(output_every(120), 1);
        assert_eq!(output_every(200), 1);
        assert_eq!(output_every(400), 2);
        assert_eq!(output_every(401), 3);
    }

    #[test]
    fn concentration_time_step_is_five_and_a_half_cells() {
        let c = ScenarioConfig::preset(ScenarioKind::CouetteConcentration);
        assert!((c.couette.t_plus(c.dt) - 5.5).abs() < 1e-12);
        assert!((c.couette.t_plus(c.dt * 50.0) - 275.0).abs() < 1e-9);
    }

    #[test]
    fn small_point_source_run_is_reproducible() {
        let mut cfg = ScenarioConfig::preset(ScenarioKind::PointSourceBallistic);
        cfg.n_particles = 200;
        cfg.n_steps = 10;
        cfg.slab.cells_per_flight = 5.0;
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.n_lost, 0);
    }
}
