//! Time-step advancement of particles across mesh cells.
//!
//! * [`IntegratorMode::CellToCell`]: the step is split at the faces crossed
//!   by a deterministic virtual partner that follows the conditional mean
//!   displacement; each piece is integrated with fresh noise using the
//!   fields of the partner's cell. A final track assigns the particle's cell.
//! * [`IntegratorMode::SingleStep`]: one step with the start-cell fields,
//!   then a track to locate the end point.
//! * [`IntegratorMode::Anticipating`]: split times taken from the noisy
//!   trajectory itself (the draw is reused for the piece before the
//!   crossing), which makes the split depend on the noise.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::FieldProvider;
use crate::mesh::{BoundaryKind, Mesh, PeriodicTransform, WallPolicy};
use crate::noise::NoiseStream;
use crate::sde::{exponential_step, mean_conditional_endpoint, CellFields, NoiseDraw};
use crate::tracking::{cell_transit, max_transits, track_into, wall_rest_point, Destination, TrackEnd, TrackError, TransitOutcome};
use crate::vec3::Vec3;

/// Lower clamp on split fractions.
pub const EPS_THETA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntegratorMode {
    #[serde(rename = "cell-to-cell")]
    CellToCell,
    #[serde(rename = "single")]
    SingleStep,
    #[serde(rename = "anticipating")]
    Anticipating,
}

impl FromStr for IntegratorMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cell-to-cell" => Ok(IntegratorMode::CellToCell),
            "single" => Ok(IntegratorMode::SingleStep),
            "anticipating" => Ok(IntegratorMode::Anticipating),
            _ => Err(format!("unknown mode `{s}` (expected cell-to-cell, single or anticipating)")),
        }
    }
}

impl fmt::Display for IntegratorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntegratorMode::CellToCell => "cell-to-cell",
            IntegratorMode::SingleStep => "single",
            IntegratorMode::Anticipating => "anticipating",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub x: Vec3,
    pub u: Vec3,
    pub cell: usize,
    pub active: bool,
    /// Random stream id.
    pub id: u64,
}

impl ParticleState {
    pub fn new(id: u64, x: Vec3, u: Vec3, cell: usize) -> Self {
        ParticleState { x, u, cell, active: true, id }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubIterationRecord {
    pub m: usize,
    pub cell: usize,
    pub theta: f64,
    pub dt_elapsed: f64,
    pub dt_remaining: f64,
    pub exit_face: Option<usize>,
    /// Virtual partner at the end of the sub-iteration (CellToCell only).
    pub x_tilde: Vec3,
    /// Target of the partner in this sub-iteration (CellToCell only).
    pub x_hat: Vec3,
    /// Noise used to integrate the sub-step.
    pub draw: NoiseDraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdvanceSummary {
    pub n_subiters: usize,
    pub wall_stops: usize,
}

fn draw_for(f: &CellFields, noise: &mut NoiseStream) -> NoiseDraw {
    if f.is_laminar() {
        NoiseDraw::default()
    } else {
        noise.draw()
    }
}

fn apply_transforms(p: &mut ParticleState, ts: &[PeriodicTransform]) {
    for t in ts {
        p.u = t.apply_vector(p.u);
    }
}

/// Place the particle at the end of a final track.
fn finish_track(
    p: &mut ParticleState,
    mesh: &Mesh,
    from_cell: usize,
    from: Vec3,
    summary: &mut AdvanceSummary,
) -> Result<(), TrackError> {
    let r = track_into(mesh, from_cell, from, p.x, None)?;
    apply_transforms(p, &r.transforms);
    p.x = r.position;
    p.cell = r.cell;
    match r.end {
        TrackEnd::Inside => {}
        TrackEnd::WallStop { .. } => summary.wall_stops += 1,
        TrackEnd::Outlet { .. } | TrackEnd::Absorbed { .. } => p.active = false,
    }
    Ok(())
}

/// Advance one particle over `dt`. Sub-iteration records are appended to
/// `records` when given.
pub fn advance(
    mode: IntegratorMode,
    p: &mut ParticleState,
    mesh: &Mesh,
    fields: &FieldProvider,
    dt: f64,
    noise: &mut NoiseStream,
    records: Option<&mut Vec<SubIterationRecord>>,
) -> Result<AdvanceSummary, TrackError> {
    match mode {
        IntegratorMode::CellToCell => advance_cell_to_cell(p, mesh, fields, dt, noise, records),
        IntegratorMode::SingleStep => advance_single(p, mesh, fields, dt, noise, records),
        IntegratorMode::Anticipating => advance_anticipating(p, mesh, fields, dt, noise, records),
    }
}

fn advance_cell_to_cell(
    p: &mut ParticleState,
    mesh: &Mesh,
    fields: &FieldProvider,
    dt: f64,
    noise: &mut NoiseStream,
    mut records: Option<&mut Vec<SubIterationRecord>>,
) -> Result<AdvanceSummary, TrackError> {
    let mut s = AdvanceSummary::default();
    let cap = max_transits(mesh);
    let mut x_tilde = p.x;
    let mut cell_vp = p.cell;
    let mut rem = dt;
    let mut elapsed = 0.0;
    loop {
        s.n_subiters += 1;
        if s.n_subiters > cap {
            return Err(TrackError::Lost(format!("sub-iteration cap of {cap} reached")));
        }
        let f = fields.get(cell_vp);
        let x_hat = mean_conditional_endpoint(p.x, p.u, f, rem);
        let (theta, exit) = match cell_transit(mesh, cell_vp, x_tilde, x_hat) {
            TransitOutcome::Stayed => (1.0, None),
            TransitOutcome::Exited(ev, dest) => (ev.theta.clamp(EPS_THETA, 1.0), Some((ev, dest))),
            TransitOutcome::ContainmentError { n_in, n_out } => {
                return Err(TrackError::Containment { cell: cell_vp, n_in, n_out });
            }
        };
        let sub = if theta >= 1.0 { rem } else { theta * rem };
        let draw = draw_for(f, noise);
        let (x, u) = exponential_step(p.x, p.u, f, sub, &draw);
        p.x = x;
        p.u = u;
        elapsed += sub;
        rem = if theta >= 1.0 { 0.0 } else { rem - sub };
        let cell_here = cell_vp;
        let mut stop = theta >= 1.0;
        match exit {
            None => x_tilde = x_hat,
            Some((ev, dest)) => {
                x_tilde = ev.x_i;
                match dest {
                    Destination::Cell(n) => cell_vp = n,
                    Destination::Boundary { face, kind } => match kind {
                        BoundaryKind::Outlet | BoundaryKind::Wall(WallPolicy::Absorb) => {
                            p.active = false;
                            stop = true;
                        }
                        BoundaryKind::Wall(WallPolicy::StopAtFace) => {
                            x_tilde = wall_rest_point(mesh, cell_vp, x_tilde);
                            s.wall_stops += 1;
                            stop = true;
                        }
                        BoundaryKind::PeriodicTranslation(_) | BoundaryKind::PeriodicRotation { .. } => {
                            let t = kind.transform().expect("periodic kind");
                            let partner = mesh
                                .periodic_partner(face)
                                .ok_or_else(|| TrackError::Lost(format!("periodic face {face} has no partner")))?;
                            cell_vp = mesh.faces[partner].owner;
                            x_tilde = t.apply_point(x_tilde);
                            p.x = t.apply_point(p.x);
                            p.u = t.apply_vector(p.u);
                        }
                    },
                }
            }
        }
        if let Some(r) = records.as_deref_mut() {
            r.push(SubIterationRecord {
                m: s.n_subiters,
                cell: cell_here,
                theta,
                dt_elapsed: elapsed,
                dt_remaining: rem,
                exit_face: exit.map(|(ev, _)| ev.face),
                x_tilde,
                x_hat,
                draw,
            });
        }
        if stop {
            break;
        }
    }
    if p.active {
        finish_track(p, mesh, cell_vp, x_tilde, &mut s)?;
    }
    Ok(s)
}

fn advance_single(
    p: &mut ParticleState,
    mesh: &Mesh,
    fields: &FieldProvider,
    dt: f64,
    noise: &mut NoiseStream,
    records: Option<&mut Vec<SubIterationRecord>>,
) -> Result<AdvanceSummary, TrackError> {
    let mut s = AdvanceSummary { n_subiters: 1, wall_stops: 0 };
    let f = fields.get(p.cell);
    let draw = draw_for(f, noise);
    let start = p.x;
    let start_cell = p.cell;
    let (x, u) = exponential_step(p.x, p.u, f, dt, &draw);
    p.x = x;
    p.u = u;
    if let Some(r) = records {
        r.push(SubIterationRecord {
            m: 1,
            cell: start_cell,
            theta: 1.0,
            dt_elapsed: dt,
            dt_remaining: 0.0,
            exit_face: None,
            x_tilde: start,
            x_hat: x,
            draw,
        });
    }
    finish_track(p, mesh, start_cell, start, &mut s)?;
    Ok(s)
}

fn advance_anticipating(
    p: &mut ParticleState,
    mesh: &Mesh,
    fields: &FieldProvider,
    dt: f64,
    noise: &mut NoiseStream,
    mut records: Option<&mut Vec<SubIterationRecord>>,
) -> Result<AdvanceSummary, TrackError> {
    let mut s = AdvanceSummary::default();
    let cap = max_transits(mesh);
    let mut rem = dt;
    let mut elapsed = 0.0;
    loop {
        s.n_subiters += 1;
        if s.n_subiters > cap {
            return Err(TrackError::Lost(format!("sub-iteration cap of {cap} reached")));
        }
        let f = fields.get(p.cell);
        let draw = draw_for(f, noise);
        let (x_end, u_end) = exponential_step(p.x, p.u, f, rem, &draw);
        let cell_here = p.cell;
        let start = p.x;
        let mut stop = false;
        let (theta, face) = match cell_transit(mesh, p.cell, p.x, x_end) {
            TransitOutcome::Stayed => {
                p.x = x_end;
                p.u = u_end;
                elapsed += rem;
                rem = 0.0;
                stop = true;
                (1.0, None)
            }
            TransitOutcome::ContainmentError { n_in, n_out } => {
                return Err(TrackError::Containment { cell: p.cell, n_in, n_out });
            }
            TransitOutcome::Exited(ev, dest) => {
                let theta = ev.theta.clamp(EPS_THETA, 1.0);
                let sub = theta * rem;
                // Same draw over the shorter interval: the anticipating shortcut.
                let (_, u) = exponential_step(p.x, p.u, f, sub, &draw);
                p.x = ev.x_i;
                p.u = u;
                elapsed += sub;
                rem -= sub;
                match dest {
                    Destination::Cell(n) => p.cell = n,
                    Destination::Boundary { face, kind } => match kind {
                        BoundaryKind::Outlet | BoundaryKind::Wall(WallPolicy::Absorb) => {
                            p.active = false;
                            stop = true;
                        }
                        BoundaryKind::Wall(WallPolicy::StopAtFace) => {
                            p.x = wall_rest_point(mesh, p.cell, p.x);
                            s.wall_stops += 1;
                            stop = true;
                        }
                        BoundaryKind::PeriodicTranslation(_) | BoundaryKind::PeriodicRotation { .. } => {
                            let t = kind.transform().expect("periodic kind");
                            let partner = mesh
                                .periodic_partner(face)
                                .ok_or_else(|| TrackError::Lost(format!("periodic face {face} has no partner")))?;
                            p.cell = mesh.faces[partner].owner;
                            p.x = t.apply_point(p.x);
                            p.u = t.apply_vector(p.u);
                        }
                    },
                }
                (theta, Some(ev.face))
            }
        };
        if let Some(r) = records.as_deref_mut() {
            r.push(SubIterationRecord {
                m: s.n_subiters,
                cell: cell_here,
                theta,
                dt_elapsed: elapsed,
                dt_remaining: rem,
                exit_face: face,
                x_tilde: start,
                x_hat: x_end,
                draw,
            });
        }
        if stop {
            break;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub step: u64,
    pub n_active: usize,
    pub n_subiters_total: u64,
    pub max_subiters: usize,
    pub n_wall_stops: usize,
    pub n_lost: usize,
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("step {step}: {n_lost} particle(s) lost; first: particle {particle}: {error}")]
    Lost { step: u64, n_lost: usize, particle: u64, error: TrackError },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Tally {
    subiters: u64,
    max_subiters: usize,
    wall_stops: usize,
    lost: usize,
}

impl Tally {
    fn merge(a: Tally, b: Tally) -> Tally {
        Tally {
            subiters: a.subiters + b.subiters,
            max_subiters: a.max_subiters.max(b.max_subiters),
            wall_stops: a.wall_stops + b.wall_stops,
            lost: a.lost + b.lost,
        }
    }
}

/// Advance every active particle by `dt`. Each particle draws from its own
/// stream keyed by `(master_seed, id, step_index)`, so the result does not
/// depend on the number of worker threads. Lost particles are deactivated;
/// with `strict` any loss turns the step into an error.
#[allow(clippy::too_many_arguments)]
pub fn step_ensemble(
    mode: IntegratorMode,
    particles: &mut [ParticleState],
    mesh: &Mesh,
    fields: &FieldProvider,
    dt: f64,
    master_seed: u64,
    step_index: u64,
    strict: bool,
) -> Result<StepReport, StepError> {
    // Visit particles in cell order so neighbouring work touches
    // neighbouring mesh data; streams are per particle so order is free.
    let mut order: Vec<usize> = (0..particles.len()).filter(|&i| particles[i].active).collect();
    order.sort_unstable_by_key(|&i| (particles[i].cell, i));
    let mut work: Vec<ParticleState> = order.iter().map(|&i| particles[i]).collect();
    let mut errors: Vec<(u64, TrackError)>;
    let tally = {
        let results: Vec<(Tally, Option<(u64, TrackError)>)> = work
            .par_iter_mut()
            .map(|p| {
                let mut noise = NoiseStream::new(master_seed, p.id, step_index);
                let mut t = Tally::default();
                match advance(mode, p, mesh, fields, dt, &mut noise, None) {
                    Ok(s) => {
                        t.subiters = s.n_subiters as u64;
                        t.max_subiters = s.n_subiters;
                        t.wall_stops = s.wall_stops;
                        (t, None)
                    }
                    Err(e) => {
                        p.active = false;
                        t.lost = 1;
                        (t, Some((p.id, e)))
                    }
                }
            })
            .collect();
        let mut acc = Tally::default();
        let mut errs = Vec::new();
        for (t, e) in results {
            acc = Tally::merge(acc, t);
            if let Some(e) = e {
                errs.push(e);
            }
        }
        errors = errs;
        acc
    };
    for (k, &i) in order.iter().enumerate() {
        particles[i] = work[k];
    }
    errors.sort_by_key(|e| e.0);
    let report = StepReport {
        step: step_index,
        n_active: particles.iter().filter(|p| p.active).count(),
        n_subiters_total: tally.subiters,
        max_subiters: tally.max_subiters,
        n_wall_stops: tally.wall_stops,
        n_lost: tally.lost,
    };
    if strict && !errors.is_empty() {
        let (particle, error) = errors.into_iter().next().expect("non-empty");
        return Err(StepError::Lost { step: step_index, n_lost: report.n_lost, particle, error });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{couette_provider, hit_provider};
    use crate::mesh::{build_annulus, build_box_hexa, build_cartesian_slab};

    #[test]
    fn mode_parsing() {
        assert_eq!("cell-to-cell".parse::<IntegratorMode>().unwrap(), IntegratorMode::CellToCell);
        assert_eq!("single".parse::<IntegratorMode>().unwrap(), IntegratorMode::SingleStep);
        assert_eq!("anticipating".parse::<IntegratorMode>().unwrap(), IntegratorMode::Anticipating);
        assert!("x".parse::<IntegratorMode>().is_err());
    }

    #[test]
    fn huge_cell_modes_agree() {
        let mesh = build_box_hexa(1, 1e6).unwrap();
        let fields = hit_provider(1.0, 1.0, 2.1, &mesh).unwrap();
        let start = ParticleState::new(0, Vec3::new(5e5, 5e5, 5e5), Vec3::new(0.3, -0.1, 0.2), 0);
        let mut outs = Vec::new();
        for mode in [IntegratorMode::CellToCell, IntegratorMode::SingleStep, IntegratorMode::Anticipating] {
            let mut p = start;
            let mut rec = Vec::new();
            let mut noise = NoiseStream::new(9, 0, 0);
            advance(mode, &mut p, &mesh, &fields, 0.05, &mut noise, Some(&mut rec)).unwrap();
            assert_eq!(rec.len(), 1);
            outs.push(p);
        }
        assert_eq!(outs[0], outs[1]);
        assert_eq!(outs[1], outs[2]);
    }

    #[test]
    fn couette_bookkeeping() {
        let mesh = build_annulus(360, 21, 1.0, 2.0, 0.1).unwrap();
        let fields = couette_provider(1.0, 2.0, 1.0, &mesh).unwrap();
        let r0 = 1.5;
        let x = Vec3::new(r0, 0.0005, 0.05);
        let cell = mesh.locate(x).unwrap();
        let mut p = ParticleState::new(0, x, Vec3::ZERO, cell);
        let mut rec = Vec::new();
        let dt = 0.3;
        let mut noise = NoiseStream::new(1, 0, 0);
        advance(IntegratorMode::CellToCell, &mut p, &mesh, &fields, dt, &mut noise, Some(&mut rec)).unwrap();
        let k = rec.iter().filter(|r| r.exit_face.is_some()).count();
        assert!(k >= 1);
        assert_eq!(rec.len(), k + 1);
        assert_eq!(rec.last().unwrap().dt_remaining, 0.0);
        let total: f64 = rec.iter().zip(std::iter::once(dt).chain(rec.iter().map(|r| r.dt_remaining)))
            .map(|(r, prev)| if r.theta >= 1.0 { prev } else { r.theta * prev })
            .sum();
        assert!((total - dt).abs() <= 4.0 * f64::EPSILON * dt);
        assert!((rec.last().unwrap().dt_elapsed - dt).abs() <= 4.0 * f64::EPSILON * dt);
        assert!(crate::tracking::contains_point(&mesh, p.cell, p.x).unwrap());
    }

    #[test]
    fn empty_ensemble_is_noop() {
        let mesh = build_cartesian_slab(4, 1.0, 1.0).unwrap();
        let fields = hit_provider(1.0, 1.0, 2.1, &mesh).unwrap();
        let r = step_ensemble(IntegratorMode::CellToCell, &mut [], &mesh, &fields, 0.1, 1, 0, true).unwrap();
        assert_eq!(r.n_active, 0);
        assert_eq!(r.n_subiters_total, 0);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mesh = build_box_hexa(4, 1.0).unwrap();
        let fields = hit_provider(1.0, 1.0, 2.1, &mesh).unwrap();
        let c = mesh.locate(Vec3::new(0.5, 0.5, 0.5)).unwrap_or(0);
        let init: Vec<ParticleState> =
            (0..500).map(|i| ParticleState::new(i, mesh.cells[c].center, Vec3::ZERO, c)).collect();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let mut ps = init.clone();
            pool.install(|| {
                for step in 0..5 {
                    step_ensemble(IntegratorMode::CellToCell, &mut ps, &mesh, &fields, 0.2, 42, step, true).unwrap();
                }
            });
            ps
        };
        let a = run(1);
        let b = run(4);
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.x.to_array().map(f64::to_bits), q.x.to_array().map(f64::to_bits));
            assert_eq!(p.u.to_array().map(f64::to_bits), q.u.to_array().map(f64::to_bits));
            assert_eq!(p.cell, q.cell);
        }
    }
}
