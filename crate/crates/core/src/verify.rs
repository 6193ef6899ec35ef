//! Self-check suites run by `lagtrack verify` and by the test-suite.

use std::fmt;

use crate::fields::hit_fields;
use crate::mesh::generate::hexa_loops;
use crate::mesh::{build_box_hexa, build_box_tetra, BoundaryKind, Mesh};
use crate::noise::NoiseStream;
use crate::sde::{exponential_step, integral_moments, two_substep_moments, CellFields, IntegralMoments, NoiseDraw};
use crate::stats::ci_envelope;
use crate::tracking::{cell_transit, contains_point, face_exit_check, Ray, TransitOutcome};
use crate::vec3::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.suites {
            writeln!(f, "[{}] {}: {}", if s.passed { "PASS" } else { "FAIL" }, s.name, s.detail)?;
        }
        Ok(())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn moments_rel(a: &IntegralMoments, b: &IntegralMoments) -> f64 {
    rel(a.var_iu, b.var_iu).max(rel(a.cov, b.cov)).max(rel(a.var_ix, b.var_ix))
}

/// Largest relative gap between the two-sub-step composition and the
/// single-step moments over θ in {0, 0.01, .., 1} and dt/T_L in
/// {1e-6, 1e-3, 1, 1e3, 1e6}.
pub fn split_sweep() -> f64 {
    let (t_l, c0, eps) = (1.0, 2.1, 2.0 / 2.1);
    let mut worst = 0.0f64;
    for dt in [1e-6, 1e-3, 1.0, 1e3, 1e6] {
        let whole = integral_moments(dt, t_l, c0, eps);
        for k in 0..=100 {
            let split = two_substep_moments(k as f64 / 100.0, dt, t_l, c0, eps);
            worst = worst.max(moments_rel(&split, &whole));
        }
    }
    worst
}

/// How sub-face edges are evaluated in [`partition_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubfaceOrdering {
    /// Each edge evaluated once from its lower-index vertex (the kernel).
    Canonical,
    /// Outer edges evaluated from the first vertex in each face's loop, so
    /// a shared edge is computed from a different end in each face.
    Loop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PartitionStats {
    pub trials: usize,
    /// Lines claimed by zero or by more than one sub-face.
    pub violations: usize,
}

fn uniform(rng: &mut NoiseStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

/// Two warped quads sharing an edge, offset far from the origin so that
/// rounding matters.
fn quad_pair(rng: &mut NoiseStream) -> Mesh {
    let off = Vec3::new(uniform(rng, -100.0, 100.0), uniform(rng, -100.0, 100.0), uniform(rng, -100.0, 100.0));
    let mut w = || uniform(rng, -0.2, 0.2);
    let base = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (2.0, 0.0), (2.0, 1.0)];
    let vertices: Vec<Vec3> = base
        .iter()
        .map(|&(x, y)| Vec3::new(x + 0.1 * w(), y + 0.1 * w(), w()) + off)
        .collect();
    let loops = vec![vec![0, 1, 2, 3], vec![1, 4, 5, 2]];
    Mesh::from_parts(vertices, loops, vec![vec![0, 1]], vec![(0, BoundaryKind::Outlet), (1, BoundaryKind::Outlet)])
        .expect("quad pair")
}

fn claims(mesh: &Mesh, ray: &Ray, ordering: SubfaceOrdering) -> usize {
    let mut n = 0;
    for fi in 0..mesh.n_faces() {
        let xf = mesh.faces[fi].center;
        let qf = ray.q(xf);
        match ordering {
            SubfaceOrdering::Canonical => {
                for s in mesh.face_subfaces(fi) {
                    if ray.cross(xf, qf, mesh.vertices[s.i], s).is_some() {
                        n += 1;
                    }
                }
            }
            SubfaceOrdering::Loop => {
                let lp = &mesh.faces[fi].vertices;
                for k in 0..lp.len() {
                    let (a, b) = (mesh.vertices[lp[k]], mesh.vertices[lp[(k + 1) % lp.len()]]);
                    let (ea, eb) = (a - xf, b - xf);
                    let dn = ea.cross(eb).dot(ray.d);
                    if dn == 0.0 {
                        continue;
                    }
                    let al = dn > 0.0;
                    if ray.side(ea, qf) == al && ray.side(eb, qf) != al && ray.side(b - a, ray.q(a)) == al {
                        n += 1;
                    }
                }
            }
        }
    }
    n
}

/// Lines through the shared edge, through the fan edges and through the
/// centres of two warped quads must each be claimed by exactly one
/// sub-face.
pub fn partition_suite(ordering: SubfaceOrdering, trials: usize, seed: u64) -> PartitionStats {
    let mut rng = NoiseStream::auxiliary(seed, 11);
    let mut st = PartitionStats::default();
    for t in 0..trials {
        let mesh = quad_pair(&mut rng);
        let v = |i: usize| mesh.vertices[i];
        let s = uniform(&mut rng, 0.05, 0.95);
        let p = match t % 4 {
            0 | 1 => v(1) + (v(2) - v(1)) * s,
            2 => {
                let f = rng.below(2);
                let k = rng.below(4);
                let xf = mesh.faces[f].center;
                xf + (v(mesh.faces[f].vertices[k]) - xf) * s
            }
            _ => mesh.faces[rng.below(2)].center,
        };
        let d = Vec3::new(uniform(&mut rng, -0.5, 0.5), uniform(&mut rng, -0.5, 0.5), 1.0) * uniform(&mut rng, 0.5, 2.0);
        let ray = Ray::new(p - d * 0.5, d);
        st.trials += 1;
        if claims(&mesh, &ray, ordering) != 1 {
            st.violations += 1;
        }
    }
    st
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParityStats {
    pub trials: usize,
    pub parity_mismatches: usize,
    /// Largest |θ - θ_oracle| over odd-parity segments.
    pub theta_max_err: f64,
    /// Segments whose sampled transitions were too close to resolve.
    pub unresolved: usize,
}

/// Unit hexahedron whose +x face has its corners moved along x only, so the
/// face is the graph `x = h(y, z)` over the unit square.
fn warped_cell(rng: &mut NoiseStream, amp: f64) -> (Mesh, usize) {
    let mut vertices = Vec::with_capacity(8);
    for c in 0..8 {
        let (i, j, k) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
        let x = if i == 1 { 1.0 + uniform(rng, -amp, amp) } else { 0.0 };
        vertices.push(Vec3::new(x, j as f64, k as f64));
    }
    let loops: Vec<Vec<usize>> = hexa_loops([0, 1, 2, 3, 4, 5, 6, 7]).iter().map(|l| l.to_vec()).collect();
    let tags = (0..6).map(|f| (f, BoundaryKind::Outlet)).collect();
    let mesh = Mesh::from_parts(vertices, loops, vec![(0..6).collect()], tags).expect("warped cell");
    let face = (0..6)
        .max_by(|&a, &b| mesh.faces[a].center.x.total_cmp(&mesh.faces[b].center.x))
        .expect("six faces");
    (mesh, face)
}

/// Height of the fan surface of `face` over `(y, z)`.
fn fan_height(mesh: &Mesh, face: usize, y: f64, z: f64) -> f64 {
    for [a, b, c] in mesh.subfaces(face) {
        let det = (b.y - a.y) * (c.z - a.z) - (c.y - a.y) * (b.z - a.z);
        let l1 = ((y - a.y) * (c.z - a.z) - (c.y - a.y) * (z - a.z)) / det;
        let l2 = ((b.y - a.y) * (z - a.z) - (y - a.y) * (b.z - a.z)) / det;
        if l1 >= -1e-14 && l2 >= -1e-14 && l1 + l2 <= 1.0 + 1e-14 {
            return a.x + l1 * (b.x - a.x) + l2 * (c.x - a.x);
        }
    }
    unreachable!("(y, z) outside the unit square")
}

/// Parity and last-crossing θ of random segments against warped faces,
/// compared with a sampled membership oracle refined by bisection.
pub fn warped_parity_suite(trials: usize, seed: u64) -> ParityStats {
    const SAMPLES: usize = 1000;
    let mut rng = NoiseStream::auxiliary(seed, 12);
    let mut st = ParityStats::default();
    for _ in 0..trials {
        let (mesh, face) = warped_cell(&mut rng, 0.25);
        let mut point = || Vec3::new(uniform(&mut rng, -0.5, 1.6), uniform(&mut rng, 0.1, 0.9), uniform(&mut rng, 0.1, 0.9));
        let (o, dst) = (point(), point());
        let inside = |t: f64| {
            let p = o + (dst - o) * t;
            p.x < fan_height(&mesh, face, p.y, p.z)
        };
        st.trials += 1;
        let oracle_odd = inside(0.0) != inside(1.0);
        let (odd, theta) = face_exit_check(&mesh, face, o, dst);
        if odd != oracle_odd {
            st.parity_mismatches += 1;
            continue;
        }
        if !odd {
            continue;
        }
        let mut last = None;
        let mut flips = 0;
        let mut prev = inside(0.0);
        for k in 1..=SAMPLES {
            let now = inside(k as f64 / SAMPLES as f64);
            if now != prev {
                flips += 1;
                last = Some(k);
            }
            prev = now;
        }
        let Some(k) = last else {
            st.unresolved += 1;
            continue;
        };
        if flips % 2 == 0 {
            st.unresolved += 1;
            continue;
        }
        let (mut lo, mut hi) = ((k - 1) as f64 / SAMPLES as f64, k as f64 / SAMPLES as f64);
        let at_lo = inside(lo);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if inside(mid) == at_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let err = (theta.expect("odd parity has a θ") - 0.5 * (lo + hi)).abs();
        st.theta_max_err = st.theta_max_err.max(err);
    }
    st
}

fn outward_normal(mesh: &Mesh, cell: usize, face: usize) -> Vec3 {
    let f = &mesh.faces[face];
    let [a, b, c] = [0, 1, 2].map(|k| mesh.vertices[f.vertices[k]]);
    let n = (b - a).cross(c - a);
    let n = n / n.norm();
    if n.dot(f.center - mesh.cells[cell].center) > 0.0 {
        n
    } else {
        -n
    }
}

/// On planar convex cells, `contains_point` must agree with the half-space
/// test and `cell_transit` with the nearest plane crossing. Returns the
/// number of disagreements.
pub fn convex_equivalence_suite(trials: usize, seed: u64) -> usize {
    let mut rng = NoiseStream::auxiliary(seed, 13);
    let meshes = [build_box_hexa(2, 1.0).expect("hexa"), build_box_tetra(2, 1.0).expect("tetra")];
    let mut bad = 0;
    for t in 0..trials {
        let mesh = &meshes[t % 2];
        let cell = rng.below(mesh.n_cells());
        let p = Vec3::new(rng.uniform(), rng.uniform(), rng.uniform());
        let planes: Vec<(Vec3, Vec3)> = mesh.cells[cell]
            .faces
            .iter()
            .map(|cf| (outward_normal(mesh, cell, cf.face), mesh.faces[cf.face].center))
            .collect();
        let dist = planes.iter().map(|(n, x)| n.dot(p - *x)).fold(f64::NEG_INFINITY, f64::max);
        if dist.abs() > 1e-9 && contains_point(mesh, cell, p).ok() != Some(dist < 0.0) {
            bad += 1;
        }
        if dist < -1e-9 {
            let q = p + Vec3::new(uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0));
            let d = q - p;
            let expect = planes
                .iter()
                .filter(|(n, _)| n.dot(d) > 0.0)
                .map(|(n, x)| n.dot(*x - p) / n.dot(d))
                .fold(f64::INFINITY, f64::min);
            match cell_transit(mesh, cell, p, q) {
                TransitOutcome::Stayed if expect >= 1.0 - 1e-9 => {}
                TransitOutcome::Exited(ev, _) if (ev.theta - expect).abs() <= 1e-9 => {}
                _ => bad += 1,
            }
        }
    }
    bad
}

/// Axis-aligned moves between dyadic points of the unit cube: θ must be
/// the correctly rounded quotient. Returns the number of mismatches.
pub fn axis_aligned_theta_suite() -> usize {
    let mesh = build_box_hexa(1, 1.0).expect("cube");
    let mut bad = 0;
    for axis in 0..3 {
        for k in 1..16 {
            let s = k as f64 / 16.0;
            for sign in [1.0, -1.0] {
                for len in [1.0, 1.5, 2.0, 3.0, 6.5] {
                    let mut o = Vec3::new(0.5, 0.5, 0.5);
                    let mut e = Vec3::ZERO;
                    match axis {
                        0 => (o.x, e.x) = (s, sign),
                        1 => (o.y, e.y) = (s, sign),
                        _ => (o.z, e.z) = (s, sign),
                    }
                    let dist = if sign > 0.0 { 1.0 - s } else { s };
                    let x_d = o + e * len;
                    let ok = match cell_transit(&mesh, 0, o, x_d) {
                        TransitOutcome::Exited(ev, _) => ev.theta == dist / len,
                        TransitOutcome::Stayed => dist >= len,
                        _ => false,
                    };
                    if !ok {
                        bad += 1;
                    }
                }
            }
        }
    }
    bad
}

/// `U = C T_L` with zero noise must be left unchanged by the exponential
/// step; returns the largest relative change of U and of `X' - X - U dt`.
pub fn fixed_point_suite(trials: usize, seed: u64) -> f64 {
    let mut rng = NoiseStream::auxiliary(seed, 14);
    let mut worst = 0.0f64;
    let zero = NoiseDraw { zeta_u: Vec3::ZERO, zeta_x: Vec3::ZERO };
    for _ in 0..trials {
        let t_l = 10f64.powf(uniform(&mut rng, -3.0, 3.0));
        let mean = Vec3::new(uniform(&mut rng, -5.0, 5.0), uniform(&mut rng, -5.0, 5.0), uniform(&mut rng, -5.0, 5.0));
        let gp = Vec3::new(uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0));
        let f = CellFields::new(mean, t_l, uniform(&mut rng, 0.1, 2.0), 1.0, 2.1, gp);
        let dt = t_l * 10f64.powf(uniform(&mut rng, -6.0, 6.0));
        let u = f.drift_c * t_l;
        let x = Vec3::new(1.0, 2.0, 3.0);
        let (x1, u1) = exponential_step(x, u, &f, dt, &zero);
        let scale = u.norm().max(f64::MIN_POSITIVE);
        worst = worst.max((u1 - u).norm() / scale);
        worst = worst.max((x1 - x - u * dt).norm() / (x.norm() + scale * dt));
    }
    worst
}

/// Fraction of `reps` ensembles of `n` exact OU samples at `t = T_L` whose
/// `(xx, xu, uu)` estimates fall inside the 99% envelopes. The three
/// components of each sample count as separate ensembles.
pub fn ci_coverage(reps: usize, n: usize, seed: u64) -> [f64; 3] {
    let f = hit_fields(1.0, 1.0, 2.1).expect("valid fields");
    let t = 1.0;
    let exact = integral_moments(t, 1.0, f.c0, f.epsilon);
    let (cx, cxu, cu) = ci_envelope(t, n, 1.0, 1.0);
    let mut hits = [0usize; 3];
    for r in 0..reps {
        let (mut xx, mut xu, mut uu) = (Vec3::ZERO, Vec3::ZERO, Vec3::ZERO);
        for i in 0..n {
            let mut s = NoiseStream::new(seed, i as u64, r as u64);
            let (x, u) = exponential_step(Vec3::ZERO, Vec3::ZERO, &f, t, &s.draw());
            xx += x.hadamard(x);
            xu += x.hadamard(u);
            uu += u.hadamard(u);
        }
        let k = 1.0 / n as f64;
        for c in 0..3 {
            hits[0] += ((xx[c] * k - exact.var_ix).abs() <= cx) as usize;
            hits[1] += ((xu[c] * k - exact.cov).abs() <= cxu) as usize;
            hits[2] += ((uu[c] * k - exact.var_iu).abs() <= cu) as usize;
        }
    }
    hits.map(|h| h as f64 / (3 * reps) as f64)
}

/// Run every suite at its default size.
pub fn run_all(seed: u64) -> VerifyReport {
    let mut r = VerifyReport::default();
    let mut push = |name, passed, detail: String| r.suites.push(SuiteResult { name, passed, detail });

    let dev = split_sweep();
    push("split-consistency", dev < 1e-10, format!("max relative deviation {dev:.3e}"));

    let canon = partition_suite(SubfaceOrdering::Canonical, 10_000, seed);
    push(
        "edge-partition",
        canon.violations == 0,
        format!("{} of {} lines not claimed exactly once", canon.violations, canon.trials),
    );
    let mutant = partition_suite(SubfaceOrdering::Loop, 10_000, seed);
    push(
        "edge-partition-mutation",
        mutant.violations > 0,
        format!("loop-ordered edges: {} of {} lines mis-claimed (must be > 0)", mutant.violations, mutant.trials),
    );

    let par = warped_parity_suite(10_000, seed);
    push(
        "warped-parity",
        par.parity_mismatches == 0 && par.theta_max_err < 1e-9 && par.unresolved * 100 < par.trials,
        format!(
            "{} parity mismatches, max θ error {:.2e}, {} unresolved of {}",
            par.parity_mismatches, par.theta_max_err, par.unresolved, par.trials
        ),
    );

    let convex = convex_equivalence_suite(10_000, seed);
    push("convex-equivalence", convex == 0, format!("{convex} disagreements"));

    let axis = axis_aligned_theta_suite();
    push("axis-aligned-theta", axis == 0, format!("{axis} inexact cases"));

    let fp = fixed_point_suite(10_000, seed);
    push("fixed-point", fp < 1e-12, format!("max relative change {fp:.3e}"));

    let cov = ci_coverage(200, 1000, seed);
    push(
        "ci-coverage",
        cov.iter().all(|&c| (0.96..=1.0).contains(&c)),
        format!("coverage xx {:.3} xu {:.3} uu {:.3}", cov[0], cov[1], cov[2]),
    );
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        assert!(split_sweep() < 1e-10);
        assert_eq!(partition_suite(SubfaceOrdering::Canonical, 400, 3).violations, 0);
        assert_eq!(warped_parity_suite(200, 3).parity_mismatches, 0);
        assert_eq!(convex_equivalence_suite(400, 3), 0);
        assert_eq!(axis_aligned_theta_suite(), 0);
        assert!(fixed_point_suite(500, 3) < 1e-12);
    }

    #[test]
    fn fan_height_matches_vertices() {
        let mut rng = NoiseStream::auxiliary(5, 0);
        let (mesh, face) = warped_cell(&mut rng, 0.25);
        for &v in &mesh.faces[face].vertices {
            let p = mesh.vertices[v];
            assert!((fan_height(&mesh, face, p.y, p.z) - p.x).abs() < 1e-14);
        }
    }
}
