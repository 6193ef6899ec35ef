//! Face-crossing detection and cell-to-cell particle tracking.
//!
//! A segment `X_O -> X_D` is tested against the triangular sub-faces of the
//! current cell. A sub-face is crossed by the oriented line when the
//! projected origin lies inside the projected triangle, decided by three
//! edge tests of the form `(X_b - X_a) . ((X_O - X_a) x d) > 0` plus the
//! orientation of the triangle with respect to `d`. Because a shared edge is
//! always evaluated with the same canonical vertex order, two adjacent
//! sub-faces never both claim (or both miss) a line through their edge.
//!
//! An edge value of exactly zero (line through an edge or through the face
//! center) is resolved by a fixed symbolic perturbation of `X_O`, so even a
//! line through a shared vertex is claimed by exactly one sub-face. The
//! public [`edge_side_test`] keeps the plain strict inequality.

use crate::mesh::{BoundaryKind, Mesh, MeshError, PeriodicTransform, Subface, WallPolicy};
use crate::vec3::Vec3;

/// Directions of the symbolic perturbation of the line origin.
const TIE1: Vec3 = Vec3::new(0.5406497135603567, -0.2716840412549361, 0.7961531104853927);
const TIE2: Vec3 = Vec3::new(-0.3390917447214011, 0.8717520309121934, 0.3536262925331201);

/// Cast directions of the containment oracle.
const CAST1: Vec3 = Vec3::new(0.4811252243246882, 0.6414390428955468, 0.5975012018513693);
const CAST2: Vec3 = Vec3::new(-0.3271414216074521, 0.8143262155337618, -0.4793179612206823);

/// Consecutive zero-length exits tolerated before a track is declared lost.
pub const MAX_ZERO_EXITS: usize = 8;

/// Fraction of the way from the crossing point to the cell centre at which a
/// wall-stopped particle comes to rest.
pub const WALL_INSET: f64 = 1e-6;

/// Where a particle stopped at a wall face of `cell` at `x_i` is left. A point
/// on the face itself is ambiguous for the next step: a displacement lying in
/// the face plane (a particle moving with the tangential mean flow) meets no
/// face of the cell at all. Star-shapedness puts the inset point inside.
#[inline]
pub fn wall_rest_point(mesh: &Mesh, cell: usize, x_i: Vec3) -> Vec3 {
    x_i + (mesh.cells[cell].center - x_i) * WALL_INSET
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingEvent {
    pub face: usize,
    /// Fraction of the queried segment at the crossing.
    pub theta: f64,
    pub x_i: Vec3,
    /// Exit from the cell being traversed (false = entrance).
    pub exit: bool,
    /// Index of the sub-face within its face.
    pub subface: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Destination {
    Cell(usize),
    Boundary { face: usize, kind: BoundaryKind },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitOutcome {
    Stayed,
    Exited(CrossingEvent, Destination),
    /// Net crossing counts behind / ahead of `X_O` on the infinite line;
    /// anything but (1, 1) means `X_O` is not inside the cell.
    ContainmentError { n_in: i32, n_out: i32 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackError {
    #[error("particle lost: {0}")]
    Lost(String),
    #[error("containment error in cell {cell} (n_in={n_in}, n_out={n_out})")]
    Containment { cell: usize, n_in: i32, n_out: i32 },
}

/// How a tracked segment ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackEnd {
    Inside,
    Outlet { face: usize },
    WallStop { face: usize },
    Absorbed { face: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub cell: usize,
    /// End point, in the frame reached after periodic crossings.
    pub position: Vec3,
    pub end: TrackEnd,
    /// Global segment fraction actually travelled.
    pub theta_end: f64,
    /// Periodic transforms crossed, in order.
    pub transforms: Vec<PeriodicTransform>,
}

/// Strict edge test `(X_b - X_a) x (X_O - X_a) . d > 0`.
pub fn edge_side_test(x_alpha: Vec3, x_beta: Vec3, x_o: Vec3, d: Vec3) -> bool {
    (x_beta - x_alpha).dot((x_o - x_alpha).cross(d)) > 0.0
}

/// Strict orientation test `(X_i - X_f) x (X_j - X_f) . d > 0`.
pub fn face_alignment_test(x_f: Vec3, x_i: Vec3, x_j: Vec3, d: Vec3) -> bool {
    (x_i - x_f).cross(x_j - x_f).dot(d) > 0.0
}

/// Oriented line with its componentwise inverse direction.
pub(crate) struct Ray {
    pub o: Vec3,
    pub d: Vec3,
    inv: Vec3,
    tie1: Vec3,
    tie2: Vec3,
}

impl Ray {
    #[inline]
    pub fn new(o: Vec3, d: Vec3) -> Self {
        Ray {
            o,
            d,
            inv: Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z),
            tie1: TIE1.cross(d),
            tie2: TIE2.cross(d),
        }
    }

    #[inline]
    pub fn q(&self, x: Vec3) -> Vec3 {
        (self.o - x).cross(self.d)
    }

    /// Edge test for edge vector `e` starting at a vertex with `q = (X_O - X_a) x d`.
    #[inline]
    pub fn side(&self, e: Vec3, q: Vec3) -> bool {
        let v = e.dot(q);
        if v != 0.0 {
            return v > 0.0;
        }
        let t = e.dot(self.tie1);
        if t != 0.0 {
            return t > 0.0;
        }
        e.dot(self.tie2) > 0.0
    }

    /// θ and alignment of the line crossing through a sub-face, if any.
    #[inline]
    pub fn cross(&self, xf: Vec3, qf: Vec3, xi: Vec3, s: &Subface) -> Option<(f64, bool)> {
        let a = s.normal.dot(self.d);
        if a == 0.0 {
            return None;
        }
        let align = a > 0.0;
        if self.side(s.e_fi, qf) != align
            || self.side(s.e_fj, qf) == align
            || self.side(s.e_ij, self.q(xi)) != align
        {
            return None;
        }
        Some(((xf - self.o).dot(s.normal) / a, align))
    }

    /// Whether the infinite line meets a (padded) box. A zero direction
    /// component gives an infinite inverse; the NaN of `0 * inf` on a box
    /// plane leaves the interval untouched, which errs towards a hit.
    #[inline]
    fn hits_box(&self, lo: Vec3, hi: Vec3) -> bool {
        let mut t = (f64::NEG_INFINITY, f64::INFINITY);
        slab(self.o.x, self.inv.x, lo.x, hi.x, &mut t);
        slab(self.o.y, self.inv.y, lo.y, hi.y, &mut t);
        slab(self.o.z, self.inv.z, lo.z, hi.z, &mut t);
        t.0 <= t.1
    }
}

#[inline(always)]
fn slab(o: f64, inv: f64, lo: f64, hi: f64, t: &mut (f64, f64)) {
    let (near, far) = if inv.is_sign_negative() { (hi, lo) } else { (lo, hi) };
    let tn = (near - o) * inv;
    let tf = (far - o) * inv;
    if tn > t.0 {
        t.0 = tn;
    }
    if tf < t.1 {
        t.1 = tf;
    }
}

/// θ of the crossing of the line `X_O -> X_D` through triangle
/// `(X_f, X_i, X_j)`, given in canonical order; `None` if not crossed.
pub fn subface_crossing(tri: [Vec3; 3], x_o: Vec3, x_d: Vec3) -> Option<f64> {
    let [xf, xi, xj] = tri;
    let e_fi = xi - xf;
    let e_fj = xj - xf;
    let s = Subface { i: 0, j: 1, flip: false, normal: e_fi.cross(e_fj), e_fi, e_fj, e_ij: xj - xi };
    let ray = Ray::new(x_o, x_d - x_o);
    ray.cross(xf, ray.q(xf), xi, &s).map(|(t, _)| t)
}

/// Parity of the sub-face crossings of a face with θ in `[0, 1)` and the
/// largest such θ when the count is odd.
pub fn face_exit_check(mesh: &Mesh, face: usize, x_o: Vec3, x_d: Vec3) -> (bool, Option<f64>) {
    let ray = Ray::new(x_o, x_d - x_o);
    let xf = mesh.faces[face].center;
    let qf = ray.q(xf);
    let mut count = 0usize;
    let mut last = f64::NEG_INFINITY;
    for s in mesh.face_subfaces(face) {
        if s.is_degenerate() {
            continue;
        }
        if let Some((t, _)) = ray.cross(xf, qf, mesh.vertices[s.i], s) {
            if (0.0..1.0).contains(&t) {
                count += 1;
                last = last.max(t);
            }
        }
    }
    if count % 2 == 1 {
        (true, Some(last))
    } else {
        (false, None)
    }
}

/// One neighbour-search step: does `X_O -> X_D` leave `cell`, and where.
pub fn cell_transit(mesh: &Mesh, cell: usize, x_o: Vec3, x_d: Vec3) -> TransitOutcome {
    let d = x_d - x_o;
    if d == Vec3::ZERO {
        return TransitOutcome::Stayed;
    }
    let c = &mesh.cells[cell];
    let ray = Ray::new(x_o, d);
    // Crossings whose plane passes within `tol` of X_O count as at X_O. The
    // distance is taken normal to the plane so that lines grazing a face the
    // particle sits on are classified the same way as steep ones.
    let tol = 1e-9 * c.radius;

    let (mut ex_ahead, mut en_ahead, mut ex_behind, mut en_behind) = (0i32, 0i32, 0i32, 0i32);
    // (theta, face, subface index)
    let mut best: Option<(f64, usize, usize)> = None;

    for cf in &c.faces {
        let fi = cf.face;
        let g = mesh.face_geom(fi);
        if !ray.hits_box(g.lo, g.hi) {
            continue;
        }
        let xf = g.center;
        let qf = ray.q(xf);
        let (mut f_ex, mut f_en) = (0i32, 0i32);
        let mut f_last = f64::NEG_INFINITY;
        let mut f_sub = 0usize;
        for (si, s) in mesh.subfaces_in(g).iter().enumerate() {
            let Some((theta, align)) = ray.cross(xf, qf, mesh.vertices[s.i], s) else { continue };
            let exit = align == (cf.outward ^ s.flip);
            let h = theta * s.normal.dot(d).abs() / s.normal.norm();
            let ahead = h > tol || (h >= -tol && exit);
            match (ahead, exit) {
                (true, true) => ex_ahead += 1,
                (true, false) => en_ahead += 1,
                (false, true) => ex_behind += 1,
                (false, false) => en_behind += 1,
            }
            if ahead && theta < 1.0 {
                if exit {
                    f_ex += 1;
                    if theta > f_last {
                        f_last = theta;
                        f_sub = si;
                    }
                } else {
                    f_en += 1;
                }
            }
        }
        if f_ex > f_en {
            let better = match best {
                None => true,
                Some((bt, bf, _)) => f_last < bt || (f_last == bt && fi < bf),
            };
            if better {
                best = Some((f_last, fi, f_sub));
            }
        }
    }

    let n_out = ex_ahead - en_ahead;
    let n_in = en_behind - ex_behind;
    if n_out != 1 || n_in != 1 {
        return TransitOutcome::ContainmentError { n_in, n_out };
    }
    let Some((theta, face, subface)) = best else {
        return TransitOutcome::Stayed;
    };
    let theta = theta.max(0.0);
    let ev = CrossingEvent { face, theta, x_i: x_o + d * theta, exit: true, subface };
    let dest = match mesh.boundary[face] {
        Some(kind) => Destination::Boundary { face, kind },
        None => Destination::Cell(mesh.faces[face].other_cell(cell).expect("interior face has two cells")),
    };
    TransitOutcome::Exited(ev, dest)
}

/// Iteration cap for a single [`track`] call.
pub fn max_transits(mesh: &Mesh) -> usize {
    (10 * mesh.n_cells()).max(10_000)
}

/// Follow `X_O -> X_D` from `cell` through successive neighbours.
/// Crossing events are appended to `events` when given, with θ relative to
/// the whole segment.
pub fn track_into(
    mesh: &Mesh,
    cell: usize,
    x_o: Vec3,
    x_d: Vec3,
    mut events: Option<&mut Vec<CrossingEvent>>,
) -> Result<TrackResult, TrackError> {
    let cap = max_transits(mesh);
    let mut cur = cell;
    let mut o = x_o;
    let mut dst = x_d;
    let mut base = 0.0f64;
    let mut zero_run = 0usize;
    let mut transforms = Vec::new();
    for _ in 0..cap {
        match cell_transit(mesh, cur, o, dst) {
            TransitOutcome::Stayed => {
                return Ok(TrackResult { cell: cur, position: dst, end: TrackEnd::Inside, theta_end: 1.0, transforms });
            }
            TransitOutcome::ContainmentError { n_in, n_out } => {
                return Err(TrackError::Containment { cell: cur, n_in, n_out });
            }
            TransitOutcome::Exited(ev, dest) => {
                let global = base + ev.theta * (1.0 - base);
                if let Some(evs) = events.as_deref_mut() {
                    evs.push(CrossingEvent { theta: global, ..ev });
                }
                if ev.theta == 0.0 {
                    zero_run += 1;
                    if zero_run > MAX_ZERO_EXITS {
                        return Err(TrackError::Lost(format!(
                            "no progress after {zero_run} zero-length exits near face {}",
                            ev.face
                        )));
                    }
                } else {
                    zero_run = 0;
                }
                base = global;
                match dest {
                    Destination::Cell(next) => {
                        cur = next;
                        o = ev.x_i;
                    }
                    Destination::Boundary { face, kind } => match kind {
                        BoundaryKind::Outlet => {
                            return Ok(TrackResult {
                                cell: cur,
                                position: ev.x_i,
                                end: TrackEnd::Outlet { face },
                                theta_end: global,
                                transforms,
                            });
                        }
                        BoundaryKind::Wall(policy) => {
                            let end = match policy {
                                WallPolicy::StopAtFace => TrackEnd::WallStop { face },
                                WallPolicy::Absorb => TrackEnd::Absorbed { face },
                            };
                            let position = match policy {
                                WallPolicy::StopAtFace => wall_rest_point(mesh, cur, ev.x_i),
                                WallPolicy::Absorb => ev.x_i,
                            };
                            return Ok(TrackResult { cell: cur, position, end, theta_end: global, transforms });
                        }
                        BoundaryKind::PeriodicTranslation(_) | BoundaryKind::PeriodicRotation { .. } => {
                            let t = kind.transform().expect("periodic kind");
                            let partner = mesh
                                .periodic_partner(face)
                                .ok_or_else(|| TrackError::Lost(format!("periodic face {face} has no partner")))?;
                            cur = mesh.faces[partner].owner;
                            o = t.apply_point(ev.x_i);
                            dst = t.apply_point(dst);
                            transforms.push(t);
                        }
                    },
                }
            }
        }
    }
    Err(TrackError::Lost(format!("iteration cap of {cap} transits reached")))
}

/// [`track_into`] returning the event list.
pub fn track(
    mesh: &Mesh,
    cell: usize,
    x_o: Vec3,
    x_d: Vec3,
) -> Result<(TrackResult, Vec<CrossingEvent>), TrackError> {
    let mut ev = Vec::new();
    let r = track_into(mesh, cell, x_o, x_d, Some(&mut ev))?;
    Ok((r, ev))
}

/// Ray-parity containment oracle: casts the line through `p` along a fixed
/// direction over every sub-face of the cell.
pub fn contains_point(mesh: &Mesh, cell: usize, p: Vec3) -> Result<bool, MeshError> {
    let c = &mesh.cells[cell];
    for dir in [CAST1, CAST2] {
        let ray = Ray::new(p, dir * c.radius.max(f64::MIN_POSITIVE));
        let (mut ex_total, mut en_total, mut net_ahead) = (0i32, 0i32, 0i32);
        let mut degenerate = false;
        for cf in &c.faces {
            let xf = mesh.faces[cf.face].center;
            let qf = ray.q(xf);
            for s in mesh.face_subfaces(cf.face) {
                let Some((t, align)) = ray.cross(xf, qf, mesh.vertices[s.i], s) else { continue };
                if t == 0.0 {
                    degenerate = true;
                }
                let exit = align == (cf.outward ^ s.flip);
                if exit {
                    ex_total += 1;
                } else {
                    en_total += 1;
                }
                if t > 0.0 {
                    net_ahead += if exit { 1 } else { -1 };
                }
            }
        }
        if degenerate || ex_total != en_total {
            continue;
        }
        match net_ahead {
            0 => return Ok(false),
            1 => return Ok(true),
            _ => continue,
        }
    }
    Err(MeshError::ContainmentIndeterminate { cell })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_box_hexa, build_cartesian_slab};

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn edge_test_examples() {
        let (a, b) = (v(0., 0., 0.), v(1., 0., 0.));
        assert!(edge_side_test(a, b, v(0., 1., 0.), v(0., 0., 1.)));
        assert!(!edge_side_test(a, b, v(0.5, 0., 0.), v(0., 0., 1.)));
        assert!(!edge_side_test(b, a, v(0., 1., 0.), v(0., 0., 1.)));
    }

    #[test]
    fn alignment_examples() {
        let (f, i, j) = (v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.));
        assert!(face_alignment_test(f, i, j, v(0., 0., 1.)));
        assert!(!face_alignment_test(f, i, j, v(0., 0., -1.)));
        assert!(!face_alignment_test(f, i, j, v(1., 1., 0.)));
    }

    #[test]
    fn subface_crossing_examples() {
        let tri = [v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)];
        assert_eq!(subface_crossing(tri, v(0.2, 0.2, -1.), v(0.2, 0.2, 1.)), Some(0.5));
        assert_eq!(subface_crossing(tri, v(2., 2., -1.), v(2., 2., 1.)), None);
    }

    #[test]
    fn unit_cube_transits() {
        let m = build_box_hexa(1, 1.0).unwrap();
        let c = v(0.5, 0.5, 0.5);
        match cell_transit(&m, 0, c, v(1.5, 0.5, 0.5)) {
            TransitOutcome::Exited(ev, _) => {
                assert_eq!(ev.theta, 0.5);
                assert_eq!(ev.x_i, v(1.0, 0.5, 0.5));
                assert_eq!(m.faces[ev.face].center.x, 1.0);
            }
            o => panic!("unexpected {o:?}"),
        }
        assert_eq!(cell_transit(&m, 0, c, v(0.6, 0.5, 0.5)), TransitOutcome::Stayed);
        assert!(matches!(
            cell_transit(&m, 0, v(1.5, 0.5, 0.5), v(1.6, 0.5, 0.5)),
            TransitOutcome::ContainmentError { .. }
        ));
    }

    #[test]
    fn cube_containment() {
        let m = build_box_hexa(1, 1.0).unwrap();
        assert!(contains_point(&m, 0, v(0.5, 0.5, 0.5)).unwrap());
        assert!(!contains_point(&m, 0, v(1.5, 0.5, 0.5)).unwrap());
    }

    #[test]
    fn slab_track_two_crossings() {
        let m = build_cartesian_slab(4, 1.0, 100.0).unwrap();
        let (r, ev) = track(&m, 0, v(0.25, 0.0, 0.0), v(2.75, 0.0, 0.0)).unwrap();
        assert_eq!(ev.len(), 2);
        assert_eq!(r.cell, 2);
        assert_eq!(r.end, TrackEnd::Inside);
        assert!(ev[0].theta < ev[1].theta);
    }

    #[test]
    fn slab_outlet_deactivates() {
        let m = build_cartesian_slab(4, 1.0, 100.0).unwrap();
        let (r, _) = track(&m, 3, v(3.5, 0.0, 0.0), v(5.0, 0.0, 0.0)).unwrap();
        assert!(matches!(r.end, TrackEnd::Outlet { .. }));
        assert_eq!(r.position, v(4.0, 0.0, 0.0));
    }

    #[test]
    fn slab_periodic_wraps() {
        let m = build_cartesian_slab(4, 1.0, 10.0).unwrap();
        let (r, _) = track(&m, 1, v(1.5, 4.0, 0.0), v(1.5, 7.0, 0.0)).unwrap();
        assert_eq!(r.end, TrackEnd::Inside);
        assert_eq!(r.cell, 1);
        assert!((r.position - v(1.5, -3.0, 0.0)).norm() < 1e-12);
        assert_eq!(r.transforms.len(), 1);
    }
}
