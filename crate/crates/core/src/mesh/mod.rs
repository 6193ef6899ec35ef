//! Unstructured polyhedral meshes.
//!
//! Faces are stored once with a single vertex loop. Each cell records, per
//! face, whether the loop's right-hand normal points out of that cell; the
//! flag is derived geometrically at construction. Faces are decomposed into
//! triangular sub-faces `(X_f, X_i, X_j)` around the vertex-mean center with
//! `i < j` in global vertex numbering, so both incident cells evaluate
//! exactly the same floating-point expressions for a shared face.

mod builder;
pub mod generate;
pub mod io;
mod validate;

use std::collections::HashMap;

use thiserror::Error;

use crate::vec3::Vec3;

pub use builder::MeshBuilder;
pub use generate::{
    build_annulus, build_box_hexa, build_box_tetra, build_cartesian_slab, build_perturbed_hexa,
    build_perturbed_hexa_scaled,
};
pub use validate::ValidationReport;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed mesh: {0}")]
    Structure(String),
    #[error("mesh file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("containment indeterminate for cell {cell}")]
    ContainmentIndeterminate { cell: usize },
}

/// What happens to a particle reaching a wall face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WallPolicy {
    /// Place the particle on the face and drop the rest of the displacement.
    #[default]
    StopAtFace,
    /// Remove the particle.
    Absorb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryKind {
    Outlet,
    /// Offset added to a point on this face to reach the partner face.
    PeriodicTranslation(Vec3),
    /// Rotation about an axis through the origin mapping this face onto its partner.
    PeriodicRotation { axis: Vec3, angle: f64 },
    Wall(WallPolicy),
}

impl BoundaryKind {
    pub fn transform(&self) -> Option<PeriodicTransform> {
        match *self {
            BoundaryKind::PeriodicTranslation(off) => Some(PeriodicTransform::Translation(off)),
            BoundaryKind::PeriodicRotation { axis, angle } => {
                Some(PeriodicTransform::Rotation { axis: axis / axis.norm(), angle })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeriodicTransform {
    Translation(Vec3),
    Rotation { axis: Vec3, angle: f64 },
}

impl PeriodicTransform {
    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        match *self {
            PeriodicTransform::Translation(off) => p + off,
            PeriodicTransform::Rotation { axis, angle } => rotate(p, axis, angle),
        }
    }

    /// Velocities and displacements only see the rotational part.
    pub fn apply_vector(&self, v: Vec3) -> Vec3 {
        match *self {
            PeriodicTransform::Translation(_) => v,
            PeriodicTransform::Rotation { axis, angle } => rotate(v, axis, angle),
        }
    }
}

fn rotate(v: Vec3, k: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    v * c + k.cross(v) * s + k * (k.dot(v) * (1.0 - c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub vertices: Vec<usize>,
    /// Arithmetic mean of the loop vertices.
    pub center: Vec3,
    pub owner: usize,
    pub neighbour: Option<usize>,
}

impl Face {
    /// The cell on the other side of this face as seen from `cell`.
    #[inline]
    pub fn other_cell(&self, cell: usize) -> Option<usize> {
        if self.owner == cell {
            self.neighbour
        } else {
            Some(self.owner)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellFace {
    pub face: usize,
    /// True when the face loop normal points out of the cell.
    pub outward: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub faces: Vec<CellFace>,
    /// Distinct vertex ids, sorted.
    pub vertices: Vec<usize>,
    pub center: Vec3,
    /// Largest center-to-vertex distance.
    pub radius: f64,
}

/// Precomputed sub-face data used by the crossing tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subface {
    pub i: usize,
    pub j: usize,
    /// True when `(i, j)` runs against the face loop direction.
    pub flip: bool,
    /// `(X_i - X_f) x (X_j - X_f)`.
    pub normal: Vec3,
    pub e_fi: Vec3,
    pub e_fj: Vec3,
    pub e_ij: Vec3,
}

impl Subface {
    #[inline]
    pub fn is_degenerate(&self) -> bool {
        self.normal == Vec3::ZERO
    }
}

/// Per-face data read by the tracking loop, kept together in one record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct FaceGeom {
    /// Padded bounding box.
    pub lo: Vec3,
    pub hi: Vec3,
    pub center: Vec3,
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<Face>,
    pub cells: Vec<Cell>,
    /// Boundary kind per face; `None` for interior faces.
    pub boundary: Vec<Option<BoundaryKind>>,
    periodic_partner: Vec<Option<usize>>,
    face_refs: Vec<u8>,
    subfaces: Vec<Subface>,
    face_geom: Vec<FaceGeom>,
}

impl Mesh {
    /// Assemble a mesh from raw loops. `cells[c]` lists face ids; orientation
    /// flags, owner/neighbour and geometric data are derived here. Only
    /// defects that make the data unusable are errors; the rest is left to
    /// [`Mesh::validate`].
    pub fn from_parts(
        vertices: Vec<Vec3>,
        face_loops: Vec<Vec<usize>>,
        cell_faces: Vec<Vec<usize>>,
        boundary_tags: Vec<(usize, BoundaryKind)>,
    ) -> Result<Mesh, MeshError> {
        let nv = vertices.len();
        let nf = face_loops.len();
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(MeshError::Structure("non-finite vertex coordinate".into()));
        }
        for (fi, lp) in face_loops.iter().enumerate() {
            if lp.len() < 3 {
                return Err(MeshError::Structure(format!("face {fi} has fewer than 3 vertices")));
            }
            if let Some(&v) = lp.iter().find(|&&v| v >= nv) {
                return Err(MeshError::Structure(format!("face {fi} references vertex {v}")));
            }
            for k in 0..lp.len() {
                if lp[k] == lp[(k + 1) % lp.len()] {
                    return Err(MeshError::Structure(format!(
                        "face {fi} has consecutive duplicate vertex {}",
                        lp[k]
                    )));
                }
            }
        }

        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nf];
        for (ci, fl) in cell_faces.iter().enumerate() {
            if fl.is_empty() {
                return Err(MeshError::Structure(format!("cell {ci} has no faces")));
            }
            for &f in fl {
                if f >= nf {
                    return Err(MeshError::Structure(format!("cell {ci} references face {f}")));
                }
                incident[f].push(ci);
            }
        }
        let mut faces = Vec::with_capacity(nf);
        let mut face_refs = Vec::with_capacity(nf);
        for (fi, lp) in face_loops.into_iter().enumerate() {
            let inc = &incident[fi];
            if inc.is_empty() || inc.len() > 2 {
                return Err(MeshError::Structure(format!(
                    "face {fi} is referenced by {} cells",
                    inc.len()
                )));
            }
            let center = lp.iter().fold(Vec3::ZERO, |a, &v| a + vertices[v]) / lp.len() as f64;
            face_refs.push(inc.len() as u8);
            faces.push(Face { vertices: lp, center, owner: inc[0], neighbour: inc.get(1).copied() });
        }

        let mut cells = Vec::with_capacity(cell_faces.len());
        for fl in &cell_faces {
            let mut vs: Vec<usize> =
                fl.iter().flat_map(|&f| faces[f].vertices.iter().copied()).collect();
            vs.sort_unstable();
            vs.dedup();
            let center = vs.iter().fold(Vec3::ZERO, |a, &v| a + vertices[v]) / vs.len() as f64;
            let radius = vs.iter().map(|&v| (vertices[v] - center).norm()).fold(0.0, f64::max);
            let faces_oriented = fl
                .iter()
                .map(|&f| {
                    let face = &faces[f];
                    let n = loop_normal(&vertices, &face.vertices, face.center);
                    CellFace { face: f, outward: n.dot(face.center - center) >= 0.0 }
                })
                .collect();
            cells.push(Cell { faces: faces_oriented, vertices: vs, center, radius });
        }

        let mut boundary = vec![None; nf];
        for (f, kind) in boundary_tags {
            if f >= nf {
                return Err(MeshError::Structure(format!("boundary tag on unknown face {f}")));
            }
            boundary[f] = Some(kind);
        }

        let mut subfaces = Vec::new();
        let mut face_geom = Vec::with_capacity(nf);
        for face in &faces {
            let start = subfaces.len();
            subfaces.extend(build_subfaces(&vertices, face));
            let end = subfaces.len();
            if end > u32::MAX as usize {
                return Err(MeshError::Structure("too many sub-faces".into()));
            }
            let mut lo = face.center;
            let mut hi = face.center;
            for &v in &face.vertices {
                lo = lo.min(vertices[v]);
                hi = hi.max(vertices[v]);
            }
            let diam = (hi - lo).norm();
            let scale = lo.max_abs().max(hi.max_abs());
            let pad = 1e-9 * diam + 1e-13 * scale;
            let pad = Vec3::new(pad, pad, pad);
            face_geom.push(FaceGeom {
                lo: lo - pad,
                hi: hi + pad,
                center: face.center,
                start: start as u32,
                end: end as u32,
            });
        }

        let mut mesh = Mesh {
            vertices,
            faces,
            cells,
            boundary,
            periodic_partner: vec![None; nf],
            face_refs,
            subfaces,
            face_geom,
        };
        mesh.match_periodic_partners();
        Ok(mesh)
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    #[inline]
    pub fn face_subfaces(&self, face: usize) -> &[Subface] {
        let g = &self.face_geom[face];
        &self.subfaces[g.start as usize..g.end as usize]
    }

    /// Sub-face triangles `(X_f, X_i, X_j)` of a face in canonical order.
    pub fn subfaces(&self, face: usize) -> Vec<[Vec3; 3]> {
        let xf = self.faces[face].center;
        self.face_subfaces(face)
            .iter()
            .map(|s| [xf, self.vertices[s.i], self.vertices[s.j]])
            .collect()
    }

    #[inline]
    pub(crate) fn subfaces_in(&self, g: &FaceGeom) -> &[Subface] {
        &self.subfaces[g.start as usize..g.end as usize]
    }

    #[inline]
    pub(crate) fn face_geom(&self, face: usize) -> &FaceGeom {
        &self.face_geom[face]
    }

    /// Face reached through a periodic boundary face.
    #[inline]
    pub fn periodic_partner(&self, face: usize) -> Option<usize> {
        self.periodic_partner[face]
    }

    pub(crate) fn face_ref_count(&self, face: usize) -> u8 {
        self.face_refs[face]
    }

    /// Axis-aligned bounding box of all vertices.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for &v in &self.vertices {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn validate(&self) -> ValidationReport {
        validate::validate(self)
    }

    /// Largest distance from any face vertex to the best plane through the
    /// face center (normal = summed sub-face normals).
    pub fn max_face_warp(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (fi, face) in self.faces.iter().enumerate() {
            let n: Vec3 = self.face_subfaces(fi).iter().fold(Vec3::ZERO, |a, s| {
                a + if s.flip { -s.normal } else { s.normal }
            });
            let len = n.norm();
            if len == 0.0 {
                continue;
            }
            let n = n / len;
            for &v in &face.vertices {
                worst = worst.max((self.vertices[v] - face.center).dot(n).abs());
            }
        }
        worst
    }

    /// Cell whose center is closest to `p`.
    pub fn nearest_cell(&self, p: Vec3) -> usize {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (ci, c) in self.cells.iter().enumerate() {
            let d = (c.center - p).norm2();
            if d < bd {
                bd = d;
                best = ci;
            }
        }
        best
    }

    /// Locate `p` by scanning cells near it with the containment oracle.
    pub fn locate(&self, p: Vec3) -> Option<usize> {
        let mut order: Vec<(f64, usize)> =
            self.cells.iter().enumerate().map(|(i, c)| ((c.center - p).norm2(), i)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        order
            .into_iter()
            .take_while(|&(d2, i)| d2.sqrt() <= self.cells[i].radius * 4.0 + 1e-300)
            .map(|(_, i)| i)
            .find(|&i| crate::tracking::contains_point(self, i, p).unwrap_or(false))
    }

    fn match_periodic_partners(&mut self) {
        let (lo, hi) = self.bounds();
        let diam = (hi - lo).norm().max(f64::MIN_POSITIVE);
        let h = 1e-6 * diam;
        let key = |p: Vec3| {
            ((p.x / h).floor() as i64, (p.y / h).floor() as i64, (p.z / h).floor() as i64)
        };
        let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (fi, b) in self.boundary.iter().enumerate() {
            if b.and_then(|k| k.transform()).is_some() {
                grid.entry(key(self.faces[fi].center)).or_default().push(fi);
            }
        }
        let tol = 1e-9 * diam;
        for fi in 0..self.faces.len() {
            let Some(t) = self.boundary[fi].and_then(|k| k.transform()) else { continue };
            let target = t.apply_point(self.faces[fi].center);
            let (kx, ky, kz) = key(target);
            let mut found = None;
            'outer: for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(list) = grid.get(&(kx + dx, ky + dy, kz + dz)) {
                            for &g in list {
                                if g != fi && (self.faces[g].center - target).norm() <= tol {
                                    found = Some(g);
                                    break 'outer;
                                }
                            }
                        }
                    }
                }
            }
            self.periodic_partner[fi] = found;
        }
    }
}

/// Twice the vector area of a face loop, summed over its fan around the center.
pub(crate) fn loop_normal(vertices: &[Vec3], lp: &[usize], center: Vec3) -> Vec3 {
    let k = lp.len();
    (0..k).fold(Vec3::ZERO, |acc, s| {
        let a = vertices[lp[s]] - center;
        let b = vertices[lp[(s + 1) % k]] - center;
        acc + a.cross(b)
    })
}

fn build_subfaces(vertices: &[Vec3], face: &Face) -> Vec<Subface> {
    let k = face.vertices.len();
    let xf = face.center;
    (0..k)
        .map(|s| {
            let a = face.vertices[s];
            let b = face.vertices[(s + 1) % k];
            let (i, j, flip) = if a < b { (a, b, false) } else { (b, a, true) };
            let e_fi = vertices[i] - xf;
            let e_fj = vertices[j] - xf;
            Subface { i, j, flip, normal: e_fi.cross(e_fj), e_fi, e_fj, e_ij: vertices[j] - vertices[i] }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_transform_is_rigid() {
        let t = PeriodicTransform::Rotation { axis: Vec3::new(0.0, 0.0, 1.0), angle: std::f64::consts::FRAC_PI_2 };
        let p = t.apply_point(Vec3::new(1.0, 0.0, 0.5));
        assert!((p - Vec3::new(0.0, 1.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn face_refs_over_two_is_rejected() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let err = Mesh::from_parts(v, vec![vec![0, 1, 2]], vec![vec![0], vec![0], vec![0]], vec![]);
        assert!(matches!(err, Err(MeshError::Structure(_))));
    }

    #[test]
    fn consecutive_duplicate_vertices_rejected() {
        let v = vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let err = Mesh::from_parts(v, vec![vec![0, 1, 1, 2]], vec![vec![0]], vec![]);
        assert!(matches!(err, Err(MeshError::Structure(_))));
    }
}
