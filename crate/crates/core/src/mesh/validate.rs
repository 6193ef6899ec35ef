use std::collections::HashMap;
use std::fmt;

use super::{BoundaryKind, Mesh};
use crate::tracking::contains_point;

/// List of invariant violations; empty means the mesh is fit for tracking.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, msg: String) {
        // Keep reports readable on badly broken meshes.
        if self.violations.len() < 1000 {
            self.violations.push(msg);
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "mesh valid");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

pub(super) fn validate(mesh: &Mesh) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let (lo, hi) = mesh.bounds();
    let scale = (hi - lo).norm().max(lo.max_abs()).max(hi.max_abs()).max(f64::MIN_POSITIVE);

    for (fi, face) in mesh.faces.iter().enumerate() {
        let mut vs = face.vertices.clone();
        vs.sort_unstable();
        vs.dedup();
        if vs.len() < 3 {
            rep.push(format!("face {fi}: fewer than 3 distinct vertices"));
        }
        let refs = mesh.face_ref_count(fi);
        let tagged = mesh.boundary[fi].is_some();
        if refs == 1 && !tagged {
            rep.push(format!("face {fi}: single-cell face without boundary tag (non-watertight cell {})", face.owner));
        }
        if refs == 2 && tagged {
            rep.push(format!("face {fi}: interior face carries a boundary tag"));
        }
        if let Some(nb) = face.neighbour {
            let o = orientation(mesh, face.owner, fi);
            let n = orientation(mesh, nb, fi);
            if o == n {
                rep.push(format!("face {fi}: cells {} and {nb} see the same orientation", face.owner));
            }
        }
        if let Some(kind) = mesh.boundary[fi] {
            if let Some(t) = kind.transform() {
                match mesh.periodic_partner(fi) {
                    None => rep.push(format!("face {fi}: periodic face without partner")),
                    Some(g) => {
                        let partner = &mesh.faces[g];
                        for &v in &face.vertices {
                            let p = t.apply_point(mesh.vertices[v]);
                            let hit = partner
                                .vertices
                                .iter()
                                .any(|&w| (mesh.vertices[w] - p).norm() <= 1e-12 * scale);
                            if !hit {
                                rep.push(format!("face {fi}: vertex {v} has no image on partner face {g}"));
                                break;
                            }
                        }
                        let back = mesh.boundary[g].and_then(|k| k.transform());
                        let ok = back.is_some_and(|b| {
                            (b.apply_point(t.apply_point(face.center)) - face.center).norm() <= 1e-9 * scale
                        });
                        if !ok {
                            rep.push(format!("face {fi}: partner {g} transform is not the inverse"));
                        }
                    }
                }
            }
            if matches!(kind, BoundaryKind::PeriodicRotation { axis, .. } if axis.norm() == 0.0) {
                rep.push(format!("face {fi}: zero rotation axis"));
            }
        }
    }

    for (ci, cell) in mesh.cells.iter().enumerate() {
        // Watertightness: every directed edge of the outward loops must be
        // cancelled by its reverse.
        let mut edges: HashMap<(usize, usize), i32> = HashMap::new();
        for cf in &cell.faces {
            let lp = &mesh.faces[cf.face].vertices;
            let k = lp.len();
            for s in 0..k {
                let (mut a, mut b) = (lp[s], lp[(s + 1) % k]);
                if !cf.outward {
                    std::mem::swap(&mut a, &mut b);
                }
                let (key, sign) = if a < b { ((a, b), 1) } else { ((b, a), -1) };
                *edges.entry(key).or_insert(0) += sign;
            }
        }
        if edges.values().any(|&c| c != 0) {
            rep.push(format!("cell {ci}: non-watertight cell"));
            continue;
        }

        // Star shape: every outward sub-face must face away from the center.
        let mut star = true;
        for cf in &cell.faces {
            let face = &mesh.faces[cf.face];
            for s in mesh.face_subfaces(cf.face) {
                if s.is_degenerate() {
                    continue;
                }
                let outward = cf.outward ^ s.flip;
                let n = if outward { s.normal } else { -s.normal };
                if n.dot(face.center - cell.center) <= 0.0 {
                    star = false;
                }
            }
        }
        if !star {
            rep.push(format!("cell {ci}: not star-shaped around its center"));
        }
        match contains_point(mesh, ci, cell.center) {
            Ok(true) => {}
            Ok(false) => rep.push(format!("cell {ci}: center outside the cell")),
            Err(_) => rep.push(format!("cell {ci}: center containment indeterminate")),
        }
    }
    rep
}

fn orientation(mesh: &Mesh, cell: usize, face: usize) -> Option<bool> {
    mesh.cells[cell].faces.iter().find(|cf| cf.face == face).map(|cf| cf.outward)
}
