//! Line-oriented mesh text format.
//!
//! ```text
//! MESH v1
//! VERTICES n
//! x y z
//! FACES m
//! k v1 ... vk
//! CELLS c
//! k f1 ... fk
//! BOUNDARY
//! face_id outlet | wall [absorb] | ptrans ox oy oz | prot ax ay az angle
//! ```
//!
//! Floats are written in shortest round-trip form, so `read(write(m)) == m`.

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryKind, Mesh, MeshError, WallPolicy};
use crate::vec3::Vec3;

pub fn write_mesh_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("MESH v1\n");
    let _ = writeln!(s, "VERTICES {}", mesh.vertices.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:?} {:?} {:?}", v.x, v.y, v.z);
    }
    let _ = writeln!(s, "FACES {}", mesh.faces.len());
    for f in &mesh.faces {
        let _ = write!(s, "{}", f.vertices.len());
        for v in &f.vertices {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELLS {}", mesh.cells.len());
    for c in &mesh.cells {
        let _ = write!(s, "{}", c.faces.len());
        for cf in &c.faces {
            let _ = write!(s, " {}", cf.face);
        }
        s.push('\n');
    }
    s.push_str("BOUNDARY\n");
    for (fi, b) in mesh.boundary.iter().enumerate() {
        let Some(kind) = b else { continue };
        let _ = match kind {
            BoundaryKind::Outlet => writeln!(s, "{fi} outlet"),
            BoundaryKind::Wall(WallPolicy::StopAtFace) => writeln!(s, "{fi} wall"),
            BoundaryKind::Wall(WallPolicy::Absorb) => writeln!(s, "{fi} wall absorb"),
            BoundaryKind::PeriodicTranslation(o) => writeln!(s, "{fi} ptrans {:?} {:?} {:?}", o.x, o.y, o.z),
            BoundaryKind::PeriodicRotation { axis, angle } => {
                writeln!(s, "{fi} prot {:?} {:?} {:?} {:?}", axis.x, axis.y, axis.z, angle)
            }
        };
    }
    s
}

pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<(), MeshError> {
    std::fs::write(path, write_mesh_string(mesh))?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<Mesh, MeshError> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self) -> Option<Vec<&'a str>> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if !toks.is_empty() {
                return Some(toks);
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<Vec<&'a str>, MeshError> {
        self.next_tokens().ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }

    fn err(&self, msg: String) -> MeshError {
        MeshError::Parse { line: self.line, msg }
    }

    fn section(&mut self, name: &str) -> Result<usize, MeshError> {
        let t = self.expect(name)?;
        if t.len() != 2 || t[0] != name {
            return Err(self.err(format!("expected `{name} <count>`")));
        }
        self.num(t[1])
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T, MeshError> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }

    fn index_list(&mut self, what: &str) -> Result<Vec<usize>, MeshError> {
        let t = self.expect(what)?;
        let k: usize = self.num(t[0])?;
        if t.len() != k + 1 {
            return Err(self.err(format!("{what}: expected {k} indices, found {}", t.len() - 1)));
        }
        t[1..].iter().map(|s| self.num(s)).collect()
    }
}

pub fn parse_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut p = Lines { inner: text.lines().enumerate(), line: 0 };
    let head = p.expect("header")?;
    if head != ["MESH", "v1"] {
        return Err(p.err("missing `MESH v1` header".into()));
    }
    let nv = p.section("VERTICES")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let t = p.expect("vertex")?;
        if t.len() != 3 {
            return Err(p.err("vertex needs 3 coordinates".into()));
        }
        vertices.push(Vec3::new(p.num(t[0])?, p.num(t[1])?, p.num(t[2])?));
    }
    let nf = p.section("FACES")?;
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        faces.push(p.index_list("face")?);
    }
    let nc = p.section("CELLS")?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        cells.push(p.index_list("cell")?);
    }
    let t = p.expect("BOUNDARY")?;
    if t != ["BOUNDARY"] {
        return Err(p.err("expected `BOUNDARY`".into()));
    }
    let mut tags = Vec::new();
    while let Some(t) = p.next_tokens() {
        let face: usize = p.num(t[0])?;
        let kind = match (t.get(1).copied(), t.len()) {
            (Some("outlet"), 2) => BoundaryKind::Outlet,
            (Some("wall"), 2) => BoundaryKind::Wall(WallPolicy::StopAtFace),
            (Some("wall"), 3) if t[2] == "absorb" => BoundaryKind::Wall(WallPolicy::Absorb),
            (Some("ptrans"), 5) => {
                BoundaryKind::PeriodicTranslation(Vec3::new(p.num(t[2])?, p.num(t[3])?, p.num(t[4])?))
            }
            (Some("prot"), 6) => BoundaryKind::PeriodicRotation {
                axis: Vec3::new(p.num(t[2])?, p.num(t[3])?, p.num(t[4])?),
                angle: p.num(t[5])?,
            },
            _ => return Err(p.err(format!("bad boundary entry `{}`", t.join(" ")))),
        };
        tags.push((face, kind));
    }
    Mesh::from_parts(vertices, faces, cells, tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_annulus, build_cartesian_slab, build_perturbed_hexa};

    #[test]
    fn round_trip_is_exact() {
        for m in [
            build_cartesian_slab(4, 1.0, 1.0).unwrap(),
            build_perturbed_hexa(3, 0.3, 7).unwrap(),
            build_annulus(12, 3, 1.0, 2.0, 0.1).unwrap(),
        ] {
            let back = parse_mesh(&write_mesh_string(&m)).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn rotation_tag_round_trips() {
        let text = "MESH v1\nVERTICES 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\nFACES 4\n3 0 1 2\n3 0 1 3\n3 0 2 3\n3 1 2 3\nCELLS 1\n4 0 1 2 3\nBOUNDARY\n0 prot 0 0 1 0.5\n1 wall absorb\n2 outlet\n3 wall\n";
        let m = parse_mesh(text).unwrap();
        assert_eq!(
            m.boundary[0],
            Some(BoundaryKind::PeriodicRotation { axis: Vec3::new(0.0, 0.0, 1.0), angle: 0.5 })
        );
        assert_eq!(parse_mesh(&write_mesh_string(&m)).unwrap(), m);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_mesh("MESH v1\nVERTICES 1\n0 0\n").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 3, .. }));
        assert!(parse_mesh("MESH v2\n").is_err());
    }
}
