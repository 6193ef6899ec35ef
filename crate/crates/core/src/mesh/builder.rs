use std::collections::HashMap;

use super::{BoundaryKind, Mesh, MeshError};
use crate::vec3::Vec3;

/// Incremental mesh assembly from per-cell face loops. Faces shared by two
/// cells are detected through their vertex sets and stored once, keeping the
/// loop of the first cell that introduced them.
#[derive(Default)]
pub struct MeshBuilder {
    pub vertices: Vec<Vec3>,
    faces: Vec<Vec<usize>>,
    refs: Vec<u8>,
    index: HashMap<Vec<usize>, usize>,
    cells: Vec<Vec<usize>>,
}

impl MeshBuilder {
    pub fn new(vertices: Vec<Vec3>) -> Self {
        MeshBuilder { vertices, ..Default::default() }
    }

    pub fn add_cell<L: AsRef<[usize]>>(&mut self, loops: &[L]) {
        let mut ids = Vec::with_capacity(loops.len());
        for lp in loops {
            let lp = lp.as_ref();
            let mut key = lp.to_vec();
            key.sort_unstable();
            let id = match self.index.get(&key) {
                Some(&id) => id,
                None => {
                    let id = self.faces.len();
                    self.faces.push(lp.to_vec());
                    self.refs.push(0);
                    self.index.insert(key, id);
                    id
                }
            };
            self.refs[id] += 1;
            ids.push(id);
        }
        self.cells.push(ids);
    }

    /// Finish the mesh; `tag` is asked for the kind of every face referenced
    /// by a single cell, given its loop and vertex-mean center.
    pub fn finish<F>(self, tag: F) -> Result<Mesh, MeshError>
    where
        F: Fn(&[usize], Vec3) -> Option<BoundaryKind>,
    {
        let mut tags = Vec::new();
        for (fi, lp) in self.faces.iter().enumerate() {
            if self.refs[fi] == 1 {
                let c = lp.iter().fold(Vec3::ZERO, |a, &v| a + self.vertices[v]) / lp.len() as f64;
                if let Some(k) = tag(lp, c) {
                    tags.push((fi, k));
                }
            }
        }
        Mesh::from_parts(self.vertices, self.faces, self.cells, tags)
    }
}
