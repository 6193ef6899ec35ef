//! Mesh generators: Cartesian slab, periodic boxes (hexahedral, jittered,
//! tetrahedral) and a one-layer annulus.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use super::{BoundaryKind, Mesh, MeshBuilder, MeshError, WallPolicy};
use crate::vec3::Vec3;

fn positive(name: &str, v: f64) -> Result<(), MeshError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(MeshError::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// Outward loops of a hexahedron whose corners are indexed `i + 2j + 4k`.
pub(crate) fn hexa_loops(c: [usize; 8]) -> [[usize; 4]; 6] {
    [
        [c[0], c[4], c[6], c[2]],
        [c[1], c[3], c[7], c[5]],
        [c[0], c[1], c[5], c[4]],
        [c[2], c[6], c[7], c[3]],
        [c[0], c[2], c[3], c[1]],
        [c[4], c[5], c[7], c[6]],
    ]
}

/// A line of `n_cells` hexahedra along x. The x-ends are outlets; each cell's
/// y and z faces are periodic partners of one another.
pub fn build_cartesian_slab(n_cells: usize, dx: f64, transverse_extent: f64) -> Result<Mesh, MeshError> {
    if n_cells == 0 {
        return Err(MeshError::InvalidParameter("n_cells must be at least 1".into()));
    }
    positive("dx", dx)?;
    positive("transverse_extent", transverse_extent)?;
    let h = transverse_extent / 2.0;
    let mut verts = Vec::with_capacity(4 * (n_cells + 1));
    for k in 0..=n_cells {
        let x = k as f64 * dx;
        for (y, z) in [(-h, -h), (h, -h), (-h, h), (h, h)] {
            verts.push(Vec3::new(x, y, z));
        }
    }
    let mut b = MeshBuilder::new(verts);
    for k in 0..n_cells {
        let v = |i: usize, j: usize, l: usize| 4 * (k + i) + j + 2 * l;
        let c = [v(0, 0, 0), v(1, 0, 0), v(0, 1, 0), v(1, 1, 0), v(0, 0, 1), v(1, 0, 1), v(0, 1, 1), v(1, 1, 1)];
        b.add_cell(&hexa_loops(c));
    }
    let length = n_cells as f64 * dx;
    let t = transverse_extent;
    b.finish(|_, c| {
        Some(if c.x == 0.0 || c.x == length {
            BoundaryKind::Outlet
        } else if c.y == -h {
            BoundaryKind::PeriodicTranslation(Vec3::new(0.0, t, 0.0))
        } else if c.y == h {
            BoundaryKind::PeriodicTranslation(Vec3::new(0.0, -t, 0.0))
        } else if c.z == -h {
            BoundaryKind::PeriodicTranslation(Vec3::new(0.0, 0.0, t))
        } else {
            BoundaryKind::PeriodicTranslation(Vec3::new(0.0, 0.0, -t))
        })
    })
}

fn box_vertices(n: usize, side: f64) -> Vec<Vec3> {
    let dx = side / n as f64;
    let mut v = Vec::with_capacity((n + 1).pow(3));
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                // Exact end coordinates keep periodic faces aligned.
                let c = |m: usize| if m == n { side } else { m as f64 * dx };
                v.push(Vec3::new(c(i), c(j), c(k)));
            }
        }
    }
    v
}

fn box_periodic_tag(side: f64) -> impl Fn(&[usize], Vec3) -> Option<BoundaryKind> {
    move |_, c| {
        let e = 1e-9 * side;
        let off = if c.x.abs() < e {
            Vec3::new(side, 0.0, 0.0)
        } else if (c.x - side).abs() < e {
            Vec3::new(-side, 0.0, 0.0)
        } else if c.y.abs() < e {
            Vec3::new(0.0, side, 0.0)
        } else if (c.y - side).abs() < e {
            Vec3::new(0.0, -side, 0.0)
        } else if c.z.abs() < e {
            Vec3::new(0.0, 0.0, side)
        } else {
            Vec3::new(0.0, 0.0, -side)
        };
        Some(BoundaryKind::PeriodicTranslation(off))
    }
}

fn cube_corners(n: usize, i: usize, j: usize, k: usize) -> [usize; 8] {
    let id = |a: usize, b: usize, c: usize| a + (n + 1) * (b + (n + 1) * c);
    [
        id(i, j, k),
        id(i + 1, j, k),
        id(i, j + 1, k),
        id(i + 1, j + 1, k),
        id(i, j, k + 1),
        id(i + 1, j, k + 1),
        id(i, j + 1, k + 1),
        id(i + 1, j + 1, k + 1),
    ]
}

fn hexa_box_from_vertices(n: usize, side: f64, verts: Vec<Vec3>) -> Result<Mesh, MeshError> {
    let mut b = MeshBuilder::new(verts);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                b.add_cell(&hexa_loops(cube_corners(n, i, j, k)));
            }
        }
    }
    b.finish(box_periodic_tag(side))
}

/// Fully periodic box `[0, side]^3` of `n^3` hexahedra.
pub fn build_box_hexa(n: usize, side: f64) -> Result<Mesh, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidParameter("n_per_side must be at least 1".into()));
    }
    positive("side", side)?;
    hexa_box_from_vertices(n, side, box_vertices(n, side))
}

/// Unit periodic box with interior vertices jittered; faces become warped.
pub fn build_perturbed_hexa(n_per_side: usize, jitter: f64, seed: u64) -> Result<Mesh, MeshError> {
    build_perturbed_hexa_scaled(n_per_side, 1.0, jitter, seed)
}

pub fn build_perturbed_hexa_scaled(n: usize, side: f64, jitter: f64, seed: u64) -> Result<Mesh, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidParameter("n_per_side must be at least 1".into()));
    }
    positive("side", side)?;
    if !(0.0..0.5).contains(&jitter) {
        return Err(MeshError::InvalidParameter(format!("jitter must lie in [0, 0.5), got {jitter}")));
    }
    let mut verts = box_vertices(n, side);
    if jitter > 0.0 {
        let amp = jitter * side / n as f64;
        let mut rng = Pcg64::seed_from_u64(seed);
        for k in 1..n {
            for j in 1..n {
                for i in 1..n {
                    let id = i + (n + 1) * (j + (n + 1) * k);
                    let d = Vec3::new(
                        rng.random_range(-amp..amp),
                        rng.random_range(-amp..amp),
                        rng.random_range(-amp..amp),
                    );
                    verts[id] += d;
                }
            }
        }
    }
    hexa_box_from_vertices(n, side, verts)
}

/// Periodic box with every cube split into six tetrahedra sharing the main
/// diagonal; the split is translation invariant, so neighbours conform.
pub fn build_box_tetra(n: usize, side: f64) -> Result<Mesh, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidParameter("n_per_side must be at least 1".into()));
    }
    positive("side", side)?;
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut b = MeshBuilder::new(box_vertices(n, side));
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let c = cube_corners(n, i, j, k);
                for p in PERMS {
                    let mut bits = 0usize;
                    let mut t = [c[0]; 4];
                    for (s, &axis) in p.iter().enumerate() {
                        bits |= 1 << axis;
                        t[s + 1] = c[bits];
                    }
                    b.add_cell(&[[t[0], t[1], t[2]], [t[0], t[1], t[3]], [t[0], t[2], t[3]], [t[1], t[2], t[3]]]);
                }
            }
        }
    }
    b.finish(box_periodic_tag(side))
}

/// One-layer annulus of `n_theta * n_r` hexahedra between radii `r_in` and
/// `r_out`, periodic in z with period `depth`. Cells are numbered ring by
/// ring from the inner wall outward.
pub fn build_annulus(n_theta: usize, n_r: usize, r_in: f64, r_out: f64, depth: f64) -> Result<Mesh, MeshError> {
    if n_theta < 3 || n_r == 0 {
        return Err(MeshError::InvalidParameter("need n_theta >= 3 and n_r >= 1".into()));
    }
    positive("r_in", r_in)?;
    positive("depth", depth)?;
    if !(r_out > r_in) || !r_out.is_finite() {
        return Err(MeshError::InvalidParameter(format!("degenerate radii {r_in}, {r_out}")));
    }
    let dr = (r_out - r_in) / n_r as f64;
    let radius = |a: usize| if a == n_r { r_out } else { r_in + a as f64 * dr };
    let trig: Vec<(f64, f64)> = (0..n_theta)
        .map(|b| (2.0 * std::f64::consts::PI * b as f64 / n_theta as f64).sin_cos())
        .collect();
    let per_layer = (n_r + 1) * n_theta;
    let mut verts = Vec::with_capacity(2 * per_layer);
    for z in [0.0, depth] {
        for a in 0..=n_r {
            let r = radius(a);
            for &(s, c) in &trig {
                verts.push(Vec3::new(r * c, r * s, z));
            }
        }
    }
    let vid = |a: usize, b: usize, l: usize| l * per_layer + a * n_theta + (b % n_theta);
    let mut bld = MeshBuilder::new(verts);
    for a in 0..n_r {
        for b in 0..n_theta {
            let c = [
                vid(a, b, 0),
                vid(a + 1, b, 0),
                vid(a, b + 1, 0),
                vid(a + 1, b + 1, 0),
                vid(a, b, 1),
                vid(a + 1, b, 1),
                vid(a, b + 1, 1),
                vid(a + 1, b + 1, 1),
            ];
            bld.add_cell(&hexa_loops(c));
        }
    }
    let ring = move |v: usize| (v % per_layer) / n_theta;
    bld.finish(move |lp, c| {
        Some(if c.z == 0.0 {
            BoundaryKind::PeriodicTranslation(Vec3::new(0.0, 0.0, depth))
        } else if c.z == depth {
            BoundaryKind::PeriodicTranslation(Vec3::new(0.0, 0.0, -depth))
        } else if lp.iter().all(|&v| ring(v) == 0) || lp.iter().all(|&v| ring(v) == n_r) {
            BoundaryKind::Wall(WallPolicy::StopAtFace)
        } else {
            return None;
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slab_counts_and_centers() {
        let m = build_cartesian_slab(4, 1.0, 100.0).unwrap();
        assert_eq!(m.n_cells(), 4);
        assert_eq!(m.n_faces(), 21);
        for (i, c) in m.cells.iter().enumerate() {
            assert_eq!(c.center.x, i as f64 + 0.5);
        }
        assert!(m.validate().is_empty());
    }

    #[test]
    fn slab_rejects_bad_dimensions() {
        assert!(build_cartesian_slab(0, 1.0, 1.0).is_err());
        assert!(build_cartesian_slab(2, -1.0, 1.0).is_err());
        assert!(build_cartesian_slab(2, 1.0, 0.0).is_err());
    }

    #[test]
    fn slab_validates() {
        let m = build_cartesian_slab(4, 1.0, 1.0).unwrap();
        let r = m.validate();
        assert!(r.is_empty(), "{r}");
    }

    #[test]
    fn annulus_small_centers_at_mid_radius() {
        let m = build_annulus(4, 1, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(m.n_cells(), 4);
        for c in &m.cells {
            let r = (c.center.x.powi(2) + c.center.y.powi(2)).sqrt();
            // Vertex mean of a chord cell sits at 1.5 cos(pi/4) by symmetry;
            // the mid-radius only within chord tolerance.
            assert!((r - 1.5 * std::f64::consts::FRAC_PI_4.cos()).abs() < 1e-12);
            assert!((r - 1.5).abs() < 1.5 * (1.0 - std::f64::consts::FRAC_PI_4.cos()) + 1e-12);
        }
        assert!(m.validate().is_empty());
    }

    #[test]
    fn annulus_rejects_bad_radii() {
        assert!(build_annulus(8, 2, 2.0, 1.0, 0.1).is_err());
        assert!(build_annulus(2, 2, 1.0, 2.0, 0.1).is_err());
    }

    #[test]
    fn perturbed_zero_jitter_matches_box() {
        let a = build_perturbed_hexa(8, 0.0, 1).unwrap();
        let b = build_box_hexa(8, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn perturbed_hexa_is_warped_and_valid() {
        let m = build_perturbed_hexa(8, 0.3, 1).unwrap();
        assert!(m.max_face_warp() > 0.05 / 8.0);
        let r = m.validate();
        assert!(r.is_empty(), "{r}");
    }

    #[test]
    fn perturbed_seeds_differ_in_vertices_only() {
        let a = build_perturbed_hexa(8, 0.3, 1).unwrap();
        let b = build_perturbed_hexa(8, 0.3, 2).unwrap();
        assert_ne!(a.vertices, b.vertices);
        let la: Vec<_> = a.faces.iter().map(|f| f.vertices.clone()).collect();
        let lb: Vec<_> = b.faces.iter().map(|f| f.vertices.clone()).collect();
        assert_eq!(la, lb);
        assert_eq!(a.cells.len(), b.cells.len());
    }

    #[test]
    fn jitter_out_of_range() {
        assert!(build_perturbed_hexa(4, 0.5, 1).is_err());
        assert!(build_perturbed_hexa(4, -0.1, 1).is_err());
    }

    #[test]
    fn tetra_box_validates() {
        let m = build_box_tetra(3, 1.0).unwrap();
        assert_eq!(m.n_cells(), 6 * 27);
        let r = m.validate();
        assert!(r.is_empty(), "{r}");
    }
}
