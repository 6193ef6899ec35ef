//! Per-cell mean-field providers: homogeneous isotropic turbulence, the
//! analytic cylindrical Couette profile, or a CSV table.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::Mesh;
use crate::sde::CellFields;
use crate::vec3::Vec3;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid field parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown cell {0}")]
    UnknownCell(usize),
    #[error("field table: {0}")]
    Table(String),
    #[error("field table i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("field table csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProviderKind {
    Hit { u_alpha: f64, t_l: f64, c0: f64 },
    CouetteAnalytic { r_in: f64, r_out: f64, omega_in: f64 },
    FromTable,
}

/// Mean fields sampled once per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldProvider {
    pub kind: ProviderKind,
    cells: Vec<CellFields>,
}

impl FieldProvider {
    #[inline]
    pub fn query(&self, cell: usize) -> Result<&CellFields, FieldError> {
        self.cells.get(cell).ok_or(FieldError::UnknownCell(cell))
    }

    /// Unchecked variant for the integration loop; panics on a bad id.
    #[inline]
    pub fn get(&self, cell: usize) -> &CellFields {
        &self.cells[cell]
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn from_cells(cells: Vec<CellFields>) -> Self {
        FieldProvider { kind: ProviderKind::FromTable, cells }
    }
}

/// HIT fields: `eps = 2 U^2 / (C0 T_L)`, `k = 3/2 U^2`, zero mean flow.
pub fn hit_fields(u_alpha: f64, t_l: f64, c0: f64) -> Result<CellFields, FieldError> {
    for (n, v) in [("U_alpha", u_alpha), ("T_L", t_l), ("C0", c0)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(FieldError::InvalidParameter(format!("{n} must be positive, got {v}")));
        }
    }
    let eps = 2.0 * u_alpha * u_alpha / (c0 * t_l);
    let k = 1.5 * u_alpha * u_alpha;
    Ok(CellFields::new(Vec3::ZERO, t_l, eps, k, c0, Vec3::ZERO))
}

pub fn hit_provider(u_alpha: f64, t_l: f64, c0: f64, mesh: &Mesh) -> Result<FieldProvider, FieldError> {
    let f = hit_fields(u_alpha, t_l, c0)?;
    Ok(FieldProvider { kind: ProviderKind::Hit { u_alpha, t_l, c0 }, cells: vec![f; mesh.n_cells()] })
}

/// Azimuthal speed of laminar flow between a rotating inner cylinder and a
/// fixed outer one (vanishes at `r_out`, equals `omega_in * r_in` at `r_in`).
pub fn couette_speed(r: f64, r_in: f64, r_out: f64, omega_in: f64) -> f64 {
    omega_in * r_in * (r / r_out - r_out / r) / (r_in / r_out - r_out / r_in)
}

pub fn couette_provider(r_in: f64, r_out: f64, omega_in: f64, mesh: &Mesh) -> Result<FieldProvider, FieldError> {
    if !(r_in > 0.0 && r_out > r_in && r_out.is_finite()) {
        return Err(FieldError::InvalidParameter(format!("degenerate radii {r_in}, {r_out}")));
    }
    let cells = mesh
        .cells
        .iter()
        .map(|c| {
            let p = c.center;
            let r = (p.x * p.x + p.y * p.y).sqrt();
            let e_theta = if r > 0.0 { Vec3::new(-p.y / r, p.x / r, 0.0) } else { Vec3::ZERO };
            let u = e_theta * couette_speed(r, r_in, r_out, omega_in);
            CellFields::new(u, 0.0, 0.0, 0.0, 2.1, Vec3::ZERO)
        })
        .collect();
    Ok(FieldProvider { kind: ProviderKind::CouetteAnalytic { r_in, r_out, omega_in }, cells })
}

#[derive(Serialize, Deserialize)]
struct Row {
    cell_id: usize,
    ux: f64,
    uy: f64,
    uz: f64,
    tl: f64,
    eps: f64,
    k: f64,
    c0: f64,
    gpx: f64,
    gpy: f64,
    gpz: f64,
}

pub fn write_table<W: std::io::Write>(p: &FieldProvider, w: W) -> Result<(), FieldError> {
    let mut wr = csv::Writer::from_writer(w);
    for (i, f) in p.cells.iter().enumerate() {
        wr.serialize(Row {
            cell_id: i,
            ux: f.mean_u.x,
            uy: f.mean_u.y,
            uz: f.mean_u.z,
            tl: f.t_l,
            eps: f.epsilon,
            k: f.k,
            c0: f.c0,
            gpx: f.grad_p_over_rho.x,
            gpy: f.grad_p_over_rho.y,
            gpz: f.grad_p_over_rho.z,
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_table<R: std::io::Read>(r: R, n_cells: usize) -> Result<FieldProvider, FieldError> {
    let mut rd = csv::Reader::from_reader(r);
    let mut cells: Vec<Option<CellFields>> = vec![None; n_cells];
    for row in rd.deserialize() {
        let row: Row = row?;
        let slot = cells.get_mut(row.cell_id).ok_or(FieldError::UnknownCell(row.cell_id))?;
        if row.tl < 0.0 || row.eps < 0.0 || !(row.c0 > 0.0) {
            return Err(FieldError::Table(format!("cell {}: negative T_L/eps or non-positive C0", row.cell_id)));
        }
        *slot = Some(CellFields::new(
            Vec3::new(row.ux, row.uy, row.uz),
            row.tl,
            row.eps,
            row.k,
            row.c0,
            Vec3::new(row.gpx, row.gpy, row.gpz),
        ));
    }
    let cells = cells
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| FieldError::Table(format!("no row for cell {i}"))))
        .collect::<Result<_, _>>()?;
    Ok(FieldProvider { kind: ProviderKind::FromTable, cells })
}

pub fn load_table(path: &Path, n_cells: usize) -> Result<FieldProvider, FieldError> {
    read_table(std::fs::File::open(path)?, n_cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_annulus, build_box_hexa};

    #[test]
    fn hit_calibration() {
        let f = hit_fields(1.0, 1.0, 2.1).unwrap();
        assert!((f.epsilon - 2.0 / 2.1).abs() < 1e-15);
        let t = 4.0 * f.k / (3.0 * f.c0 * f.epsilon);
        assert!((t - 1.0).abs() < 1e-14);
        assert!(hit_fields(0.0, 1.0, 2.1).is_err());
        assert!(hit_fields(1.0, -1.0, 2.1).is_err());
    }

    #[test]
    fn hit_is_uniform() {
        let m = build_box_hexa(3, 1.0).unwrap();
        let p = hit_provider(1.0, 1.0, 2.1, &m).unwrap();
        assert!((0..m.n_cells()).all(|c| p.query(c).unwrap() == p.query(0).unwrap()));
        assert!(matches!(p.query(27), Err(FieldError::UnknownCell(27))));
    }

    #[test]
    fn couette_profile_values() {
        assert!((couette_speed(1.0, 1.0, 2.0, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(couette_speed(2.0, 1.0, 2.0, 1.0), 0.0);
        let direct = (1.5 / 2.0 - 2.0 / 1.5) / (0.5 - 2.0);
        assert!((couette_speed(1.5, 1.0, 2.0, 1.0) - direct).abs() < 1e-15);
        assert!((couette_speed(1.5, 1.0, 2.0, 1.0) - 0.38889).abs() < 1e-5);
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let s = couette_speed(1.0 + i as f64 / 100.0, 1.0, 2.0, 1.0);
            assert!(s <= prev);
            prev = s;
        }
    }

    #[test]
    fn couette_same_ring_rotated() {
        let m = build_annulus(36, 3, 1.0, 2.0, 0.1).unwrap();
        let p = couette_provider(1.0, 2.0, 1.0, &m).unwrap();
        let (a, b) = (p.query(0).unwrap(), p.query(7).unwrap());
        assert!((a.mean_u.norm() - b.mean_u.norm()).abs() < 1e-14);
        assert!((a.mean_u - b.mean_u).norm() > 1e-3);
        assert_eq!(a.t_l, 0.0);
        assert!(a.mean_u.dot(m.cells[0].center).abs() < 1e-14);
    }

    #[test]
    fn table_round_trip_is_bit_exact() {
        let m = build_annulus(12, 2, 1.0, 2.0, 0.1).unwrap();
        let p = couette_provider(1.0, 2.0, 1.0, &m).unwrap();
        let mut buf = Vec::new();
        write_table(&p, &mut buf).unwrap();
        let q = read_table(buf.as_slice(), m.n_cells()).unwrap();
        assert_eq!(p.cells, q.cells);
    }
}
