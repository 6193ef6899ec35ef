//! Ensemble statistics, analytic references and diagnostics.

use thiserror::Error;

use crate::cell_to_cell::ParticleState;
use crate::mesh::Mesh;
use crate::sde::integral_moments;
use crate::vec3::Vec3;

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.576;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no active particles")]
    EmptyEnsemble,
}

/// Second moments about the source, per component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRecord {
    pub t: f64,
    pub t_star: f64,
    pub xx: Vec3,
    pub xu: Vec3,
    pub uu: Vec3,
    pub n_active: usize,
}

/// Unweighted moments of the active particles about `source`; `t` and
/// `t_star` are left at zero for the caller to fill.
pub fn moments(particles: &[ParticleState], source: Vec3) -> Result<MomentRecord, StatsError> {
    let mut n = 0usize;
    let (mut xx, mut xu, mut uu) = (Vec3::ZERO, Vec3::ZERO, Vec3::ZERO);
    for p in particles.iter().filter(|p| p.active) {
        let dx = p.x - source;
        xx += dx.hadamard(dx);
        xu += dx.hadamard(p.u);
        uu += p.u.hadamard(p.u);
        n += 1;
    }
    if n == 0 {
        return Err(StatsError::EmptyEnsemble);
    }
    let inv = 1.0 / n as f64;
    Ok(MomentRecord { t: 0.0, t_star: 0.0, xx: xx * inv, xu: xu * inv, uu: uu * inv, n_active: n })
}

/// Exact `(xx, xu, uu)` of the stationary-forced OU process started at
/// `X = 0, U = 0` with `C0 eps = 2 U^2 / T_L`.
pub fn analytic_moments(t: f64, u_alpha: f64, t_l: f64) -> (f64, f64, f64) {
    let m = integral_moments(t, t_l, 1.0, 2.0 * u_alpha * u_alpha / t_l);
    (m.var_ix, m.cov, m.var_iu)
}

/// 99% half-widths `(xx, xu, uu)` of the moment estimators over `n` particles.
pub fn ci_envelope(t: f64, n: usize, u_alpha: f64, t_l: f64) -> (f64, f64, f64) {
    let n = n as f64;
    let u4 = u_alpha.powi(4);
    let (xx, _, _) = analytic_moments(t, u_alpha, t_l);
    let c0_eps = 2.0 * u_alpha * u_alpha / t_l;
    let var_uu = 2.0 * u4;
    let var_xu = c0_eps * c0_eps * t_l.powi(4) / 2.0 * (1.0 + t / t_l);
    let var_xx = 2.0 * xx * xx;
    (Z99 * (var_xx / n).sqrt(), Z99 * (var_xu / n).sqrt(), Z99 * (var_uu / n).sqrt())
}

/// Radial rings of an annulus mesh numbered ring by ring (see
/// [`crate::mesh::build_annulus`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnulusBins {
    pub n_theta: usize,
    pub n_r: usize,
    pub r_in: f64,
    pub r_out: f64,
}

impl AnnulusBins {
    #[inline]
    pub fn ring_of(&self, cell: usize) -> usize {
        cell / self.n_theta
    }

    pub fn centers(&self) -> Vec<f64> {
        let dr = (self.r_out - self.r_in) / self.n_r as f64;
        (0..self.n_r).map(|k| self.r_in + (k as f64 + 0.5) * dr).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationProfile {
    pub t_plus: f64,
    pub r_centers: Vec<f64>,
    pub c_plus: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Ring counts normalised by `ring_cells * n_initial / n_cells`.
pub fn concentration_radial(
    particles: &[ParticleState],
    bins: &AnnulusBins,
    n_initial: usize,
    t_plus: f64,
) -> ConcentrationProfile {
    let mut counts = vec![0usize; bins.n_r];
    for p in particles.iter().filter(|p| p.active) {
        counts[bins.ring_of(p.cell)] += 1;
    }
    // ring_cells / n_cells = 1 / n_r
    let per_ring = n_initial as f64 / bins.n_r as f64;
    let c_plus = counts.iter().map(|&c| c as f64 / per_ring).collect();
    ConcentrationProfile { t_plus, r_centers: bins.centers(), c_plus, counts }
}

/// Mean of `|c+ - 1|` over all bins of all profiles.
pub fn mean_concentration_error(profiles: &[ConcentrationProfile]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in profiles {
        for &c in &p.c_plus {
            sum += (c - 1.0).abs();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceDiagnostic {
    pub t_star: f64,
    pub d_star_max: f64,
}

/// `|X_c - X_p| / max_v |X_c - X_v|` for one particle.
pub fn dimensionless_distance(mesh: &Mesh, p: &ParticleState) -> f64 {
    let c = &mesh.cells[p.cell];
    (p.x - c.center).norm() / c.radius
}

/// Largest `d*` over the active particles (0 for an empty ensemble).
pub fn max_dimensionless_distance(particles: &[ParticleState], mesh: &Mesh) -> f64 {
    particles
        .iter()
        .filter(|p| p.active)
        .map(|p| dimensionless_distance(mesh, p))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_box_hexa;

    fn part(x: f64, u: f64, cell: usize) -> ParticleState {
        ParticleState::new(0, Vec3::new(x, 0.0, 0.0), Vec3::new(u, 0.0, 0.0), cell)
    }

    #[test]
    fn moments_hand_cases() {
        let m = moments(&[part(0.0, 0.0, 0), part(0.0, 0.0, 0)], Vec3::ZERO).unwrap();
        assert_eq!((m.xx.x, m.xu.x, m.uu.x), (0.0, 0.0, 0.0));
        let m = moments(&[part(2.0, 3.0, 0), part(-2.0, -3.0, 0)], Vec3::ZERO).unwrap();
        assert_eq!((m.xx.x, m.xu.x, m.uu.x), (4.0, 6.0, 9.0));
        let mut dead = part(1.0, 1.0, 0);
        dead.active = false;
        assert_eq!(moments(&[dead], Vec3::ZERO), Err(StatsError::EmptyEnsemble));
    }

    #[test]
    fn analytic_limits() {
        let (xx, _, uu) = analytic_moments(1e-4, 1.0, 1.0);
        assert!((xx / (2.0 * 1e-12 / 3.0) - 1.0).abs() < 1e-3);
        assert!((uu / 1e-4 - 2.0).abs() < 1e-3);
        let (xx, _, uu) = analytic_moments(1e6, 1.0, 1.0);
        assert!((uu - 1.0).abs() < 1e-12);
        assert!((xx / 1e6 - 2.0).abs() < 1e-5);
    }

    #[test]
    fn envelope_shapes() {
        let (_, a1, u1) = ci_envelope(1.0, 1000, 1.0, 1.0);
        let (_, a3, u3) = ci_envelope(3.0, 1000, 1.0, 1.0);
        assert_eq!(u1, u3);
        assert!(((a3 / a1) - (4.0f64 / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn concentration_normalisation() {
        let bins = AnnulusBins { n_theta: 4, n_r: 3, r_in: 1.0, r_out: 2.0 };
        // uniform: one particle per cell
        let ps: Vec<_> = (0..12).map(|c| part(0.0, 0.0, c)).collect();
        let prof = concentration_radial(&ps, &bins, 12, 0.0);
        assert!(prof.c_plus.iter().all(|&c| c == 1.0));
        assert_eq!(mean_concentration_error(&[prof]), 0.0);
        // everything in the outer ring
        let ps: Vec<_> = (0..12).map(|i| part(0.0, 0.0, 8 + i % 4)).collect();
        let prof = concentration_radial(&ps, &bins, 12, 0.0);
        assert_eq!(prof.c_plus, vec![0.0, 0.0, 3.0]);
        assert_eq!(prof.counts.iter().sum::<usize>(), 12);
    }

    #[test]
    fn displaced_bin_error() {
        // 21 bins; one bin's worth of particles moved to its neighbour
        let mut c = vec![1.0; 21];
        c[0] = 0.0;
        c[1] = 2.0;
        let p = ConcentrationProfile { t_plus: 0.0, r_centers: vec![0.0; 21], c_plus: c, counts: vec![0; 21] };
        assert!((mean_concentration_error(&[p]) - 2.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn distance_bounds() {
        let m = build_box_hexa(2, 2.0).unwrap();
        let c = &m.cells[0];
        let at_center = ParticleState::new(0, c.center, Vec3::ZERO, 0);
        assert_eq!(dimensionless_distance(&m, &at_center), 0.0);
        let far = c.vertices.iter().map(|&v| m.vertices[v]).fold(c.center, |a, v| {
            if (v - c.center).norm() > (a - c.center).norm() { v } else { a }
        });
        let at_vertex = ParticleState::new(0, far, Vec3::ZERO, 0);
        assert!((dimensionless_distance(&m, &at_vertex) - 1.0).abs() < 1e-15);
    }
}
