use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

use lagtrack::cell_to_cell::ParticleState;
use lagtrack::mesh::build_perturbed_hexa;
use lagtrack::sde::{integral_moments, sample_integrals, NoiseDraw};
use lagtrack::stats::{
    analytic_moments, ci_envelope, concentration_radial, dimensionless_distance, moments, AnnulusBins, Z99,
};
use lagtrack::tracking::contains_point;
use lagtrack::Vec3;

/// `n` exact samples of the OU state at `t` from rest, `U_alpha = T_L = 1`.
fn ou_ensemble(t: f64, n: usize, seed: u64) -> Vec<ParticleState> {
    let m = integral_moments(t, 1.0, 2.0, 1.0);
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut g = move || -> Vec3 { Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)) };
    (0..n)
        .map(|i| {
            let draw = NoiseDraw { zeta_u: g(), zeta_x: g() };
            let (iu, ix) = sample_integrals(&m, &draw);
            ParticleState::new(i as u64, ix, iu, 0)
        })
        .collect()
}

#[test]
fn ou_samples_match_the_analytic_moments() {
    let ps = ou_ensemble(1.0, 1_000_000, 1);
    let m = moments(&ps, Vec3::ZERO).unwrap();
    let exact = analytic_moments(1.0, 1.0, 1.0);
    let ci = ci_envelope(1.0, ps.len(), 1.0, 1.0);
    // 99% half-widths scaled to four standard deviations
    let four = 4.0 / Z99;
    assert!((m.xx.x - exact.0).abs() < four * ci.0);
    assert!((m.xu.x - exact.1).abs() < four * ci.1);
    assert!((m.uu.x - exact.2).abs() < four * ci.2);
}

#[test]
fn estimator_error_shrinks_like_one_over_root_n() {
    let exact = analytic_moments(1.0, 1.0, 1.0).2;
    let mut rms = Vec::new();
    for n in [1_000, 10_000, 100_000] {
        let reps = 20;
        let mut s = 0.0;
        for r in 0..reps {
            let m = moments(&ou_ensemble(1.0, n, 100 + r), Vec3::ZERO).unwrap();
            s += (m.uu.x - exact).powi(2);
        }
        rms.push((s / reps as f64).sqrt() * (n as f64).sqrt());
    }
    // sqrt(N) * rms error stays near sqrt(2) * uu
    for r in rms {
        assert!((0.6..1.6).contains(&(r / (2f64.sqrt() * exact))), "{r}");
    }
}

proptest! {
    #[test]
    fn records_satisfy_cauchy_schwarz(
        pts in prop::collection::vec((prop::array::uniform3(-5.0f64..5.0), prop::array::uniform3(-3.0f64..3.0)), 1..50)
    ) {
        let ps: Vec<_> = pts.iter().enumerate()
            .map(|(i, (x, u))| ParticleState::new(i as u64, Vec3::from(*x), Vec3::from(*u), 0))
            .collect();
        let m = moments(&ps, Vec3::new(0.1, 0.2, 0.3)).unwrap();
        for (xx, xu, uu) in [(m.xx.x, m.xu.x, m.uu.x), (m.xx.y, m.xu.y, m.uu.y), (m.xx.z, m.xu.z, m.uu.z)] {
            prop_assert!(xx >= 0.0 && uu >= 0.0);
            prop_assert!(xu * xu <= xx * uu * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn concentration_conserves_active_count(
        cells in prop::collection::vec((0usize..84, any::<bool>()), 0..200)
    ) {
        let bins = AnnulusBins { n_theta: 4, n_r: 21, r_in: 1.0, r_out: 2.0 };
        let ps: Vec<_> = cells.iter().enumerate().map(|(i, &(c, active))| {
            let mut p = ParticleState::new(i as u64, Vec3::ZERO, Vec3::ZERO, c);
            p.active = active;
            p
        }).collect();
        let prof = concentration_radial(&ps, &bins, ps.len().max(1), 0.0);
        prop_assert_eq!(prof.counts.iter().sum::<usize>(), ps.iter().filter(|p| p.active).count());
    }

    #[test]
    fn contained_points_are_within_unit_distance(cell in 0usize..64, a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let mesh = build_perturbed_hexa(4, 0.3, 2).unwrap();
        let cl = &mesh.cells[cell];
        let (mut lo, mut hi) = (cl.center, cl.center);
        for &v in &cl.vertices {
            lo = lo.min(mesh.vertices[v]);
            hi = hi.max(mesh.vertices[v]);
        }
        let p = lo + (hi - lo).hadamard(Vec3::new(a, b, c));
        if matches!(contains_point(&mesh, cell, p), Ok(true)) {
            let d = dimensionless_distance(&mesh, &ParticleState::new(0, p, Vec3::ZERO, cell));
            prop_assert!(d <= 1.0, "d* = {}", d);
        }
    }
}
