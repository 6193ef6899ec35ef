use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

use lagtrack::sde::{exponential_step, integral_moments, sample_integrals, two_substep_moments, CellFields, NoiseDraw};
use lagtrack::stats::analytic_moments;
use lagtrack::Vec3;

/// Euler-Maruyama paths of `dU = -U/T dt + sqrt(c0_eps) dW`, `dX = U dt`
/// from rest; returns sample `(var X, cov XU, var U)` at `t`.
fn euler_maruyama(t: f64, t_l: f64, c0_eps: f64, h: f64, paths: usize, seed: u64) -> (f64, f64, f64) {
    let mut rng = Pcg64::seed_from_u64(seed);
    let steps = (t / h).round() as usize;
    let s = (c0_eps * h).sqrt();
    let (mut xx, mut xu, mut uu) = (0.0, 0.0, 0.0);
    for _ in 0..paths {
        let (mut x, mut u) = (0.0f64, 0.0f64);
        for _ in 0..steps {
            let z: f64 = rng.sample(StandardNormal);
            // trapezoidal position update keeps the X bias at O(h^2)
            let u_next = u - u / t_l * h + s * z;
            x += 0.5 * (u + u_next) * h;
            u = u_next;
        }
        xx += x * x;
        xu += x * u;
        uu += u * u;
    }
    let n = paths as f64;
    (xx / n, xu / n, uu / n)
}

#[test]
fn unit_interval_moments_match_euler_maruyama() {
    // C0 eps T_L = 2 over one time scale
    let n = 100_000;
    let m = integral_moments(1.0, 1.0, 2.0, 1.0);
    assert!((m.var_iu - (1.0 - (-2.0f64).exp())).abs() < 1e-14);
    let (xx, xu, uu) = euler_maruyama(1.0, 1.0, 2.0, 1e-3, n, 1);
    let nf = n as f64;
    let sd_uu = (2.0 / nf).sqrt() * m.var_iu;
    let sd_xx = (2.0 / nf).sqrt() * m.var_ix;
    let sd_xu = ((m.var_iu * m.var_ix + m.cov * m.cov) / nf).sqrt();
    assert!((uu - m.var_iu).abs() < 4.0 * sd_uu, "uu {uu} vs {}", m.var_iu);
    assert!((xx - m.var_ix).abs() < 4.0 * sd_xx, "xx {xx} vs {}", m.var_ix);
    assert!((xu - m.cov).abs() < 4.0 * sd_xu, "xu {xu} vs {}", m.cov);
}

#[test]
fn dispersion_at_six_time_scales() {
    // closed form of var X(t) for a stationary-forced OU process from rest
    let t = 6.0f64;
    let closed = 2.0 * (t - 2.0 * (1.0 - (-t).exp()) + 0.5 * (1.0 - (-2.0 * t).exp()));
    let (xx, _, _) = analytic_moments(t, 1.0, 1.0);
    assert!((xx - closed).abs() < 1e-12);
    assert!((xx - 9.00992).abs() < 5e-5);

    let n = 10_000;
    let (mc, _, _) = euler_maruyama(t, 1.0, 2.0, 1e-3, n, 2);
    assert!((mc - xx).abs() < 4.0 * (2.0 / n as f64).sqrt() * xx, "{mc} vs {xx}");
}

#[test]
fn sampled_integrals_reproduce_their_moments() {
    let mut rng = Pcg64::seed_from_u64(3);
    let n = 200_000;
    for dt in [1e-4, 0.3, 1.0, 20.0] {
        let m = integral_moments(dt, 1.0, 2.1, 1.0);
        let (mut su, mut sc, mut sx) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let mut g = || -> f64 { rng.sample(StandardNormal) };
            let draw = NoiseDraw { zeta_u: Vec3::new(g(), 0.0, 0.0), zeta_x: Vec3::new(g(), 0.0, 0.0) };
            let (iu, ix) = sample_integrals(&m, &draw);
            su += iu.x * iu.x;
            sc += iu.x * ix.x;
            sx += ix.x * ix.x;
        }
        let nf = n as f64;
        let (su, sc, sx) = (su / nf, sc / nf, sx / nf);
        assert!((su - m.var_iu).abs() < 4.0 * (2.0 / nf).sqrt() * m.var_iu, "dt {dt}");
        assert!((sx - m.var_ix).abs() < 4.0 * (2.0 / nf).sqrt() * m.var_ix, "dt {dt}");
        assert!((sc - m.cov).abs() < 4.0 * ((m.var_iu * m.var_ix + m.cov * m.cov) / nf).sqrt(), "dt {dt}");
    }
}

#[test]
fn step_mean_relaxes_toward_the_stationary_velocity() {
    let f = CellFields::new(Vec3::new(1.0, -2.0, 0.5), 0.7, 1.3, 1.0, 2.1, Vec3::ZERO);
    let u0 = Vec3::new(3.0, 0.0, -1.0);
    let dt = 0.4;
    let (_, u) = exponential_step(Vec3::ZERO, u0, &f, dt, &NoiseDraw::default());
    let e = (-dt / f.t_l).exp();
    let want = u0 * e + f.mean_u * (1.0 - e);
    assert!((u - want).norm() < 1e-14);
}

proptest! {
    #[test]
    fn moment_matrix_is_positive_semidefinite(log_dt in -8.0f64..8.0, log_tl in -3.0f64..3.0, c0_eps in 1e-3f64..10.0) {
        let m = integral_moments(10f64.powf(log_dt), 10f64.powf(log_tl), c0_eps, 1.0);
        prop_assert!(m.var_iu >= 0.0 && m.var_ix >= 0.0);
        prop_assert!(m.cov * m.cov <= m.var_iu * m.var_ix * (1.0 + 1e-12));
    }

    #[test]
    fn two_sub_steps_equal_one_step(theta in 0.0f64..=1.0, log_dt in -6.0f64..6.0) {
        let dt = 10f64.powf(log_dt);
        let one = integral_moments(dt, 1.0, 2.1, 1.0);
        let two = two_substep_moments(theta, dt, 1.0, 2.1, 1.0);
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        prop_assert!(rel(one.var_iu, two.var_iu) < 1e-10);
        prop_assert!(rel(one.cov, two.cov) < 1e-10);
        prop_assert!(rel(one.var_ix, two.var_ix) < 1e-10);
    }

    #[test]
    fn stationary_velocity_is_a_fixed_point(ux in -5.0f64..5.0, tl in 0.01f64..10.0, dt in 0.0f64..100.0) {
        let f = CellFields::new(Vec3::new(ux, 0.0, 0.0), tl, 1.0, 1.0, 2.1, Vec3::ZERO);
        let u0 = f.drift_c * f.t_l;
        let (_, u) = exponential_step(Vec3::ZERO, u0, &f, dt, &NoiseDraw::default());
        prop_assert!((u - u0).norm() <= 1e-12 * (1.0 + u0.norm()));
    }
}
