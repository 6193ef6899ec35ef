//! Exponential integration of the simplified Langevin model
//!
//! ```text
//! dU = -(U - C T_L)/T_L dt + sqrt(C0 eps) dW,   dX = U dt
//! ```
//!
//! exact for constant fields. With `x = dt/T_L` and `m = 1 - exp(-x)`:
//!
//! ```text
//! X' = X + U T_L m + C T_L (dt - T_L m) + I^X
//! U' = U exp(-x) + C T_L m + I^U
//! ```

use thiserror::Error;

use crate::vec3::Vec3;

/// Below this Lagrangian time scale the flow is treated as laminar.
pub const T_MIN: f64 = 1e-30;

#[derive(Debug, Error, PartialEq)]
pub enum SdeError {
    #[error("drift undefined for T_L = {0}")]
    ZeroTimeScale(f64),
}

/// Per-cell mean fields (constant within a cell).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellFields {
    pub mean_u: Vec3,
    /// Drift such that `drift_c * t_l` is the stationary velocity; zero when `t_l <= T_MIN`.
    pub drift_c: Vec3,
    pub t_l: f64,
    pub epsilon: f64,
    pub k: f64,
    pub c0: f64,
    /// Mean pressure gradient divided by density.
    pub grad_p_over_rho: Vec3,
}

impl CellFields {
    pub fn new(mean_u: Vec3, t_l: f64, epsilon: f64, k: f64, c0: f64, grad_p_over_rho: Vec3) -> Self {
        let mut f = CellFields { mean_u, drift_c: Vec3::ZERO, t_l, epsilon, k, c0, grad_p_over_rho };
        if t_l > T_MIN {
            f.drift_c = drift_coefficient(&f).expect("positive time scale");
        }
        f
    }

    #[inline]
    pub fn c0_eps(&self) -> f64 {
        self.c0 * self.epsilon
    }

    #[inline]
    pub fn is_laminar(&self) -> bool {
        self.t_l <= T_MIN
    }
}

/// `C = <U>/T_L - grad<P>/rho`.
pub fn drift_coefficient(f: &CellFields) -> Result<Vec3, SdeError> {
    if !(f.t_l > 0.0) {
        return Err(SdeError::ZeroTimeScale(f.t_l));
    }
    Ok(f.mean_u / f.t_l - f.grad_p_over_rho)
}

/// Second moments of the stochastic integrals (per component).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralMoments {
    pub var_iu: f64,
    pub cov: f64,
    pub var_ix: f64,
}

/// Standard-normal samples driving one integration interval.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseDraw {
    pub zeta_u: Vec3,
    pub zeta_x: Vec3,
}

/// `x - 3/2 + 2 e^{-x} - e^{-2x}/2`, the bracket of `var(I^X)/(C0 eps T_L^3)`.
fn ix_bracket(x: f64) -> f64 {
    if x < 1.0 {
        // sum_{n>=3} (2^{n-1} - 2) (-1)^{n+1} x^n / n!
        let mut term = x * x / 2.0; // x^n / n! at n = 2
        let mut pow2 = 2.0; // 2^{n-1} at n = 2
        let mut sum = 0.0;
        for n in 3..40 {
            term *= x / n as f64;
            pow2 *= 2.0;
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            let t = sign * (pow2 - 2.0) * term;
            sum += t;
            if t.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        let e = (-x).exp();
        x - 1.5 + 2.0 * e - 0.5 * e * e
    }
}

/// `x - 2 tanh(x/2)`, the bracket of the conditional variance of `I^X` given `I^U`.
fn conditional_bracket(x: f64, m: f64) -> f64 {
    if x < 0.1 {
        let y = x / 2.0;
        let y2 = y * y;
        // 2 (y^3/3 - 2y^5/15 + 17y^7/315 - 62y^9/2835 + 1382y^11/155925)
        2.0 * y * y2
            * (1.0 / 3.0
                + y2 * (-2.0 / 15.0 + y2 * (17.0 / 315.0 + y2 * (-62.0 / 2835.0 + y2 * (1382.0 / 155925.0)))))
    } else {
        x - 2.0 * m / (2.0 - m)
    }
}

fn moments_from(x: f64, m: f64, t_l: f64, c0_eps: f64) -> IntegralMoments {
    IntegralMoments {
        var_iu: 0.5 * c0_eps * t_l * m * (2.0 - m),
        cov: 0.5 * c0_eps * t_l * t_l * m * m,
        var_ix: c0_eps * t_l * t_l * t_l * ix_bracket(x),
    }
}

/// Exact variances/covariance of `(I^U, I^X)` over `dt`.
pub fn integral_moments(dt: f64, t_l: f64, c0: f64, epsilon: f64) -> IntegralMoments {
    let x = dt / t_l;
    moments_from(x, -(-x).exp_m1(), t_l, c0 * epsilon)
}

/// Cholesky-factor sample of the correlated integrals:
/// returns `(I^U, I^X)` per component.
pub fn sample_integrals(m: &IntegralMoments, draw: &NoiseDraw) -> (Vec3, Vec3) {
    if m.var_iu <= 0.0 {
        return (Vec3::ZERO, draw.zeta_x * m.var_ix.max(0.0).sqrt());
    }
    let su = m.var_iu.sqrt();
    let cond = (m.var_ix - m.cov * m.cov / m.var_iu).max(0.0);
    (draw.zeta_u * su, draw.zeta_u * (m.cov / su) + draw.zeta_x * cond.sqrt())
}

/// Coefficients `(a, b, c)` with `I^U = a zeta_u`, `I^X = b zeta_u + c zeta_x`,
/// using the closed form of the conditional variance.
fn noise_coefficients(x: f64, m: f64, t_l: f64, c0_eps: f64) -> (f64, f64, f64) {
    let var_iu = 0.5 * c0_eps * t_l * m * (2.0 - m);
    if var_iu <= 0.0 {
        let var_ix = c0_eps * t_l * t_l * t_l * ix_bracket(x);
        return (0.0, 0.0, var_ix.max(0.0).sqrt());
    }
    let a = var_iu.sqrt();
    let cov = 0.5 * c0_eps * t_l * t_l * m * m;
    let c = (c0_eps * t_l * t_l * t_l * conditional_bracket(x, m)).max(0.0).sqrt();
    (a, cov / a, c)
}

/// One exponential-scheme step over `dt` with constant fields.
pub fn exponential_step(x: Vec3, u: Vec3, f: &CellFields, dt: f64, draw: &NoiseDraw) -> (Vec3, Vec3) {
    if f.is_laminar() {
        return (x + f.mean_u * dt, f.mean_u);
    }
    if dt == 0.0 {
        return (x, u);
    }
    let t_l = f.t_l;
    let r = dt / t_l;
    let m = -(-r).exp_m1();
    let e = (-r).exp();
    let (a, b, c) = noise_coefficients(r, m, t_l, f.c0_eps());
    let ct = f.drift_c * t_l;
    let x_new = x + u * (t_l * m) + ct * (dt - t_l * m) + draw.zeta_u * b + draw.zeta_x * c;
    let u_new = u * e + ct * m + draw.zeta_u * a;
    (x_new, u_new)
}

/// Conditional mean of `X(dt)` given `(X, U)`: the scheme with zero noise.
pub fn mean_conditional_endpoint(x: Vec3, u: Vec3, f: &CellFields, dt: f64) -> Vec3 {
    if f.is_laminar() {
        return x + f.mean_u * dt;
    }
    let t_l = f.t_l;
    let m = -(-dt / t_l).exp_m1();
    x + u * (t_l * m) + f.drift_c * (t_l * (dt - t_l * m))
}

/// Moments of the integrals accumulated over two chained sub-steps
/// `theta*dt` and `(1-theta)*dt`, carried to the end of the interval.
pub fn two_substep_moments(theta: f64, dt: f64, t_l: f64, c0: f64, epsilon: f64) -> IntegralMoments {
    let a = theta * dt;
    let b = dt - a;
    let ma = integral_moments(a, t_l, c0, epsilon);
    let mb = integral_moments(b, t_l, c0, epsilon);
    let m_b = -(-b / t_l).exp_m1();
    let e_b = (-b / t_l).exp();
    let w = t_l * m_b;
    IntegralMoments {
        var_iu: e_b * e_b * ma.var_iu + mb.var_iu,
        cov: e_b * ma.cov + w * e_b * ma.var_iu + mb.cov,
        var_ix: ma.var_ix + 2.0 * w * ma.cov + w * w * ma.var_iu + mb.var_ix,
    }
}
