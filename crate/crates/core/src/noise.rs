//! Per-particle random streams.
//!
//! Every (master seed, particle, step) triple gets its own generator, so the
//! draws a particle sees do not depend on how particles are scheduled.

use rand::Rng;
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

use crate::sde::NoiseDraw;
use crate::vec3::Vec3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one particle during one step; successive calls to
/// [`NoiseStream::draw`] give the draws of successive sub-iterations.
pub struct NoiseStream {
    rng: Pcg64,
}

impl NoiseStream {
    pub fn new(master_seed: u64, particle: u64, step: u64) -> Self {
        let hi = splitmix64(master_seed ^ splitmix64(step));
        let lo = splitmix64(hi ^ step.rotate_left(32) ^ 0xA076_1D64_78BD_642F);
        let state = ((hi as u128) << 64) | lo as u128;
        NoiseStream { rng: Pcg64::new(state, particle as u128) }
    }

    /// Stream for non-step purposes (initial seeding, tests), kept apart
    /// from the step streams by a distinct tag.
    pub fn auxiliary(master_seed: u64, tag: u64) -> Self {
        NoiseStream::new(master_seed ^ 0x5EED_5EED_5EED_5EED, tag, u64::MAX)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    #[inline]
    pub fn normal3(&mut self) -> Vec3 {
        Vec3::new(self.normal(), self.normal(), self.normal())
    }

    #[inline]
    pub fn draw(&mut self) -> NoiseDraw {
        NoiseDraw { zeta_u: self.normal3(), zeta_x: self.normal3() }
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = NoiseStream::new(7, 3, 11).draw();
        let b = NoiseStream::new(7, 3, 11).draw();
        assert_eq!(a, b);
        assert_ne!(a, NoiseStream::new(7, 4, 11).draw());
        assert_ne!(a, NoiseStream::new(7, 3, 12).draw());
        assert_ne!(a, NoiseStream::new(8, 3, 11).draw());
    }

    #[test]
    fn normals_have_unit_variance() {
        let n = 200_000;
        let mut s = NoiseStream::new(1, 0, 0);
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.normal();
            m1 += z;
            m2 += z * z;
        }
        m1 /= n as f64;
        m2 /= n as f64;
        assert!(m1.abs() < 4.0 / (n as f64).sqrt());
        assert!((m2 - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }
}
