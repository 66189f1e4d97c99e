//! Seeded, platform-independent random stream.
//!
//! The generator is xoshiro256** with its 256-bit state expanded from a 64-bit
//! seed by SplitMix64. On top of the raw `u64` stream:
//!
//! * `uniform()` takes the top 53 bits of one `u64` and scales by 2⁻⁵³, giving a
//!   value in `[0, 1)`.
//! * `gaussian()` uses Box–Muller on two consecutive uniforms `(u1, u2)`:
//!   `r = sqrt(-2 ln(1 - u1))`, `θ = 2π u2`. The first call of a pair returns
//!   `r cos θ`, the next call returns the cached `r sin θ`, then a fresh pair is
//!   drawn.
//! * `bernoulli(p)` is `uniform() < p`.

use rand_core::{Rng as _, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use super::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Rng {
    inner: Xoshiro256StarStar,
    cached: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
            cached: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.cached.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Independent child stream seeded from this one.
    pub fn split(&mut self) -> Rng {
        Rng::new(self.next_u64())
    }

    /// Matrix of i.i.d. `N(0, std²)` entries, filled row-major.
    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize, std: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| std * self.gaussian())
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.uniform_range(lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        for _ in 0..100 {
            assert_eq!(a.gaussian().to_bits(), b.gaussian().to_bits());
        }
    }

    fn reference_stream(seed: u64, n: usize) -> Vec<u64> {
        let mut sm = seed;
        let mut s = [0u64; 4];
        for w in &mut s {
            sm = sm.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = sm;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            *w = z ^ (z >> 31);
        }
        (0..n)
            .map(|_| {
                let out = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
                let t = s[1] << 17;
                s[2] ^= s[0];
                s[3] ^= s[1];
                s[1] ^= s[2];
                s[0] ^= s[3];
                s[2] ^= t;
                s[3] = s[3].rotate_left(45);
                out
            })
            .collect()
    }

    #[test]
    fn matches_hand_rolled_splitmix_xoshiro() {
        for seed in [0u64, 1, 42, u64::MAX] {
            let mut r = Rng::new(seed);
            let got: Vec<u64> = (0..16).map(|_| r.next_u64()).collect();
            assert_eq!(got, reference_stream(seed, 16), "seed {seed}");
        }
    }

    #[test]
    fn box_muller_pairs_use_two_uniforms() {
        let mut g = Rng::new(11);
        let mut u = Rng::new(11);
        let z0 = g.gaussian();
        let z1 = g.gaussian();
        let u1 = u.uniform();
        let u2 = u.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        assert_eq!(z0, r * th.cos());
        assert_eq!(z1, r * th.sin());
        // the third draw starts a new pair
        let z2 = g.gaussian();
        let u3 = u.uniform();
        let u4 = u.uniform();
        let r = (-2.0 * (1.0 - u3).ln()).sqrt();
        assert_eq!(z2, r * (2.0 * std::f64::consts::PI * u4).cos());
    }

    #[test]
    fn moments_are_plausible() {
        let mut r = Rng::new(3);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| r.gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
        let hits = (0..n).filter(|_| r.bernoulli(0.3)).count() as f64 / n as f64;
        assert!((hits - 0.3).abs() < 0.01);
    }
}
