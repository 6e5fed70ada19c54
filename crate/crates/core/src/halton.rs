//! Scrambled Halton sequences.
//!
//! Dimension `d` uses the `d`-th prime as base. Each base gets a random digit
//! permutation that fixes 0, drawn by Fisher–Yates from a ChaCha8 stream keyed
//! by `(seed, stream)`. Point `i` is the radical inverse of `i + 1` with every
//! digit passed through the permutation, so the construction is portable given
//! the seed.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{sqrt, Vec3};

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

#[derive(Clone, Debug)]
pub struct ScrambledHalton {
    perms: Vec<Vec<u32>>,
}

impl ScrambledHalton {
    /// Panics if `dim` exceeds the number of tabulated primes (16).
    pub fn new(dim: usize, seed: u64, stream: u64) -> Self {
        assert!(dim >= 1 && dim <= PRIMES.len(), "unsupported Halton dimension {dim}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let perms = PRIMES[..dim]
            .iter()
            .map(|&b| {
                let mut p: Vec<u32> = (0..b).collect();
                for i in (2..b as usize).rev() {
                    let j = rng.gen_range(1..=i);
                    p.swap(i, j);
                }
                p
            })
            .collect();
        Self { perms }
    }

    /// Unscrambled sequence (identity permutations).
    pub fn plain(dim: usize) -> Self {
        assert!(dim >= 1 && dim <= PRIMES.len());
        Self { perms: PRIMES[..dim].iter().map(|&b| (0..b).collect()).collect() }
    }

    pub fn dim(&self) -> usize {
        self.perms.len()
    }

    pub fn coord(&self, index: u64, d: usize) -> f64 {
        let perm = &self.perms[d];
        let base = perm.len() as u64;
        let inv = 1.0 / base as f64;
        let mut n = index + 1;
        let mut f = inv;
        let mut acc = 0.0;
        while n > 0 {
            acc += perm[(n % base) as usize] as f64 * f;
            n /= base;
            f *= inv;
        }
        acc
    }

    pub fn point(&self, index: u64, out: &mut [f64]) {
        for (d, o) in out.iter_mut().enumerate() {
            *o = self.coord(index, d);
        }
    }
}

/// Maps two uniforms to a unit vector (area-uniform on the sphere).
pub fn unit_sphere(u: f64, v: f64) -> Vec3 {
    let z = 2.0 * u - 1.0;
    let rho = sqrt((1.0 - z * z).max(0.0));
    let phi = 2.0 * core::f64::consts::PI * v;
    [rho * libm::cos(phi), rho * libm::sin(phi), z]
}

/// Maps three uniforms to a point in the ball of radius `r` (volume-uniform).
pub fn ball(u: f64, v: f64, w: f64, r: f64) -> Vec3 {
    let d = unit_sphere(v, w);
    let s = r * libm::cbrt(u);
    [d[0] * s, d[1] * s, d[2] * s]
}
