//! Radial weight f(r) = exp(σ∫₁^r c(s)/s ds).

use alloc::vec::Vec;

use crate::math::{exp, ln};

const LN2: f64 = core::f64::consts::LN_2;
/// Cumulative-integral nodes per dyadic level.
const NODES_PER_LEVEL: usize = 32;
const GAUSS_X: [f64; 4] =
    [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GAUSS_W: [f64; 4] =
    [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];

/// Substitute for vanishing levels.
pub const C_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BootstrapWeight {
    pub sigma: f64,
    pub delta: f64,
    /// Level values c_j actually used (re-enveloped, floored).
    pub levels: Vec<f64>,
    /// Whether some level was zero and got replaced by the floor.
    pub floored: bool,
    /// Radius where f = 1.
    pub base: f64,
    offset: f64,
    cum: Vec<f64>,
}

impl BootstrapWeight {
    /// c as a function of u = log₂ s: log c blends 1.5c_j at the level
    /// midpoints j + ½ with a cubic smoothstep, constant outside.
    pub fn c_of_u(&self, u: f64) -> f64 {
        let n = self.levels.len();
        let v = u - 0.5;
        if v <= 0.0 {
            return 1.5 * self.levels[0];
        }
        if v >= (n - 1) as f64 {
            return 1.5 * self.levels[n - 1];
        }
        let j = v as usize;
        let t = v - j as f64;
        let s = t * t * (3.0 - 2.0 * t);
        let l0 = ln(1.5 * self.levels[j]);
        let l1 = ln(1.5 * self.levels[j + 1]);
        exp(l0 + (l1 - l0) * s)
    }

    pub fn c(&self, r: f64) -> f64 {
        self.c_of_u(libm::log2(r.max(1e-300)))
    }

    /// Level index with 2ʲ ≤ r < 2ʲ⁺¹ (clamped to the table).
    pub fn level(&self, r: f64) -> usize {
        let u = libm::log2(r.max(1.0));
        (u as usize).min(self.levels.len() - 1)
    }

    /// ∫₀^u c̃(v) dv, so that ∫₁^r c(s)/s ds = ln 2 · I(log₂ r).
    fn integral_u(&self, u: f64) -> f64 {
        let h = 1.0 / NODES_PER_LEVEL as f64;
        let last = (self.cum.len() - 1) as f64 * h;
        if u <= 0.0 {
            return u * 1.5 * self.levels[0];
        }
        if u >= last {
            return self.cum[self.cum.len() - 1] + (u - last) * 1.5 * self.levels[self.levels.len() - 1];
        }
        let k = (u / h) as usize;
        let a = k as f64 * h;
        self.cum[k] + gauss(|v| self.c_of_u(v), a, u)
    }

    pub fn f(&self, r: f64) -> f64 {
        exp(self.sigma * LN2 * (self.integral_u(libm::log2(r.max(1e-300))) - self.offset))
    }

    /// Rescales f by a constant so that f(base) = 1.
    pub fn normalized_at(mut self, base: f64) -> Self {
        self.offset = 0.0;
        self.offset = self.integral_u(libm::log2(base));
        self.base = base;
        self
    }

    /// f′(r) = σ c(r) f(r)/r.
    pub fn f_prime(&self, r: f64) -> f64 {
        self.sigma * self.c(r) * self.f(r) / r
    }

    /// Limit of f at infinity relative to f(r).
    pub fn tail_ratio(&self, r: f64) -> f64 {
        // c is constant past the table; report the value at the table end.
        let end = libm::ldexp(1.0, self.levels.len() as i32 + 1);
        self.f(end.max(r)) / self.f(r)
    }
}

fn gauss<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    (0..4).map(|i| GAUSS_W[i] * f(m + h * GAUSS_X[i])).sum::<f64>() * h
}

/// Builds the weight. Zero levels are replaced by [`C_FLOOR`]; the levels are
/// re-enveloped with exponent δ/1.5 so the smoothstep blend obeys
/// |c′(s)| ≤ δ c(s)/s.
pub fn build_bootstrap(c_seq: &[f64], delta: f64, sigma: f64) -> BootstrapWeight {
    assert!(sigma > 0.0 && !c_seq.is_empty());
    let floored = c_seq.iter().any(|&c| c <= 0.0);
    let raw: Vec<f64> = c_seq.iter().map(|&c| c.max(C_FLOOR)).collect();
    let d = delta / 1.5;
    let levels: Vec<f64> = (0..raw.len())
        .map(|j| {
            raw.iter().enumerate().map(|(k, &c)| c * libm::exp2(-d * (j as f64 - k as f64).abs())).fold(0.0, f64::max)
        })
        .collect();
    let mut w = BootstrapWeight { sigma, delta, levels, floored, base: 1.0, offset: 0.0, cum: Vec::new() };
    let h = 1.0 / NODES_PER_LEVEL as f64;
    let n = (w.levels.len() + 1) * NODES_PER_LEVEL;
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for k in 0..n {
        let a = k as f64 * h;
        let prev = cum[k];
        cum.push(prev + gauss(|v| w.c_of_u(v), a, a + h));
    }
    w.cum = cum;
    w
}

/// Adds a summable floor c_floor·2^{−δj} to a measured sequence.
pub fn with_floor(c_seq: &[f64], c_floor: f64, delta: f64) -> Vec<f64> {
    c_seq.iter().enumerate().map(|(j, &c)| c.max(c_floor * libm::exp2(-delta * j as f64))).collect()
}

/// Levels seen by the exterior weight: annuli inside r0 take the value of the
/// first exterior annulus, since f only matters where |x| ≥ R ≥ r0.
pub fn exterior_levels(measured: &[f64], r0: f64) -> Vec<f64> {
    let j0 = (libm::round(libm::log2(r0.max(1.0))) as usize).min(measured.len() - 1);
    measured.iter().enumerate().map(|(j, &c)| if j < j0 { measured[j0] } else { c }).collect()
}
