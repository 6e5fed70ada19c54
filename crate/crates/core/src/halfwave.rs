//! Principal symbol, half-wave symbols b± and the unit-speed scaling Φ±.

use crate::halton::{ball, unit_sphere, ScrambledHalton};
use crate::math::{dot, mat_vec, norm, quad_form, scale, sqrt, Vec3};
use crate::metric::{Metric, MetricSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    #[inline]
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhasePoint {
    pub x: Vec3,
    pub xi: Vec3,
}

impl PhasePoint {
    pub fn new(x: Vec3, xi: Vec3) -> Self {
        Self { x, xi }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x[0], self.x[1], self.x[2], self.xi[0], self.xi[1], self.xi[2]]
    }

    pub fn from_array(y: &[f64; 6]) -> Self {
        Self { x: [y[0], y[1], y[2]], xi: [y[3], y[4], y[5]] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FullPhasePoint {
    pub t: f64,
    pub tau: f64,
    pub x: Vec3,
    pub xi: Vec3,
}

impl FullPhasePoint {
    pub fn to_array(&self) -> [f64; 8] {
        [self.t, self.tau, self.x[0], self.x[1], self.x[2], self.xi[0], self.xi[1], self.xi[2]]
    }

    pub fn from_array(y: &[f64; 8]) -> Self {
        Self { t: y[0], tau: y[1], x: [y[2], y[3], y[4]], xi: [y[5], y[6], y[7]] }
    }

    pub fn phase(&self) -> PhasePoint {
        PhasePoint { x: self.x, xi: self.xi }
    }
}

/// p = −(τ² − 2τg⁰ʲξⱼ − gⁱʲξᵢξⱼ) from a precomputed sample.
#[inline]
pub fn p_from_sample(s: &MetricSample, tau: f64, xi: &Vec3) -> f64 {
    -(tau * tau - 2.0 * tau * dot(&s.g0, xi) - quad_form(&s.g, xi))
}

pub fn p_symbol<M: Metric + ?Sized>(metric: &M, w: &FullPhasePoint) -> f64 {
    p_from_sample(&metric.sample(&w.x), w.tau, &w.xi)
}

/// b± and its gradients at one phase point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BDerivs {
    pub b: f64,
    /// ∇_x b±
    pub dx: Vec3,
    /// ∇_ξ b±
    pub dxi: Vec3,
}

#[inline]
pub fn b_from_sample(s: &MetricSample, xi: &Vec3, sign: Sign) -> f64 {
    let beta = dot(&s.g0, xi);
    beta + sign.value() * sqrt(beta * beta + quad_form(&s.g, xi))
}

/// b± = β ± Δ with β = g⁰ʲξⱼ, Δ = (β² + gⁱʲξᵢξⱼ)^{1/2}.
#[inline]
pub fn b_derivs(s: &MetricSample, xi: &Vec3, sign: Sign) -> BDerivs {
    let sg = sign.value();
    let beta = dot(&s.g0, xi);
    let gxi = mat_vec(&s.g, xi);
    let delta = sqrt(beta * beta + dot(xi, &gxi));
    let inv = sg / delta;
    let mut dxi = [0.0; 3];
    let mut dx = [0.0; 3];
    for i in 0..3 {
        dxi[i] = s.g0[i] + inv * (beta * s.g0[i] + gxi[i]);
    }
    for k in 0..3 {
        let dbeta = dot(&s.dg0[k], xi);
        let dq = quad_form(&s.dg[k], xi);
        dx[k] = dbeta + inv * (beta * dbeta + 0.5 * dq);
    }
    BDerivs { b: beta + sg * delta, dx, dxi }
}

pub fn b_pm<M: Metric + ?Sized>(metric: &M, pt: &PhasePoint, sign: Sign) -> f64 {
    b_from_sample(&metric.sample(&pt.x), &pt.xi, sign)
}

/// Φ±(x, ξ) = (x, ξ/|b±(x, ξ)|).
pub fn phi_scale<M: Metric + ?Sized>(metric: &M, pt: &PhasePoint, sign: Sign) -> PhasePoint {
    let b = b_pm(metric, pt, sign).abs();
    PhasePoint { x: pt.x, xi: scale(&pt.xi, 1.0 / b) }
}

/// Empirical constants with c_b|ξ| ≤ |b±(x, ξ)| ≤ C_b|ξ|.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BScale {
    pub observed_min: f64,
    pub observed_max: f64,
    /// Observed minimum shrunk by 10%.
    pub c_b: f64,
    /// Observed maximum grown by 10%.
    pub cap_b: f64,
}

impl BScale {
    /// Whether |ξ/b| lies in [1/C_b, 1/c_b].
    pub fn contains(&self, ratio: f64) -> bool {
        ratio >= 1.0 / self.cap_b && ratio <= 1.0 / self.c_b
    }
}

/// Samples |b±(x, ξ̂)| over the ball of the given radius and both signs.
pub fn b_scale_bounds<M: Metric + ?Sized>(metric: &M, radius: f64, samples: usize, seed: u64) -> BScale {
    let seq = ScrambledHalton::new(5, seed, 11);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut p = [0.0; 5];
    for i in 0..samples {
        seq.point(i as u64, &mut p);
        let x = ball(p[0], p[1], p[2], radius);
        let xi = unit_sphere(p[3], p[4]);
        let s = metric.sample(&x);
        for sign in Sign::BOTH {
            let b = b_from_sample(&s, &xi, sign).abs();
            lo = lo.min(b);
            hi = hi.max(b);
        }
    }
    BScale { observed_min: lo, observed_max: hi, c_b: 0.9 * lo, cap_b: 1.1 * hi }
}

/// |ξ| for a covector, used to express the b-scale ratio |ξ/b±|.
pub fn xi_over_b<M: Metric + ?Sized>(metric: &M, pt: &PhasePoint, sign: Sign) -> f64 {
    norm(&pt.xi) / b_pm(metric, pt, sign).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricModel;

    fn shell() -> MetricModel {
        MetricModel::trapped_shell(0.5, 5.0, 1.0)
    }

    fn full(tau: f64, x: Vec3, xi: Vec3) -> FullPhasePoint {
        FullPhasePoint { t: 0.0, tau, x, xi }
    }

    #[test]
    fn p_symbol_examples() {
        let m = MetricModel::minkowski();
        assert_eq!(p_symbol(&m, &full(1.0, [0.0; 3], [1.0, 0.0, 0.0])), 0.0);
        assert_eq!(p_symbol(&m, &full(2.0, [0.0; 3], [1.0, 0.0, 0.0])), -3.0);
        let p = p_symbol(&shell(), &full(0.0, [5.0, 0.0, 0.0], [0.0, 1.0, 0.0]));
        assert!((p - 1.5).abs() < 1e-15);
    }

    #[test]
    fn b_pm_examples() {
        let m = MetricModel::minkowski();
        let pt = PhasePoint::new([0.0; 3], [3.0, 4.0, 0.0]);
        assert_eq!(b_pm(&m, &pt, Sign::Plus), 5.0);
        assert_eq!(b_pm(&m, &pt, Sign::Minus), -5.0);
        let toy = MetricModel::crossterm_toy(0.05);
        let pt = PhasePoint::new([0.0; 3], [0.0, 1.0, 0.0]);
        assert_eq!(b_pm(&toy, &pt, Sign::Plus), 1.0);
        assert_eq!(b_pm(&toy, &pt, Sign::Minus), -1.0);
        let pt = PhasePoint::new([5.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        assert!((b_pm(&shell(), &pt, Sign::Plus) - 1.224_744_871_391_589).abs() < 1e-14);
    }

    #[test]
    fn phi_scale_examples() {
        let m = MetricModel::minkowski();
        let out = phi_scale(&m, &PhasePoint::new([1.0, 2.0, 3.0], [0.0, 0.0, 4.0]), Sign::Plus);
        assert_eq!(out.xi, [0.0, 0.0, 1.0]);
        assert_eq!(out.x, [1.0, 2.0, 3.0]);
        let out = phi_scale(&shell(), &PhasePoint::new([5.0, 0.0, 0.0], [0.0, 2.0, 0.0]), Sign::Plus);
        let expect = 2.0 / (2.0 * 1.5f64.sqrt());
        assert!((out.xi[1] - expect).abs() < 1e-15);
    }

    #[test]
    fn b_gradients_match_differences() {
        let toy = MetricModel::crossterm_toy(0.3);
        let s_pts = [([0.3, -0.4, 0.2], [0.5, 1.0, -0.7]), ([0.9, 0.1, -0.5], [-1.0, 0.2, 0.3])];
        for m in [&toy as &dyn Metric, &shell() as &dyn Metric] {
            for (x, xi) in s_pts {
                let x = if core::ptr::eq(m, &toy as &dyn Metric) { x } else { scale(&x, 6.0) };
                for sign in Sign::BOTH {
                    let d = b_derivs(&m.sample(&x), &xi, sign);
                    let h = 1e-6;
                    for k in 0..3 {
                        let (mut xp, mut xm) = (x, x);
                        xp[k] += h;
                        xm[k] -= h;
                        let fd = (b_pm(m, &PhasePoint::new(xp, xi), sign) - b_pm(m, &PhasePoint::new(xm, xi), sign))
                            / (2.0 * h);
                        assert!((fd - d.dx[k]).abs() < 1e-8, "dx {fd} {}", d.dx[k]);
                        let (mut ep, mut em) = (xi, xi);
                        ep[k] += h;
                        em[k] -= h;
                        let fd = (b_pm(m, &PhasePoint::new(x, ep), sign) - b_pm(m, &PhasePoint::new(x, em), sign))
                            / (2.0 * h);
                        assert!((fd - d.dxi[k]).abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn b_scale_interval_contains_samples() {
        let m = shell();
        let bs = b_scale_bounds(&m, 10.0, 2000, 1);
        assert!(bs.c_b > 0.0 && bs.c_b <= bs.cap_b);
        let pt = PhasePoint::new([5.0, 0.0, 0.0], [0.0, 3.0, 0.0]);
        assert!(bs.contains(xi_over_b(&m, &pt, Sign::Plus)));
    }
}
