//! q = (τ − b⁺)Q⁻ + (τ − b⁻)Q⁺ with Q± = χ_{>λ}(|b±|)(e^{−σq₁±} + e^{−σq₂±}),
//! its bracket with p, and the correction m.

use super::bootstrap::BootstrapWeight;
use super::symbols::fd_gradient;
use super::{idx, Symbols};
use crate::halfwave::{b_from_sample, PhasePoint, Sign};
use crate::math::{cutoff_above, dot, exp, mat_vec, quad_form, Vec3};
use crate::metric::{Metric, MetricSample};

/// Gradients (∇_x p, ∇_ξ p) of p = −τ² + 2τg⁰·ξ + ξ·Gξ.
pub fn p_gradients(s: &MetricSample, tau: f64, xi: &Vec3) -> (Vec3, Vec3) {
    let gxi = mat_vec(&s.g, xi);
    let mut dx = [0.0; 3];
    let mut dxi = [0.0; 3];
    for k in 0..3 {
        dxi[k] = 2.0 * tau * s.g0[k] + 2.0 * gxi[k];
        dx[k] = 2.0 * tau * dot(&s.dg0[k], xi) + quad_form(&s.dg[k], xi);
    }
    (dx, dxi)
}

/// H_p f = ∇_ξp·∇_x f − ∇_x p·∇_ξ f for f independent of t.
pub fn hamilton_bracket(s: &MetricSample, tau: f64, xi: &Vec3, grad: &[f64; 6]) -> f64 {
    let (dx, dxi) = p_gradients(s, tau, xi);
    let mut h = 0.0;
    for k in 0..3 {
        h += dxi[k] * grad[k] - dx[k] * grad[3 + k];
    }
    h
}

/// H_p q + 2γτaq = a₀τ² + a₁τ + a₂ at fixed (x, ξ).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Coefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Coefficients {
    /// Fit through F(−s), F(0), F(s).
    pub fn from_nodes(s: f64, f_minus: f64, f_zero: f64, f_plus: f64) -> Self {
        Self { a0: (f_plus + f_minus - 2.0 * f_zero) / (2.0 * s * s), a1: (f_plus - f_minus) / (2.0 * s), a2: f_zero }
    }

    pub fn eval(&self, tau: f64) -> f64 {
        (self.a0 * tau + self.a1) * tau + self.a2
    }

    /// (a₀ − m, a₁ + (b⁺+b⁻)m, a₂ − b⁺b⁻m): the corrected quadratic in τ.
    pub fn corrected(&self, m: f64, bp: f64, bm: f64) -> [f64; 3] {
        [self.a0 - m, self.a1 + (bp + bm) * m, self.a2 - bp * bm * m]
    }

    pub fn discriminant(&self, m: f64, bp: f64, bm: f64) -> f64 {
        let [c0, c1, c2] = self.corrected(m, bp, bm);
        c1 * c1 - 4.0 * c0 * c2
    }

    /// Both proof conditions: positive leading coefficient, no real zeros.
    pub fn correction_valid(&self, m: f64, bp: f64, bm: f64) -> bool {
        self.a0 - m > 0.0 && self.discriminant(m, bp, bm) < 0.0
    }

    /// Minimum over τ of the corrected quadratic, A⁺A⁻/(A⁺ + A⁻) with
    /// A± = F(b±).
    pub fn corrected_minimum(&self, bp: f64, bm: f64) -> f64 {
        let ap = self.eval(bp);
        let am = self.eval(bm);
        ap * am / (ap + am)
    }
}

/// m = −(a₁(b⁺+b⁻) + 2(a₀b⁺b⁻ + a₂))/(b⁺ − b⁻)².
pub fn build_correction(c: &Coefficients, bp: f64, bm: f64) -> f64 {
    let d = bp - bm;
    -(c.a1 * (bp + bm) + 2.0 * (c.a0 * bp * bm + c.a2)) / (d * d)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EscapeAssembly {
    pub symbols: Symbols,
    pub weight: BootstrapWeight,
    pub lambda: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

pub fn assemble_q(symbols: &Symbols, epsilon: f64, sigma: f64, lambda: f64, gamma: f64) -> EscapeAssembly {
    EscapeAssembly { symbols: symbols.clone(), weight: symbols.weight(sigma), lambda, sigma, gamma, epsilon }
}

impl EscapeAssembly {
    /// Q± at (x, ξ); zero when |b±| < λ.
    pub fn big_q<M: Metric + ?Sized>(&self, metric: &M, sign: Sign, pt: &PhasePoint) -> f64 {
        let b = b_from_sample(&metric.sample(&pt.x), &pt.xi, sign);
        let chi = cutoff_above(b.abs(), self.lambda, 2.0 * self.lambda);
        if chi == 0.0 {
            return 0.0;
        }
        let k = idx(sign);
        let q1 = &self.symbols.q1[k];
        let e1 = if q1.is_absent() { 0.0 } else { exp(-self.sigma * q1.eval(metric, pt)) };
        let q2 =
            self.epsilon * self.symbols.q_in[k].eval(metric, pt) + self.symbols.q_out[k].eval(metric, &self.weight, pt);
        chi * (e1 + exp(-self.sigma * q2))
    }

    pub fn q<M: Metric + ?Sized>(&self, metric: &M, tau: f64, pt: &PhasePoint) -> f64 {
        let s = metric.sample(&pt.x);
        let bp = b_from_sample(&s, &pt.xi, Sign::Plus);
        let bm = b_from_sample(&s, &pt.xi, Sign::Minus);
        (tau - bp) * self.big_q(metric, Sign::Minus, pt) + (tau - bm) * self.big_q(metric, Sign::Plus, pt)
    }

    /// H_p q by central differences of q(τ, ·).
    pub fn bracket<M: Metric + ?Sized>(&self, metric: &M, tau: f64, pt: &PhasePoint) -> f64 {
        let g = fd_gradient(|z| self.q(metric, tau, z), pt);
        hamilton_bracket(&metric.sample(&pt.x), tau, &pt.xi, &g)
    }

    /// F(τ) = H_p q + 2γτaq.
    pub fn damped_bracket<M: Metric + ?Sized>(&self, metric: &M, tau: f64, pt: &PhasePoint) -> f64 {
        let a = metric.damping_gain() * metric.damping(&pt.x);
        self.bracket(metric, tau, pt) + 2.0 * self.gamma * tau * a * self.q(metric, tau, pt)
    }

    pub fn coefficients<M: Metric + ?Sized>(&self, metric: &M, pt: &PhasePoint) -> Coefficients {
        let s = metric.sample(&pt.x);
        let node = b_from_sample(&s, &pt.xi, Sign::Plus).abs().max(b_from_sample(&s, &pt.xi, Sign::Minus).abs());
        Coefficients::from_nodes(
            node,
            self.damped_bracket(metric, -node, pt),
            self.damped_bracket(metric, 0.0, pt),
            self.damped_bracket(metric, node, pt),
        )
    }

    pub fn correction<M: Metric + ?Sized>(&self, metric: &M, pt: &PhasePoint) -> f64 {
        let s = metric.sample(&pt.x);
        let bp = b_from_sample(&s, &pt.xi, Sign::Plus);
        let bm = b_from_sample(&s, &pt.xi, Sign::Minus);
        build_correction(&self.coefficients(metric, pt), bp, bm)
    }
}
