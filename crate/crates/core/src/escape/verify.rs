//! Sampled check of the escape inequality and the (λ, σ, γ, ε) search.
//!
//! The flow-integral pieces q₁∘Φ±, q_in∘Φ± and the degree-0 factor h± of
//! q_out are evaluated once per (x, ξ̂) with finite-difference gradients.
//! Everything else is recomputed per configuration from the chain rule, using
//! that those pieces are homogeneous of degree 0 in ξ.

use alloc::vec::Vec;

use super::assembly::{assemble_q, build_correction, hamilton_bracket, Coefficients, EscapeAssembly};
use super::bootstrap::BootstrapWeight;
use super::symbols::fd_gradient;
use super::{EscapeError, Symbols};
use crate::halfwave::{b_derivs, PhasePoint, Sign};
use crate::halton::{unit_sphere, ScrambledHalton};
use crate::math::{cutoff_above, exp, japanese, norm, smoothstep_deriv, Vec3};
use crate::metric::{Metric, MetricSample};
use crate::par::map_indexed;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleSpec {
    /// (x, ξ̂) points; each yields three samples (random τ, τ = b⁺, τ = b⁻).
    pub points: usize,
    /// |x| ranges over [0, radius_factor·R], uniformly in |x|.
    pub radius_factor: f64,
    /// |ξ| ranges over [λ_v, xi_span·λ_v] with λ_v = 2λ/c_b.
    pub xi_span: f64,
    /// Fraction of samples allowed below the reported floor.
    pub quantile: f64,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self { points: 34_000, radius_factor: 8.0, xi_span: 8.0, quantile: 0.01, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Piece {
    value: f64,
    grad: [f64; 6],
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Branch {
    q1: Piece,
    q_in: Piece,
    h: Piece,
}

#[derive(Clone, Debug, PartialEq)]
struct CachedPoint {
    x: Vec3,
    dir: Vec3,
    u_xi: f64,
    u_tau: f64,
    sample: MetricSample,
    a: f64,
    branch: [Branch; 2],
}

/// Per-point data that does not depend on the tuning parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleCache {
    pub spec: SampleSpec,
    pub r: f64,
    pub c_b: f64,
    pub cap_b: f64,
    points: Vec<CachedPoint>,
}

impl SampleCache {
    pub fn build<M: Metric + ?Sized>(metric: &M, symbols: &Symbols, spec: &SampleSpec) -> Self {
        let seq = ScrambledHalton::new(7, spec.seed, 41);
        let rmax = spec.radius_factor * symbols.r;
        let points = map_indexed(spec.points, |i| {
            let mut p = [0.0; 7];
            seq.point(i as u64, &mut p);
            let d = unit_sphere(p[1], p[2]);
            let r = rmax * p[0];
            let x = [r * d[0], r * d[1], r * d[2]];
            let dir = unit_sphere(p[3], p[4]);
            let pt = PhasePoint::new(x, dir);
            let branch = [Sign::Plus, Sign::Minus].map(|sign| {
                let k = super::idx(sign);
                let q1 = &symbols.q1[k];
                let q_in = &symbols.q_in[k];
                let q_out = &symbols.q_out[k];
                let piece = |f: &dyn Fn(&PhasePoint) -> f64| Piece { value: f(&pt), grad: fd_gradient(f, &pt) };
                Branch {
                    q1: if q1.seeds.is_empty() { Piece::default() } else { piece(&|z| q1.eval(metric, z)) },
                    q_in: if q_in.zero || r >= 4.0 * symbols.r {
                        Piece::default()
                    } else {
                        piece(&|z| q_in.eval(metric, z))
                    },
                    h: if r <= symbols.r { Piece::default() } else { piece(&|z| q_out.h(metric, z)) },
                }
            });
            CachedPoint { x, dir, u_xi: p[5], u_tau: p[6], sample: metric.sample(&x), a: metric.damping(&x), branch }
        });
        Self { spec: *spec, r: symbols.r, c_b: symbols.bscale.c_b, cap_b: symbols.bscale.cap_b, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The (x, ξ) of point `i` for a given λ, and its random τ.
    pub fn phase_point(&self, i: usize, lambda: f64) -> (PhasePoint, f64) {
        let c = &self.points[i];
        let lv = 2.0 * lambda / self.c_b;
        let k = lv * (1.0 + (self.spec.xi_span - 1.0) * c.u_xi);
        let tau = self.cap_b * self.spec.xi_span * lv * (2.0 * c.u_tau - 1.0);
        (PhasePoint::new(c.x, [k * c.dir[0], k * c.dir[1], k * c.dir[2]]), tau)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Offender {
    pub tau: f64,
    pub x: Vec3,
    pub xi: Vec3,
    pub value: f64,
    pub characteristic: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PositivityReport {
    pub lambda: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub samples: usize,
    pub characteristic_samples: usize,
    pub min_value: f64,
    pub min_characteristic: f64,
    /// Order statistic at the allowed failure fraction.
    pub quantile_value: f64,
    /// Reported floor c₀ = min(quantile_value, min_characteristic).
    pub c0: f64,
    pub fraction_at_least_c0: f64,
    pub c_target: f64,
    pub fraction_below_target: f64,
    pub correction_valid_fraction: f64,
    pub non_finite: usize,
    pub worst: Vec<Offender>,
    pub passed: bool,
}

struct Eval {
    values: [f64; 3],
    taus: [f64; 3],
    valid: bool,
}

fn scaled(p: &Piece, k: f64) -> [f64; 6] {
    let mut g = p.grad;
    for v in &mut g[3..] {
        *v /= k;
    }
    g
}

fn evaluate(c: &CachedPoint, pt: &PhasePoint, tau_r: f64, prm: &Params, w: &BootstrapWeight, gain: f64) -> Eval {
    let k = norm(&pt.xi);
    let r = norm(&pt.x);
    let (fr, fpr) = if r > 0.0 { (w.f(r), w.f_prime(r)) } else { (1.0, 0.0) };
    let mut big_q = [0.0; 2];
    let mut grad_q = [[0.0; 6]; 2];
    let mut b = [0.0; 2];
    let mut grad_b = [[0.0; 6]; 2];
    for (j, sign) in [Sign::Plus, Sign::Minus].into_iter().enumerate() {
        let br = &c.branch[j];
        let d = b_derivs(&c.sample, &pt.xi, sign);
        b[j] = d.b;
        let mut gb = [0.0; 6];
        gb[..3].copy_from_slice(&d.dx);
        gb[3..].copy_from_slice(&d.dxi);
        grad_b[j] = gb;
        let ab = d.b.abs();
        let chi = cutoff_above(ab, prm.lambda, 2.0 * prm.lambda);
        if chi == 0.0 {
            continue;
        }
        let dchi = smoothstep_deriv((ab - prm.lambda) / prm.lambda) / prm.lambda * d.b.signum();
        let gh = scaled(&br.h, k);
        let gin = scaled(&br.q_in, k);
        let q2 = prm.epsilon * br.q_in.value + fr * br.h.value;
        let mut gq2 = [0.0; 6];
        for i in 0..6 {
            gq2[i] = prm.epsilon * gin[i] + fr * gh[i];
        }
        if r > 0.0 {
            for i in 0..3 {
                gq2[i] += fpr * pt.x[i] / r * br.h.value;
            }
        }
        let e2 = exp(-prm.sigma * q2);
        let mut s = e2;
        let mut gs = [0.0; 6];
        for i in 0..6 {
            gs[i] = -prm.sigma * e2 * gq2[i];
        }
        if prm.q1_present[j] {
            let e1 = exp(-prm.sigma * br.q1.value);
            let g1 = scaled(&br.q1, k);
            s += e1;
            for i in 0..6 {
                gs[i] -= prm.sigma * e1 * g1[i];
            }
        }
        big_q[j] = chi * s;
        for i in 0..6 {
            grad_q[j][i] = dchi * gb[i] * s + chi * gs[i];
        }
    }
    let a = gain * c.a;
    let f = |tau: f64| {
        let q = (tau - b[0]) * big_q[1] + (tau - b[1]) * big_q[0];
        let mut g = [0.0; 6];
        for i in 0..6 {
            g[i] = (tau - b[0]) * grad_q[1][i] - big_q[1] * grad_b[0][i] + (tau - b[1]) * grad_q[0][i]
                - big_q[0] * grad_b[1][i];
        }
        hamilton_bracket(&c.sample, tau, &pt.xi, &g) + 2.0 * prm.gamma * tau * a * q
    };
    let node = b[0].abs().max(b[1].abs());
    let coeffs = Coefficients::from_nodes(node, f(-node), f(0.0), f(node));
    let m = build_correction(&coeffs, b[0], b[1]);
    let valid = coeffs.correction_valid(m, b[0], b[1]);
    let weight = japanese(r) * japanese(r);
    let taus = [tau_r, b[0], b[1]];
    let values = taus.map(|tau| {
        let p = -(tau - b[0]) * (tau - b[1]);
        (f(tau) + m * p) * weight / (tau * tau + k * k)
    });
    Eval { values, taus, valid }
}

struct Params {
    lambda: f64,
    sigma: f64,
    gamma: f64,
    epsilon: f64,
    q1_present: [bool; 2],
}

/// Evaluates (H_pq + 2γτaq + mp)⟨x⟩²/(τ² + |ξ|²) on the cached sample.
pub fn verify_escape_inequality<M: Metric + ?Sized>(
    metric: &M,
    assembly: &EscapeAssembly,
    cache: &SampleCache,
    c_target: f64,
) -> PositivityReport {
    let prm = Params {
        lambda: assembly.lambda,
        sigma: assembly.sigma,
        gamma: assembly.gamma,
        epsilon: assembly.epsilon,
        q1_present: [!assembly.symbols.q1[0].is_absent(), !assembly.symbols.q1[1].is_absent()],
    };
    run(cache, &prm, &assembly.weight, metric.damping_gain(), c_target)
}

fn run(cache: &SampleCache, prm: &Params, w: &BootstrapWeight, gain: f64, c_target: f64) -> PositivityReport {
    let evals = map_indexed(cache.len(), |i| {
        let (pt, tau) = cache.phase_point(i, prm.lambda);
        (pt, evaluate(&cache.points[i], &pt, tau, prm, w, gain))
    });
    let n = 3 * evals.len();
    let mut all = Vec::with_capacity(n);
    let mut min_char = f64::INFINITY;
    let mut non_finite = 0usize;
    let mut valid = 0usize;
    let mut offenders: Vec<Offender> = Vec::new();
    for (pt, e) in &evals {
        if e.valid {
            valid += 1;
        }
        for (j, &v) in e.values.iter().enumerate() {
            let v = if v.is_finite() {
                v
            } else {
                non_finite += 1;
                f64::NEG_INFINITY
            };
            all.push(v);
            if j > 0 {
                min_char = min_char.min(v);
            }
            offenders.push(Offender { tau: e.taus[j], x: pt.x, xi: pt.xi, value: v, characteristic: j > 0 });
        }
    }
    offenders.sort_by(|a, b| a.value.total_cmp(&b.value));
    offenders.truncate(10);
    let mut sorted = all.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let qv = sorted[((cache.spec.quantile * (n - 1) as f64) as usize).min(n - 1)];
    let c0 = qv.min(min_char);
    let at_least = all.iter().filter(|&&v| v >= c0).count();
    let below = all.iter().filter(|&&v| v < c_target).count();
    let valid_fraction = valid as f64 / evals.len() as f64;
    PositivityReport {
        lambda: prm.lambda,
        sigma: prm.sigma,
        gamma: prm.gamma,
        epsilon: prm.epsilon,
        samples: n,
        characteristic_samples: 2 * evals.len(),
        min_value: sorted[0],
        min_characteristic: min_char,
        quantile_value: qv,
        c0,
        fraction_at_least_c0: at_least as f64 / n as f64,
        c_target,
        fraction_below_target: below as f64 / n as f64,
        correction_valid_fraction: valid_fraction,
        non_finite,
        worst: offenders,
        passed: c0 > 0.0 && c0 >= c_target && non_finite == 0 && valid == evals.len(),
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TuneGrid {
    pub lambdas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    pub c_target: f64,
}

impl Default for TuneGrid {
    fn default() -> Self {
        Self {
            lambdas: alloc::vec![4.0, 8.0, 16.0, 32.0],
            sigmas: alloc::vec![4.0, 16.0, 64.0],
            gammas: alloc::vec![16.0, 64.0, 256.0],
            epsilon_start: 1.0,
            epsilon_min: 1.0 / (1u64 << 20) as f64,
            c_target: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Attempt {
    pub lambda: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub c0: f64,
    pub correction_valid_fraction: f64,
    pub non_finite: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TuneOutcome {
    pub report: PositivityReport,
    pub attempts: Vec<Attempt>,
}

/// Searches λ, σ, γ in grid order with ε halved from `epsilon_start`; the
/// first passing configuration wins.
pub fn tune<M: Metric + ?Sized>(
    metric: &M,
    symbols: &Symbols,
    cache: &SampleCache,
    grid: &TuneGrid,
) -> Result<(EscapeAssembly, TuneOutcome), (EscapeError, Vec<Attempt>)> {
    let mut attempts = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let q1_present = [!symbols.q1[0].is_absent(), !symbols.q1[1].is_absent()];
    for &sigma in &grid.sigmas {
        let w = symbols.weight(sigma);
        for &lambda in &grid.lambdas {
            for &gamma in &grid.gammas {
                let mut epsilon = grid.epsilon_start;
                while epsilon >= grid.epsilon_min {
                    let prm = Params { lambda, sigma, gamma, epsilon, q1_present };
                    let report = run(cache, &prm, &w, metric.damping_gain(), grid.c_target);
                    attempts.push(Attempt {
                        lambda,
                        sigma,
                        gamma,
                        epsilon,
                        c0: report.c0,
                        correction_valid_fraction: report.correction_valid_fraction,
                        non_finite: report.non_finite,
                        passed: report.passed,
                    });
                    if report.c0.is_finite() {
                        best = best.max(report.c0);
                    }
                    if report.passed {
                        let asm = assemble_q(symbols, epsilon, sigma, lambda, gamma);
                        return Ok((asm, TuneOutcome { report, attempts }));
                    }
                    epsilon *= 0.5;
                }
            }
        }
    }
    Err((EscapeError::Exhausted { attempts: attempts.len(), best_c0: best }, attempts))
}
