//! The flow-integral symbols q₁± (semi-bounded cover), q_in± and the exterior
//! multiplier q_out±. All except q_out are defined on the unit-b cosphere and
//! pulled back through Φ±.

use alloc::vec::Vec;

use super::EscapeError;
use crate::flow::{GccRow, HalfFlow, Verdict};
use crate::halfwave::{b_derivs, phi_scale, BScale, PhasePoint, Sign};
use crate::halton::{ball, unit_sphere, ScrambledHalton};
use crate::math::{cutoff_above, cutoff_below, dot, norm, smoothstep, sqrt};
use crate::metric::Metric;
use crate::ode::rk4_step;

/// Phase-space distance on the cosphere (unit weights on x and ξ).
#[inline]
pub fn phase_distance(a: &PhasePoint, b: &PhasePoint) -> f64 {
    let mut d = 0.0;
    for i in 0..3 {
        d += (a.x[i] - b.x[i]) * (a.x[i] - b.x[i]) + (a.xi[i] - b.xi[i]) * (a.xi[i] - b.xi[i]);
    }
    sqrt(d)
}

/// Central-difference gradient (∇_x f, ∇_ξ f) with steps 1e−5·max(1, |·|).
pub fn fd_gradient<F: Fn(&PhasePoint) -> f64>(f: F, pt: &PhasePoint) -> [f64; 6] {
    let hx = 1e-5 * norm(&pt.x).max(1.0);
    let hxi = 1e-5 * norm(&pt.xi).max(1.0);
    let mut g = [0.0; 6];
    for k in 0..6 {
        let h = if k < 3 { hx } else { hxi };
        let mut p = pt.to_array();
        let mut m = pt.to_array();
        p[k] += h;
        m[k] -= h;
        g[k] = (f(&PhasePoint::from_array(&p)) - f(&PhasePoint::from_array(&m))) / (2.0 * h);
    }
    g
}

/// H_{p±} f = −∇_ξb±·∇_x f + ∇_x b±·∇_ξ f, the derivative along the half flow.
pub fn half_bracket<M: Metric + ?Sized>(metric: &M, sign: Sign, pt: &PhasePoint, grad: &[f64; 6]) -> f64 {
    let d = b_derivs(&metric.sample(&pt.x), &pt.xi, sign);
    let mut s = 0.0;
    for k in 0..3 {
        s += -d.dxi[k] * grad[k] + d.dx[k] * grad[3 + k];
    }
    s
}

/// Damping indicator κ_a: 0 where a ≤ α, 1 where a ≥ 2α.
#[inline]
pub fn damping_indicator(a: f64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        0.0
    } else {
        smoothstep((a - alpha) / alpha)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoverSeed {
    /// Seed on the unit-b cosphere.
    pub point: PhasePoint,
    /// Flow time to the damping maximum (a multiple of the quadrature step).
    pub s_w: f64,
    /// Half the damping value reached at s_w.
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoverOptions {
    /// Greedy acceptance radius ρ; χ_w is 1 within 2ρ and 0 beyond 3ρ.
    pub radius: f64,
    /// Step of the RK4 quadratures.
    pub ds: f64,
    /// Forward horizon for locating the damping hit.
    pub horizon: f64,
    /// Threshold α_d of the damping element: seeds with a ≥ 2α_d are covered
    /// by the damping region itself.
    pub damping_alpha: f64,
    /// Damping level counted as a hit when locating s_w.
    pub a_threshold: f64,
}

/// q₁± = Σ_w q_w ∘ Φ± with q_w = ∫₀^{s_w} χ_w∘φ_{−s} ds.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SemiBounded {
    pub sign: Sign,
    pub seeds: Vec<CoverSeed>,
    pub r_in: f64,
    pub r_out: f64,
    pub ds: f64,
    /// α_d when the damping region covers part of the trapped set.
    pub damping_alpha: Option<f64>,
    /// C± = Σ 2/α_w (+ 2/α_d).
    pub c_pm: f64,
    /// Trapped rays handed to the construction.
    pub trapped_input: usize,
}

impl SemiBounded {
    pub fn empty(sign: Sign, opts: &CoverOptions) -> Self {
        Self {
            sign,
            seeds: Vec::new(),
            r_in: 2.0 * opts.radius,
            r_out: 3.0 * opts.radius,
            ds: opts.ds,
            damping_alpha: None,
            c_pm: 0.0,
            trapped_input: 0,
        }
    }

    /// True when the cover is empty and q₁ contributes nothing.
    pub fn is_absent(&self) -> bool {
        self.seeds.is_empty() && self.damping_alpha.is_none()
    }

    #[inline]
    pub fn chi(&self, seed: &CoverSeed, z: &PhasePoint) -> f64 {
        cutoff_below(phase_distance(z, &seed.point), self.r_in, self.r_out)
    }

    /// q_w at a cosphere point.
    pub fn q_w<M: Metric + ?Sized>(&self, metric: &M, k: usize, v: &PhasePoint) -> f64 {
        let seed = &self.seeds[k];
        let n = libm::round(seed.s_w / self.ds) as usize;
        if n == 0 {
            return 0.0;
        }
        let sys = HalfFlow { metric, sign: self.sign };
        let mut y = v.to_array();
        let mut acc = 0.5 * self.chi(seed, v);
        for i in 1..=n {
            y = rk4_step(&sys, &y, -self.ds);
            let c = self.chi(seed, &PhasePoint::from_array(&y));
            acc += if i == n { 0.5 * c } else { c };
        }
        acc * self.ds
    }

    /// φ_{−s_w}(v) by the same RK4 steps as the quadrature.
    pub fn pullback<M: Metric + ?Sized>(&self, metric: &M, k: usize, v: &PhasePoint) -> PhasePoint {
        let n = libm::round(self.seeds[k].s_w / self.ds) as usize;
        let sys = HalfFlow { metric, sign: self.sign };
        let mut y = v.to_array();
        for _ in 0..n {
            y = rk4_step(&sys, &y, -self.ds);
        }
        PhasePoint::from_array(&y)
    }

    pub fn eval_normalized<M: Metric + ?Sized>(&self, metric: &M, v: &PhasePoint) -> f64 {
        (0..self.seeds.len()).map(|k| self.q_w(metric, k, v)).sum()
    }

    /// q₁±(x, ξ) = Σ q_w(Φ±(x, ξ)).
    pub fn eval<M: Metric + ?Sized>(&self, metric: &M, pt: &PhasePoint) -> f64 {
        if self.seeds.is_empty() {
            return 0.0;
        }
        self.eval_normalized(metric, &phi_scale(metric, pt, self.sign))
    }

    /// Exclusion weight for ψ: 1 within 1.5ρ of a seed, 0 beyond 2ρ.
    pub fn cover_indicator(&self, z: &PhasePoint) -> f64 {
        let lo = 0.75 * self.r_in;
        let s: f64 = self.seeds.iter().map(|w| cutoff_below(phase_distance(z, &w.point), lo, self.r_in)).sum();
        s.min(1.0)
    }

    /// min over samples of H_{p±}q₁ + C±a on the covered region (seed balls
    /// of radius r_in and the damping element {a ≥ 2α_d}).
    pub fn validate<M: Metric + ?Sized>(
        &self,
        metric: &M,
        samples: usize,
        region_radius: f64,
        seed: u64,
    ) -> Option<f64> {
        if self.is_absent() {
            return None;
        }
        let seq = ScrambledHalton::new(7, seed, 21);
        let mut p = [0.0; 7];
        let mut worst = f64::INFINITY;
        let mut checked = 0usize;
        let mut i = 0u64;
        while checked < samples && i < 200 * samples as u64 {
            seq.point(i, &mut p);
            i += 1;
            let z = if !self.seeds.is_empty() && p[6] < 0.5 {
                let w = &self.seeds[(p[0] * self.seeds.len() as f64) as usize % self.seeds.len()];
                let off = ball(p[1], p[2], p[3], self.r_in);
                let dxi = unit_sphere(p[4], p[5]);
                let r = self.r_in * p[3];
                let mut xi = w.point.xi;
                for k in 0..3 {
                    xi[k] += r * dxi[k] * 0.5;
                }
                let x = [w.point.x[0] + off[0] * 0.5, w.point.x[1] + off[1] * 0.5, w.point.x[2] + off[2] * 0.5];
                phi_scale(metric, &PhasePoint::new(x, xi), self.sign)
            } else {
                let Some(alpha) = self.damping_alpha else {
                    continue;
                };
                let x = ball(p[1], p[2], p[3], region_radius);
                if metric.damping(&x) < 2.0 * alpha {
                    continue;
                }
                phi_scale(metric, &PhasePoint::new(x, unit_sphere(p[4], p[5])), self.sign)
            };
            let covered = self.seeds.iter().any(|w| phase_distance(&z, &w.point) < self.r_in)
                || self.damping_alpha.is_some_and(|al| metric.damping(&z.x) >= 2.0 * al);
            if !covered {
                continue;
            }
            let g = fd_gradient(|q| self.eval_normalized(metric, q), &z);
            let v = half_bracket(metric, self.sign, &z, &g) + self.c_pm * metric.damping_gain() * metric.damping(&z.x);
            worst = worst.min(v);
            checked += 1;
        }
        Some(worst)
    }
}

/// Locates s_w (snapped to the quadrature grid) and α_w for one seed.
fn damping_hit<M: Metric + ?Sized>(metric: &M, sign: Sign, w: &PhasePoint, opts: &CoverOptions) -> Option<(f64, f64)> {
    let sys = HalfFlow { metric, sign };
    let mut y = w.to_array();
    let n = libm::ceil(opts.horizon / opts.ds) as usize;
    let mut best: Option<(usize, f64)> = None;
    for i in 0..=n {
        let a = metric.damping(&[y[0], y[1], y[2]]);
        match best {
            None if a > opts.a_threshold => best = Some((i, a)),
            Some((_, b)) if a >= b => best = Some((i, a)),
            Some(_) => break,
            None => {}
        }
        y = rk4_step(&sys, &y, opts.ds);
    }
    best.map(|(i, a)| (i as f64 * opts.ds, 0.5 * a))
}

/// Greedy cover of the trapped rays of one sign.
pub fn build_q_semibounded<M: Metric + ?Sized>(
    metric: &M,
    sign: Sign,
    rows: &[GccRow],
    opts: &CoverOptions,
) -> Result<SemiBounded, EscapeError> {
    let mut out = SemiBounded::empty(sign, opts);
    let mut trapped: Vec<&GccRow> =
        rows.iter().filter(|r| r.sign == sign && r.class.verdict == Verdict::Trapped).collect();
    out.trapped_input = trapped.len();
    if trapped.is_empty() {
        return Ok(out);
    }
    if let Some(bad) = trapped.iter().find(|r| r.class.first_hit.is_none()) {
        return Err(EscapeError::GccViolated { seed: bad.seed, sign });
    }
    out.damping_alpha = Some(opts.damping_alpha);
    trapped.sort_by(|a, b| {
        let ka = a.class.first_hit.unwrap_or(0.0).abs();
        let kb = b.class.first_hit.unwrap_or(0.0).abs();
        ka.total_cmp(&kb).then(a.seed.cmp(&b.seed))
    });
    for row in trapped {
        if metric.damping(&row.point.x) >= 2.0 * opts.damping_alpha {
            continue;
        }
        if out.seeds.iter().any(|w| phase_distance(&w.point, &row.point) < opts.radius) {
            continue;
        }
        let (s_w, alpha) =
            damping_hit(metric, sign, &row.point, opts).ok_or(EscapeError::GccViolated { seed: row.seed, sign })?;
        out.seeds.push(CoverSeed { point: row.point, s_w, alpha });
    }
    out.c_pm = out.seeds.iter().map(|w| 2.0 / w.alpha).sum::<f64>() + 2.0 / opts.damping_alpha;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PsiOptions {
    /// ψ's radial cutoff: 1 on |x| ≤ R, 0 beyond `outer_factor`·R.
    pub outer_factor: f64,
    /// Margin δ± of the |ξ| window, as a fraction of c_b.
    pub window_margin: f64,
    pub ds: f64,
    /// Hard cap on the forward quadrature.
    pub t_cap: f64,
    /// Rays used to estimate the transit bound T′.
    pub transit_samples: usize,
    pub seed: u64,
}

impl Default for PsiOptions {
    fn default() -> Self {
        Self { outer_factor: 1.25, window_margin: 0.1, ds: 0.1, t_cap: 600.0, transit_samples: 512, seed: 0 }
    }
}

/// q̃_in± = −χ_{<2R}(|x|)∫₀^{T′} ψ∘φ_s ds, pulled back through Φ±.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NonTrapped {
    pub sign: Sign,
    pub r: f64,
    pub psi_radius: f64,
    /// Radius past which an outgoing ray never returns to supp ψ.
    pub r_stop: f64,
    pub window: (f64, f64, f64),
    pub damping_alpha: f64,
    pub cover: SemiBounded,
    pub ds: f64,
    pub t_cap: f64,
    /// Transit bound T′ (twice the largest observed residence span).
    pub transit: f64,
    /// ψ switched off entirely.
    pub zero: bool,
}

impl NonTrapped {
    /// ψ at a cosphere point.
    pub fn psi<M: Metric + ?Sized>(&self, metric: &M, z: &PhasePoint) -> f64 {
        if self.zero {
            return 0.0;
        }
        let rad = cutoff_below(norm(&z.x), self.r, self.psi_radius);
        if rad == 0.0 {
            return 0.0;
        }
        let k = norm(&z.xi);
        let (lo, hi, m) = self.window;
        let win = cutoff_above(k, lo - m, lo) * cutoff_below(k, hi, hi + 1.0);
        if win == 0.0 {
            return 0.0;
        }
        let ka = damping_indicator(metric.damping(&z.x), self.damping_alpha);
        if ka >= 1.0 {
            return 0.0;
        }
        rad * win * (1.0 - ka) * (1.0 - self.cover.cover_indicator(z))
    }

    /// Forward residence data: (integral, first and last parameters with ψ > 0,
    /// whether the ray left for good before the cap).
    fn forward<M: Metric + ?Sized>(
        &self,
        metric: &M,
        v: &PhasePoint,
        truncate: bool,
    ) -> (f64, Option<(f64, f64)>, bool) {
        let sys = HalfFlow { metric, sign: self.sign };
        let mut y = v.to_array();
        let mut acc = 0.0;
        let mut prev = self.psi(metric, v);
        let mut span = (prev > 0.0).then_some((0.0, 0.0));
        let n = libm::ceil(self.t_cap / self.ds) as usize;
        for i in 1..=n {
            let s = i as f64 * self.ds;
            y = rk4_step(&sys, &y, self.ds);
            let z = PhasePoint::from_array(&y);
            let cur = self.psi(metric, &z);
            acc += 0.5 * (prev + cur) * self.ds;
            prev = cur;
            if cur > 0.0 {
                span = Some(span.map_or((s, s), |(a, _)| (a, s)));
            }
            let r = norm(&z.x);
            if cur == 0.0 && r >= self.r_stop {
                let v = HalfFlow { metric, sign: self.sign };
                let d = crate::ode::System::rhs(&v, &y);
                if dot(&z.x, &[d[0], d[1], d[2]]) > 0.0 {
                    return (acc, span, true);
                }
            }
            if truncate {
                if let Some((a, _)) = span {
                    if s - a >= self.transit && cur == 0.0 {
                        return (acc, span, true);
                    }
                }
            }
        }
        (acc, span, false)
    }

    /// q̃_in at a cosphere point.
    pub fn eval_normalized<M: Metric + ?Sized>(&self, metric: &M, v: &PhasePoint) -> f64 {
        if self.zero {
            return 0.0;
        }
        let chi = cutoff_below(norm(&v.x), 2.0 * self.r, 4.0 * self.r);
        if chi == 0.0 {
            return 0.0;
        }
        -chi * self.forward(metric, v, true).0
    }

    pub fn eval<M: Metric + ?Sized>(&self, metric: &M, pt: &PhasePoint) -> f64 {
        self.eval_normalized(metric, &phi_scale(metric, pt, self.sign))
    }

    /// Residence integral ∫ψ∘φ_s without the χ_{<2R} factor.
    pub fn residence<M: Metric + ?Sized>(&self, metric: &M, v: &PhasePoint) -> f64 {
        self.forward(metric, v, true).0
    }
}

/// Builds q_in for one sign; estimates T′ from rays launched in supp ψ.
pub fn build_q_in<M: Metric + ?Sized>(
    metric: &M,
    sign: Sign,
    r: f64,
    bscale: &BScale,
    cover: &SemiBounded,
    damping_alpha: f64,
    opts: &PsiOptions,
) -> Result<NonTrapped, EscapeError> {
    let lo = 1.0 / bscale.cap_b;
    let hi = 1.0 / bscale.c_b;
    let psi_radius = opts.outer_factor * r;
    let mut q = NonTrapped {
        sign,
        r,
        psi_radius,
        r_stop: psi_radius.max(r),
        window: (lo, hi, opts.window_margin * bscale.c_b),
        damping_alpha,
        cover: cover.clone(),
        ds: opts.ds,
        t_cap: opts.t_cap,
        transit: opts.t_cap,
        zero: false,
    };
    let seq = ScrambledHalton::new(5, opts.seed, 31 + sign as u64);
    let mut p = [0.0; 5];
    let mut longest: f64 = 0.0;
    for i in 0..opts.transit_samples {
        seq.point(i as u64, &mut p);
        let x = ball(p[0], p[1], p[2], psi_radius);
        let v = phi_scale(metric, &PhasePoint::new(x, unit_sphere(p[3], p[4])), sign);
        if q.psi(metric, &v) == 0.0 {
            continue;
        }
        let (_, span, left) = q.forward(metric, &v, false);
        if !left {
            return Err(EscapeError::Lingering { sign, x: v.x, xi: v.xi, t_cap: opts.t_cap });
        }
        if let Some((a, b)) = span {
            longest = longest.max(b - a);
        }
    }
    q.transit = (2.0 * longest).max(opts.ds);
    Ok(q)
}

/// ψ ≡ 0 variant: q_in vanishes identically.
pub fn zero_q_in(sign: Sign, r: f64, cover: &SemiBounded) -> NonTrapped {
    NonTrapped {
        sign,
        r,
        psi_radius: r,
        r_stop: r,
        window: (0.0, f64::INFINITY, 0.0),
        damping_alpha: 0.0,
        cover: cover.clone(),
        ds: 1.0,
        t_cap: 0.0,
        transit: 0.0,
        zero: true,
    }
}

/// The degree-0 factor h± = −χ_{>R}(|x|)(∂_{ξ_k}b±)x_k/|x|, so q_out = f(|x|)h±.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Exterior {
    pub sign: Sign,
    pub r: f64,
}

impl Exterior {
    pub fn h<M: Metric + ?Sized>(&self, metric: &M, pt: &PhasePoint) -> f64 {
        let rr = norm(&pt.x);
        let chi = cutoff_above(rr, self.r, 2.0 * self.r);
        if chi == 0.0 {
            return 0.0;
        }
        let d = b_derivs(&metric.sample(&pt.x), &pt.xi, self.sign);
        -chi * dot(&d.dxi, &pt.x) / rr
    }

    pub fn eval<M: Metric + ?Sized>(&self, metric: &M, f: &super::BootstrapWeight, pt: &PhasePoint) -> f64 {
        f.f(norm(&pt.x)) * self.h(metric, pt)
    }
}

pub fn build_q_out(sign: Sign, r: f64) -> Exterior {
    Exterior { sign, r }
}
