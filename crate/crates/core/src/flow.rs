//! Hamiltonian flows of p and b±, ray classification and the geometric
//! control audit.

use alloc::vec::Vec;
use core::fmt;

use crate::halfwave::{b_derivs, b_from_sample, b_pm, p_from_sample, phi_scale, FullPhasePoint, PhasePoint, Sign};
use crate::halton::{ball, unit_sphere, ScrambledHalton};
use crate::math::{dot, mat_vec, norm, quad_form, scale, sub, Vec3};
use crate::metric::Metric;
use crate::ode::{dopri5, Control, DenseStep, OdeError, OdeOptions, System};
use crate::par::map_indexed;

/// Half-wave flow ẋ = −∇_ξ b±, ξ̇ = ∇_x b±.
pub struct HalfFlow<'a, M: ?Sized> {
    pub metric: &'a M,
    pub sign: Sign,
}

impl<M: Metric + ?Sized> System<6> for HalfFlow<'_, M> {
    #[inline]
    fn rhs(&self, y: &[f64; 6]) -> [f64; 6] {
        let x = [y[0], y[1], y[2]];
        let xi = [y[3], y[4], y[5]];
        let d = b_derivs(&self.metric.sample(&x), &xi, self.sign);
        [-d.dxi[0], -d.dxi[1], -d.dxi[2], d.dx[0], d.dx[1], d.dx[2]]
    }
}

/// Full flow of p on (t, τ, x, ξ).
pub struct FullFlow<'a, M: ?Sized> {
    pub metric: &'a M,
}

impl<M: Metric + ?Sized> System<8> for FullFlow<'_, M> {
    fn rhs(&self, y: &[f64; 8]) -> [f64; 8] {
        let tau = y[1];
        let x = [y[2], y[3], y[4]];
        let xi = [y[5], y[6], y[7]];
        let s = self.metric.sample(&x);
        let gxi = mat_vec(&s.g, &xi);
        let mut out = [0.0; 8];
        out[0] = -2.0 * tau + 2.0 * dot(&s.g0, &xi);
        for k in 0..3 {
            out[2 + k] = 2.0 * tau * s.g0[k] + 2.0 * gxi[k];
            out[5 + k] = -2.0 * tau * dot(&s.dg0[k], &xi) - quad_form(&s.dg[k], &xi);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlowOptions {
    pub ode: OdeOptions,
    /// Largest accepted relative drift of the conserved quantities.
    pub drift_tol: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), drift_tol: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowError {
    Ode(OdeError),
    /// The datum handed to `reparam_match` is not on the characteristic set.
    NotNull {
        p: f64,
    },
    Drift {
        drift: f64,
    },
}

impl fmt::Display for FlowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowError::Ode(e) => write!(f, "{e}"),
            FlowError::NotNull { p } => write!(f, "datum is not null: p = {p:.3e}"),
            FlowError::Drift { drift } => write!(f, "conserved quantity drifted by {drift:.3e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for FlowError {}

impl From<OdeError> for FlowError {
    fn from(e: OdeError) -> Self {
        FlowError::Ode(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FlowKind {
    Half(Sign),
    Full,
}

#[derive(Clone, Debug)]
pub struct Trajectory<P> {
    /// Accepted step endpoints, starting with the initial datum.
    pub samples: Vec<(f64, P)>,
    pub kind: FlowKind,
    pub conserved_drift: f64,
    pub valid: bool,
}

/// Runs DOPRI5 and returns states at the requested parameters, which must be
/// ordered in the direction of integration.
pub fn dense_at<S: System<N>, const N: usize>(
    sys: &S,
    y0: [f64; N],
    outputs: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<[f64; N]>, OdeError> {
    let Some(&s_end) = outputs.last() else {
        return Ok(Vec::new());
    };
    let dir = if s_end >= 0.0 { 1.0 } else { -1.0 };
    let mut out = Vec::with_capacity(outputs.len());
    let mut next = 0;
    while next < outputs.len() && outputs[next] == 0.0 {
        out.push(y0);
        next += 1;
    }
    let end = dopri5(sys, 0.0, y0, s_end, opts, |st: &DenseStep<N>| {
        while next < outputs.len() && (outputs[next] - st.s1()) * dir <= 0.0 {
            out.push(if outputs[next] == st.s1() { st.y1 } else { st.eval(outputs[next]) });
            next += 1;
        }
        Control::Continue
    })?;
    // The last step is stretched onto s_end, but s0 + h may round past it.
    out.resize(outputs.len(), end.y);
    Ok(out)
}

pub fn integrate_half<M: Metric + ?Sized>(
    metric: &M,
    sign: Sign,
    w0: &PhasePoint,
    s_end: f64,
    opts: &FlowOptions,
) -> Result<Trajectory<PhasePoint>, FlowError> {
    let sys = HalfFlow { metric, sign };
    let b0 = b_pm(metric, w0, sign);
    let mut samples = alloc::vec![(0.0, *w0)];
    let mut drift: f64 = 0.0;
    dopri5(&sys, 0.0, w0.to_array(), s_end, &opts.ode, |st| {
        let p = PhasePoint::from_array(&st.y1);
        drift = drift.max(((b_pm(metric, &p, sign) - b0) / b0).abs());
        samples.push((st.s1(), p));
        Control::Continue
    })?;
    Ok(Trajectory { samples, kind: FlowKind::Half(sign), conserved_drift: drift, valid: drift <= opts.drift_tol })
}

/// Half-flow states at the given parameters (ordered in one direction).
pub fn half_flow_at<M: Metric + ?Sized>(
    metric: &M,
    sign: Sign,
    w0: &PhasePoint,
    s_values: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<PhasePoint>, OdeError> {
    let sys = HalfFlow { metric, sign };
    Ok(dense_at(&sys, w0.to_array(), s_values, opts)?.iter().map(PhasePoint::from_array).collect())
}

/// Drift of τ (relative) and of p (relative to τ² + |ξ|²).
pub fn integrate_full<M: Metric + ?Sized>(
    metric: &M,
    w0: &FullPhasePoint,
    s_end: f64,
    opts: &FlowOptions,
) -> Result<Trajectory<FullPhasePoint>, FlowError> {
    let sys = FullFlow { metric };
    let scale0 = w0.tau * w0.tau + dot(&w0.xi, &w0.xi);
    let p0 = p_from_sample(&metric.sample(&w0.x), w0.tau, &w0.xi);
    let mut samples = alloc::vec![(0.0, *w0)];
    let mut drift: f64 = 0.0;
    dopri5(&sys, 0.0, w0.to_array(), s_end, &opts.ode, |st| {
        let w = FullPhasePoint::from_array(&st.y1);
        let dtau = (w.tau - w0.tau).abs() / w0.tau.abs().max(f64::MIN_POSITIVE);
        let dp = (p_from_sample(&metric.sample(&w.x), w.tau, &w.xi) - p0).abs() / scale0;
        drift = drift.max(dtau).max(dp);
        samples.push((st.s1(), w));
        Control::Continue
    })?;
    Ok(Trajectory { samples, kind: FlowKind::Full, conserved_drift: drift, valid: drift <= opts.drift_tol })
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReparamReport {
    pub branch: Sign,
    pub max_dx: f64,
    /// Deviation of ξ relative to |ξ₀|.
    pub max_dxi: f64,
    pub points: usize,
}

/// Compares the full flow from a null datum, reparameterized by t, with the
/// half flow of the matching branch over t ∈ [0, t_end].
pub fn reparam_match<M: Metric + ?Sized>(
    metric: &M,
    w0: &FullPhasePoint,
    t_end: f64,
    opts: &FlowOptions,
) -> Result<ReparamReport, FlowError> {
    let s = metric.sample(&w0.x);
    let scale0 = w0.tau * w0.tau + dot(&w0.xi, &w0.xi);
    let p0 = p_from_sample(&s, w0.tau, &w0.xi);
    if p0.abs() > 1e-8 * scale0 {
        return Err(FlowError::NotNull { p: p0 });
    }
    let bp = b_from_sample(&s, &w0.xi, Sign::Plus);
    let bm = b_from_sample(&s, &w0.xi, Sign::Minus);
    let branch = if (w0.tau - bp).abs() <= (w0.tau - bm).abs() { Sign::Plus } else { Sign::Minus };
    let sys = FullFlow { metric };
    let tdot = sys.rhs(&w0.to_array())[0];
    let dir = if tdot > 0.0 { 1.0 } else { -1.0 };
    // t is monotone along the orbit; integrate until it passes t_end.
    let s_max = 100.0 * t_end / tdot.abs() + 1.0;
    let mut ts = alloc::vec![w0.t];
    let mut states = alloc::vec![w0.to_array()];
    dopri5(&sys, 0.0, w0.to_array(), dir * s_max, &opts.ode, |st| {
        for j in 1..=4 {
            let y = if j == 4 { st.y1 } else { st.eval(st.s0 + st.h * j as f64 / 4.0) };
            if y[0] - w0.t > t_end {
                return Control::Stop;
            }
            ts.push(y[0]);
            states.push(y);
        }
        Control::Continue
    })?;
    let rel: Vec<f64> = ts.iter().map(|t| t - w0.t).collect();
    let half = half_flow_at(metric, branch, &w0.phase(), &rel, &opts.ode)?;
    let xi0 = norm(&w0.xi);
    let mut max_dx: f64 = 0.0;
    let mut max_dxi: f64 = 0.0;
    for (y, h) in states.iter().zip(&half) {
        let w = FullPhasePoint::from_array(y);
        max_dx = max_dx.max(norm(&sub(&w.x, &h.x)));
        max_dxi = max_dxi.max(norm(&sub(&w.xi, &h.xi)) / xi0);
    }
    Ok(ReparamReport { branch, max_dx, max_dxi, points: states.len() })
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalingReport {
    /// sup |x_s(x, λξ) − x_s(x, ξ)|
    pub max_dx: f64,
    /// sup |λξ_s(x, ξ) − ξ_s(x, λξ)| / |ξ_s(x, λξ)|
    pub max_dxi: f64,
}

pub fn verify_flow_scaling<M: Metric + ?Sized>(
    metric: &M,
    w0: &PhasePoint,
    lambda: f64,
    sign: Sign,
    s_end: f64,
    opts: &OdeOptions,
) -> Result<ScalingReport, FlowError> {
    let grid: Vec<f64> = (0..=200).map(|i| s_end * i as f64 / 200.0).collect();
    let a = half_flow_at(metric, sign, w0, &grid, opts)?;
    let scaled = PhasePoint::new(w0.x, scale(&w0.xi, lambda));
    let b = half_flow_at(metric, sign, &scaled, &grid, opts)?;
    let mut rep = ScalingReport { max_dx: 0.0, max_dxi: 0.0 };
    for (p, q) in a.iter().zip(&b) {
        rep.max_dx = rep.max_dx.max(norm(&sub(&p.x, &q.x)));
        rep.max_dxi = rep.max_dxi.max(norm(&sub(&scale(&p.xi, lambda), &q.xi)) / norm(&q.xi));
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Direction {
    Forward,
    Backward,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Verdict {
    Escaped,
    Trapped,
    Undetermined,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Escaped => "escaped",
            Verdict::Trapped => "trapped",
            Verdict::Undetermined => "undetermined",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassifyParams {
    pub r: f64,
    pub delta: f64,
    pub t_max: f64,
    /// Damping level counted as a hit; non-positive disables hit tracking.
    pub a_threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RayClass {
    pub verdict: Verdict,
    /// Signed parameter s′ at which the escape criterion fired (forward
    /// escape preferred).
    pub escape_param: Option<f64>,
    pub horizon: f64,
    pub min_radius: f64,
    pub max_radius: f64,
    /// Escaped in exactly one direction of a two-sided query.
    pub semi_bounded: bool,
    /// |x| kept increasing for 10% beyond every escape parameter.
    pub permanence_ok: bool,
    pub max_damping: f64,
    /// Signed parameter of the first sample with a > a_threshold.
    pub first_hit: Option<f64>,
    pub error: Option<FlowErrorKind>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FlowErrorKind {
    StepUnderflow,
    TooManySteps,
    NonFinite,
    Drift,
}

struct Trace {
    escaped_at: Option<f64>,
    min_r: f64,
    max_r: f64,
    max_a: f64,
    first_hit: Option<f64>,
    permanence_ok: bool,
    error: Option<FlowErrorKind>,
}

fn error_kind(e: &OdeError) -> FlowErrorKind {
    match e {
        OdeError::StepUnderflow { .. } => FlowErrorKind::StepUnderflow,
        OdeError::TooManySteps { .. } => FlowErrorKind::TooManySteps,
        OdeError::NonFinite { .. } => FlowErrorKind::NonFinite,
    }
}

/// Spacing of the damping/radius probes along each accepted step.
const PROBE: f64 = 0.25;

fn trace<M: Metric + ?Sized>(
    metric: &M,
    sign: Sign,
    w0: &PhasePoint,
    prm: &ClassifyParams,
    dir: f64,
    opts: &FlowOptions,
) -> Trace {
    let sys = HalfFlow { metric, sign };
    let r0 = norm(&w0.x);
    let b0 = b_pm(metric, w0, sign);
    let bound = (2.0 * prm.r).max(r0 + prm.delta);
    let mut t = Trace {
        escaped_at: None,
        min_r: r0,
        max_r: r0,
        max_a: metric.damping(&w0.x),
        first_hit: None,
        permanence_ok: true,
        error: None,
    };
    if prm.a_threshold > 0.0 && t.max_a > prm.a_threshold {
        t.first_hit = Some(0.0);
    }
    let mut drift: f64 = 0.0;
    let mut escape_state = None;
    let res = dopri5(&sys, 0.0, w0.to_array(), dir * prm.t_max, &opts.ode, |st| {
        let n = (libm::ceil(st.h.abs() / PROBE) as usize).max(1);
        for j in 1..=n {
            let s = st.s0 + st.h * j as f64 / n as f64;
            let y = if j == n { st.y1 } else { st.eval(s) };
            let x = [y[0], y[1], y[2]];
            let r = norm(&x);
            t.min_r = t.min_r.min(r);
            t.max_r = t.max_r.max(r);
            let a = metric.damping(&x);
            t.max_a = t.max_a.max(a);
            if t.first_hit.is_none() && prm.a_threshold > 0.0 && a > prm.a_threshold {
                t.first_hit = Some(s);
            }
            if r >= bound {
                t.escaped_at = Some(s);
                escape_state = Some(y);
                return Control::Stop;
            }
        }
        let p = PhasePoint::from_array(&st.y1);
        drift = drift.max(((b_pm(metric, &p, sign) - b0) / b0).abs());
        Control::Continue
    });
    if let Err(e) = res {
        t.error = Some(error_kind(&e));
        return t;
    }
    if drift > opts.drift_tol {
        t.error = Some(FlowErrorKind::Drift);
        return t;
    }
    if let (Some(s1), Some(y1)) = (t.escaped_at, escape_state) {
        // Continue 10% further and require |x|² to keep growing.
        let extra = 0.1 * s1.abs().max(prm.r);
        let mut last = dot(&[y1[0], y1[1], y1[2]], &[y1[0], y1[1], y1[2]]);
        let mut ok = true;
        let res = dopri5(&sys, 0.0, y1, dir * extra, &opts.ode, |st| {
            let n = (libm::ceil(st.h.abs() / PROBE) as usize).max(1);
            for j in 1..=n {
                let y = if j == n { st.y1 } else { st.eval(st.s0 + st.h * j as f64 / n as f64) };
                let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
                ok &= r2 > last;
                last = r2;
            }
            Control::Continue
        });
        t.permanence_ok = ok && res.is_ok();
    }
    t
}

pub fn classify_ray<M: Metric + ?Sized>(
    metric: &M,
    sign: Sign,
    w0: &PhasePoint,
    prm: &ClassifyParams,
    direction: Direction,
    opts: &FlowOptions,
) -> RayClass {
    let fwd =
        matches!(direction, Direction::Forward | Direction::Both).then(|| trace(metric, sign, w0, prm, 1.0, opts));
    let bwd =
        matches!(direction, Direction::Backward | Direction::Both).then(|| trace(metric, sign, w0, prm, -1.0, opts));
    let traces: Vec<&Trace> = fwd.iter().chain(bwd.iter()).collect();
    let min_radius = traces.iter().map(|t| t.min_r).fold(f64::INFINITY, f64::min);
    let max_radius = traces.iter().map(|t| t.max_r).fold(0.0, f64::max);
    let max_damping = traces.iter().map(|t| t.max_a).fold(0.0, f64::max);
    let first_hit = traces.iter().filter_map(|t| t.first_hit).min_by(|a, b| a.abs().total_cmp(&b.abs()));
    let error = traces.iter().find_map(|t| t.error);
    let n_escaped = traces.iter().filter(|t| t.escaped_at.is_some()).count();
    let permanence_ok = traces.iter().all(|t| t.permanence_ok);
    let escape_param = traces.iter().find_map(|t| t.escaped_at);
    let verdict = if error.is_some() {
        Verdict::Undetermined
    } else if n_escaped == traces.len() {
        Verdict::Escaped
    } else if n_escaped == 0 && max_radius <= 2.0 * prm.r {
        Verdict::Trapped
    } else {
        Verdict::Undetermined
    };
    RayClass {
        verdict,
        escape_param,
        horizon: prm.t_max,
        min_radius,
        max_radius,
        semi_bounded: error.is_none() && n_escaped == 1 && traces.len() == 2,
        permanence_ok,
        max_damping,
        first_hit,
        error,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GccRow {
    pub seed: usize,
    pub sign: Sign,
    /// Seed after Φ± normalization.
    pub point: PhasePoint,
    pub class: RayClass,
    pub hit: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GccReport {
    pub rows: Vec<GccRow>,
    pub escaped: usize,
    pub trapped: usize,
    pub undetermined: usize,
    pub semi_bounded: usize,
    pub trapped_hit: usize,
    pub semi_bounded_hit: usize,
    /// 1 when no ray is trapped (GCC then holds vacuously).
    pub trapped_fraction_hit: f64,
    pub vacuous: bool,
    pub permanence_failures: usize,
}

impl GccReport {
    pub fn holds(&self) -> bool {
        self.trapped_hit == self.trapped
    }
}

/// Classifies every seed under both signs (two-sided) and records damping hits.
pub fn check_gcc<M: Metric + ?Sized>(
    metric: &M,
    seeds: &[PhasePoint],
    prm: &ClassifyParams,
    opts: &FlowOptions,
) -> GccReport {
    let rows = map_indexed(2 * seeds.len(), |k| {
        let seed = k / 2;
        let sign = Sign::BOTH[k % 2];
        let point = phi_scale(metric, &seeds[seed], sign);
        let class = classify_ray(metric, sign, &point, prm, Direction::Both, opts);
        GccRow { seed, sign, point, class, hit: class.first_hit.is_some() }
    });
    let count = |f: &dyn Fn(&GccRow) -> bool| rows.iter().filter(|r| f(r)).count();
    let trapped = count(&|r| r.class.verdict == Verdict::Trapped);
    let trapped_hit = count(&|r| r.class.verdict == Verdict::Trapped && r.hit);
    GccReport {
        escaped: count(&|r| r.class.verdict == Verdict::Escaped),
        undetermined: count(&|r| r.class.verdict == Verdict::Undetermined),
        semi_bounded: count(&|r| r.class.semi_bounded),
        semi_bounded_hit: count(&|r| r.class.semi_bounded && r.hit),
        permanence_failures: count(&|r| r.class.escape_param.is_some() && !r.class.permanence_ok),
        trapped_fraction_hit: if trapped == 0 { 1.0 } else { trapped_hit as f64 / trapped as f64 },
        vacuous: trapped == 0,
        trapped,
        trapped_hit,
        rows,
    }
}

/// Low-discrepancy seeds in {|x| ≤ radius} × S².
pub fn ball_seeds(radius: f64, count: usize, seed: u64) -> Vec<PhasePoint> {
    let seq = ScrambledHalton::new(5, seed, 1);
    let mut p = [0.0; 5];
    (0..count)
        .map(|i| {
            seq.point(i as u64, &mut p);
            PhasePoint::new(ball(p[0], p[1], p[2], radius), unit_sphere(p[3], p[4]))
        })
        .collect()
}

/// Seeds on the sphere |x| = radius with covectors tangent to it.
pub fn tangential_seeds(radius: f64, count: usize, seed: u64) -> Vec<PhasePoint> {
    let seq = ScrambledHalton::new(3, seed, 2);
    let mut p = [0.0; 3];
    (0..count)
        .map(|i| {
            seq.point(i as u64, &mut p);
            let n = unit_sphere(p[0], p[1]);
            let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let e1 = normalize(&sub(&helper, &scale(&n, dot(&helper, &n))));
            let e2 = cross(&n, &e1);
            let phi = 2.0 * core::f64::consts::PI * p[2];
            let t = [
                libm::cos(phi) * e1[0] + libm::sin(phi) * e2[0],
                libm::cos(phi) * e1[1] + libm::sin(phi) * e2[1],
                libm::cos(phi) * e1[2] + libm::sin(phi) * e2[2],
            ];
            PhasePoint::new(scale(&n, radius), t)
        })
        .collect()
}

fn normalize(v: &Vec3) -> Vec3 {
    scale(v, 1.0 / norm(v))
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Null datum over (x, ξ) on the requested branch: τ = b±(x, ξ).
pub fn null_datum<M: Metric + ?Sized>(metric: &M, pt: &PhasePoint, branch: Sign) -> FullPhasePoint {
    FullPhasePoint { t: 0.0, tau: b_pm(metric, pt, branch), x: pt.x, xi: pt.xi }
}

/// Straight-line half flow of Minkowski space, used as a reference.
pub fn minkowski_line(w0: &PhasePoint, s: f64) -> Vec3 {
    let n = norm(&w0.xi);
    [w0.x[0] - s * w0.xi[0] / n, w0.x[1] - s * w0.xi[1] / n, w0.x[2] - s * w0.xi[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{Damping, MetricModel};

    fn prm(r: f64, t_max: f64) -> ClassifyParams {
        ClassifyParams { r, delta: 0.1 * r, t_max, a_threshold: 0.0 }
    }

    #[test]
    fn minkowski_half_flow_is_straight() {
        let m = MetricModel::minkowski();
        let w0 = PhasePoint::new([1.0, -2.0, 0.5], [0.3, 0.4, -1.2]);
        let tr = integrate_half(&m, Sign::Plus, &w0, 50.0, &FlowOptions::default()).unwrap();
        assert!(tr.valid);
        for (s, p) in &tr.samples {
            assert!(norm(&sub(&p.x, &minkowski_line(&w0, *s))) < 1e-10);
            assert_eq!(p.xi, w0.xi);
        }
        // The minus branch runs the other way.
        let tr = integrate_half(&m, Sign::Minus, &w0, 10.0, &FlowOptions::default()).unwrap();
        let (s, p) = tr.samples.last().unwrap();
        assert!(norm(&sub(&p.x, &minkowski_line(&w0, -s))) < 1e-10);
    }

    #[test]
    fn minkowski_full_flow_null_datum() {
        let m = MetricModel::minkowski();
        let w0 = FullPhasePoint { t: 0.0, tau: 1.0, x: [0.0; 3], xi: [1.0, 0.0, 0.0] };
        let tr = integrate_full(&m, &w0, 10.0, &FlowOptions::default()).unwrap();
        for (s, w) in &tr.samples {
            assert!((w.x[0] - 2.0 * s).abs() < 1e-10);
            assert!((w.t + 2.0 * s).abs() < 1e-10);
            assert_eq!(w.xi, w0.xi);
        }
    }

    #[test]
    fn reparam_minkowski_both_branches() {
        let m = MetricModel::minkowski();
        let pt = PhasePoint::new([0.5, 0.0, -1.0], [0.0, 2.0, 1.0]);
        for b in Sign::BOTH {
            let rep = reparam_match(&m, &null_datum(&m, &pt, b), 20.0, &FlowOptions::default()).unwrap();
            assert_eq!(rep.branch, b);
            assert!(rep.max_dx < 1e-10 && rep.max_dxi < 1e-10, "{rep:?}");
        }
    }

    #[test]
    fn reparam_rejects_non_null() {
        let m = MetricModel::minkowski();
        let w = FullPhasePoint { t: 0.0, tau: 2.0, x: [0.0; 3], xi: [1.0, 0.0, 0.0] };
        assert!(matches!(reparam_match(&m, &w, 1.0, &FlowOptions::default()), Err(FlowError::NotNull { .. })));
    }

    #[test]
    fn scaling_with_unit_lambda_is_exact() {
        let m = MetricModel::trapped_shell(-0.6, 8.0, 2.0);
        let w0 = PhasePoint::new([7.0, 1.0, 0.0], [0.2, 1.0, 0.1]);
        let rep = verify_flow_scaling(&m, &w0, 1.0, Sign::Plus, 20.0, &OdeOptions::default()).unwrap();
        assert_eq!(rep.max_dx, 0.0);
        assert_eq!(rep.max_dxi, 0.0);
    }

    #[test]
    fn minkowski_escape_parameter() {
        let m = MetricModel::minkowski();
        let w0 = PhasePoint::new([0.0; 3], [0.0, 0.0, -1.0]);
        let c = classify_ray(&m, Sign::Plus, &w0, &prm(5.0, 100.0), Direction::Forward, &FlowOptions::default());
        assert_eq!(c.verdict, Verdict::Escaped);
        assert!((c.escape_param.unwrap() - 10.0).abs() <= PROBE);
        assert!(c.permanence_ok);
    }

    #[test]
    fn two_sided_escape_and_first_hit() {
        let m = MetricModel::minkowski().with_damping(Damping::Ball {
            center: [0.0, 0.0, 3.0],
            radius: 1.0,
            amplitude: 1.0,
        });
        let w0 = PhasePoint::new([0.0; 3], [0.0, 0.0, -1.0]);
        let p = ClassifyParams { a_threshold: 1e-6, ..prm(5.0, 100.0) };
        let c = classify_ray(&m, Sign::Plus, &w0, &p, Direction::Both, &FlowOptions::default());
        assert_eq!(c.verdict, Verdict::Escaped);
        let hit = c.first_hit.unwrap();
        assert!(hit > 2.0 && hit < 2.3, "{hit}");
    }

    #[test]
    fn minkowski_gcc_is_vacuous() {
        let m = MetricModel::minkowski();
        let seeds = ball_seeds(2.0, 32, 3);
        let rep = check_gcc(&m, &seeds, &prm(1.0, 50.0), &FlowOptions::default());
        assert_eq!(rep.trapped, 0);
        assert!(rep.vacuous && rep.holds());
        assert_eq!(rep.escaped, 64);
        assert_eq!(rep.permanence_failures, 0);
    }

    #[test]
    fn tangential_seeds_are_tangent() {
        for s in tangential_seeds(3.0, 50, 1) {
            assert!((norm(&s.x) - 3.0).abs() < 1e-12);
            assert!(dot(&s.x, &s.xi).abs() < 1e-12);
            assert!((norm(&s.xi) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_at_hits_requested_points() {
        let m = MetricModel::minkowski();
        let w0 = PhasePoint::new([0.0; 3], [1.0, 0.0, 0.0]);
        let out = half_flow_at(&m, Sign::Plus, &w0, &[0.0, 0.5, 3.0, 7.25], &OdeOptions::default()).unwrap();
        for (s, p) in [0.0, 0.5, 3.0, 7.25].iter().zip(&out) {
            assert!((p.x[0] + s).abs() < 1e-12);
        }
        let back = half_flow_at(&m, Sign::Plus, &w0, &[-1.0, -2.0], &OdeOptions::default()).unwrap();
        assert!((back[1].x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn final_output_after_a_rounded_last_step() {
        // Here the stretched last step ends one ulp short of s_end.
        let m = MetricModel::minkowski();
        let w0 = PhasePoint::new(
            [-9.714797373585668, 0.21511994989525754, -3.3597468852295855],
            [3.568591111621231, 9.327700098185803, -5.5782543130140985],
        );
        let s = 46.697381907995116;
        let end = half_flow_at(&m, Sign::Plus, &w0, &[0.0, s], &OdeOptions::default()).unwrap()[1];
        let line = minkowski_line(&w0, s);
        for i in 0..3 {
            assert!((end.x[i] - line[i]).abs() < 1e-9);
        }
    }
}
