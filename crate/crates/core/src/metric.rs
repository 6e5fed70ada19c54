//! Stationary inverse metrics (with g⁰⁰ = −1 implied), damping profiles and
//! the asymptotic-flatness estimate.

use alloc::vec::Vec;
use core::fmt;

use crate::halton::{unit_sphere, ScrambledHalton};
use crate::math::{dot, exp, japanese, norm, sqrt, Mat3, Vec3};

/// Coefficients and first derivatives at one point.
///
/// `dg0[k][j] = ∂_k g⁰ʲ`, `dg[k][i][j] = ∂_k gⁱʲ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSample {
    pub g0: Vec3,
    pub g: Mat3,
    pub dg0: Mat3,
    pub dg: [Mat3; 3],
}

impl MetricSample {
    pub fn flat() -> Self {
        let mut g = [[0.0; 3]; 3];
        for (i, row) in g.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { g0: [0.0; 3], g, dg0: [[0.0; 3]; 3], dg: [[[0.0; 3]; 3]; 3] }
    }

    fn is_finite(&self) -> bool {
        let f = |m: &Mat3| m.iter().flatten().all(|v| v.is_finite());
        self.g0.iter().all(|v| v.is_finite()) && f(&self.g) && f(&self.dg0) && self.dg.iter().all(f)
    }
}

/// A stationary background: inverse metric, damping and their metadata.
pub trait Metric: Sync + Send {
    fn sample(&self, x: &Vec3) -> MetricSample;
    fn damping(&self, x: &Vec3) -> f64;
    /// Radius beyond which the damping vanishes identically.
    fn damping_support_radius(&self) -> f64;
    /// Upper bound for the damping, used to set relative thresholds.
    fn damping_peak(&self) -> f64;
    /// `(c_ell, C_ell)` with `c_ell|ξ|² ≤ gⁱʲξᵢξⱼ ≤ C_ell|ξ|²`.
    fn ellipticity_bounds(&self) -> (f64, f64);
    /// Factor multiplying `a` in the operator; 1 except for rescaled models.
    fn damping_gain(&self) -> f64 {
        1.0
    }
}

impl<M: Metric + ?Sized> Metric for &M {
    fn sample(&self, x: &Vec3) -> MetricSample {
        (**self).sample(x)
    }
    fn damping(&self, x: &Vec3) -> f64 {
        (**self).damping(x)
    }
    fn damping_support_radius(&self) -> f64 {
        (**self).damping_support_radius()
    }
    fn damping_peak(&self) -> f64 {
        (**self).damping_peak()
    }
    fn ellipticity_bounds(&self) -> (f64, f64) {
        (**self).ellipticity_bounds()
    }
    fn damping_gain(&self) -> f64 {
        (**self).damping_gain()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Geometry {
    Minkowski,
    /// gⁱʲ = w(r)δⁱʲ with w(r) = 1 + A·(exp(−(r − r_c)²/W²) + exp(−(r + r_c)²/W²)).
    TrappedShell {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// g⁰ʲ = ε·exp(−|x|²)·(−x₂, x₁, 0), gⁱʲ = δⁱʲ.
    CrosstermToy {
        epsilon: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Damping {
    None,
    /// a₀(1 − |x − x₀|²/ρ²)³ inside the ball.
    Ball {
        center: Vec3,
        radius: f64,
        amplitude: f64,
    },
    /// a₀(1 − ((|x| − r₀)/w)²)³ for ||x| − r₀| < w.
    Shell {
        radius: f64,
        half_width: f64,
        amplitude: f64,
    },
}

/// A stationary radial orbit of a spherically symmetric geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircularOrbit {
    pub radius: f64,
    /// Local minimum of c(r)/r: nearby tangential rays stay close.
    pub stable: bool,
}

/// exp(−(r−r_c)²/W²) + exp(−(r+r_c)²/W²) and its r-derivative. The mirror
/// term makes the profile even in r, hence smooth at x = 0; it changes the
/// value by at most exp(−r_c²/W²).
fn shell_bump(r: f64, center: f64, width: f64) -> (f64, f64) {
    let w2 = width * width;
    let (dm, dp) = (r - center, r + center);
    let (gm, gp) = (exp(-dm * dm / w2), exp(-dp * dp / w2));
    (gm + gp, -2.0 * (dm * gm + dp * gp) / w2)
}

/// Largest value of the shell profile over r ≥ 0.
fn shell_peak(center: f64, width: f64) -> f64 {
    let r_hi = center + 4.0 * width;
    let n = 4000;
    (0..=n)
        .map(|i| shell_bump(r_hi * i as f64 / n as f64, center, width).0)
        .fold(shell_bump(center, center, width).0, f64::max)
}

impl Geometry {
    pub fn sample(&self, x: &Vec3) -> MetricSample {
        match *self {
            Geometry::Minkowski => MetricSample::flat(),
            Geometry::TrappedShell { amplitude, center, width } => {
                let r = norm(x);
                let (e, de) = shell_bump(r, center, width);
                let w = 1.0 + amplitude * e;
                let dw = amplitude * de;
                let mut s = MetricSample::flat();
                for i in 0..3 {
                    s.g[i][i] = w;
                }
                if r > 0.0 {
                    for k in 0..3 {
                        let dk = dw * x[k] / r;
                        for i in 0..3 {
                            s.dg[k][i][i] = dk;
                        }
                    }
                }
                s
            }
            Geometry::CrosstermToy { epsilon } => {
                let e = epsilon * exp(-dot(x, x));
                let v = [-x[1], x[0], 0.0];
                let dv: Mat3 = [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0; 3]];
                let mut s = MetricSample::flat();
                for j in 0..3 {
                    s.g0[j] = e * v[j];
                    for k in 0..3 {
                        s.dg0[k][j] = e * (dv[k][j] - 2.0 * x[k] * v[j]);
                    }
                }
                s
            }
        }
    }

    pub fn ellipticity_bounds(&self) -> (f64, f64) {
        match *self {
            Geometry::TrappedShell { amplitude, center, width } => {
                let w = 1.0 + amplitude * shell_peak(center, width);
                (w.min(1.0), w.max(1.0))
            }
            _ => (1.0, 1.0),
        }
    }

    /// Wave speed c(r) = √w(r) for the spherically symmetric shell.
    pub fn radial_speed(&self, r: f64) -> Option<f64> {
        match *self {
            Geometry::Minkowski => Some(1.0),
            Geometry::TrappedShell { amplitude, center, width } => {
                Some(sqrt(1.0 + amplitude * shell_bump(r, center, width).0))
            }
            Geometry::CrosstermToy { .. } => None,
        }
    }

    /// Circular null orbits: critical points of c(r)/r, located by a scan of
    /// the sign of d/dr log(c/r) followed by bisection.
    pub fn circular_orbits(&self) -> Vec<CircularOrbit> {
        let Geometry::TrappedShell { amplitude, center, width } = *self else {
            return Vec::new();
        };
        // d/dr [½ log w − log r]
        let slope = |r: f64| {
            let (e, de) = shell_bump(r, center, width);
            0.5 * amplitude * de / (1.0 + amplitude * e) - 1.0 / r
        };
        let r_hi = center + 8.0 * width;
        let n = 20_000;
        let step = r_hi / n as f64;
        let mut out = Vec::new();
        let mut r0 = step;
        let mut s0 = slope(r0);
        for i in 2..=n {
            let r1 = i as f64 * step;
            let s1 = slope(r1);
            if s0 == 0.0 || s0 * s1 < 0.0 {
                let (mut a, mut b) = (r0, r1);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if slope(a) * slope(m) <= 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                // slope goes − → + at a minimum of c/r.
                out.push(CircularOrbit { radius: 0.5 * (a + b), stable: s0 < 0.0 });
            }
            r0 = r1;
            s0 = s1;
        }
        out
    }
}

impl Damping {
    pub fn value(&self, x: &Vec3) -> f64 {
        match *self {
            Damping::None => 0.0,
            Damping::Ball { center, radius, amplitude } => {
                let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                let s = dot(&d, &d) / (radius * radius);
                if s < 1.0 {
                    let t = 1.0 - s;
                    amplitude * t * t * t
                } else {
                    0.0
                }
            }
            Damping::Shell { radius, half_width, amplitude } => {
                let s = (norm(x) - radius) / half_width;
                if s.abs() < 1.0 {
                    let t = 1.0 - s * s;
                    amplitude * t * t * t
                } else {
                    0.0
                }
            }
        }
    }

    pub fn support_radius(&self) -> f64 {
        match *self {
            Damping::None => 0.0,
            Damping::Ball { center, radius, .. } => norm(&center) + radius,
            Damping::Shell { radius, half_width, .. } => radius + half_width,
        }
    }

    pub fn peak(&self) -> f64 {
        match *self {
            Damping::None => 0.0,
            Damping::Ball { amplitude, .. } | Damping::Shell { amplitude, .. } => amplitude,
        }
    }
}

/// A built-in geometry paired with a built-in damping profile.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricModel {
    pub geometry: Geometry,
    pub damping: Damping,
}

impl MetricModel {
    pub fn new(geometry: Geometry, damping: Damping) -> Self {
        Self { geometry, damping }
    }

    pub fn minkowski() -> Self {
        Self::new(Geometry::Minkowski, Damping::None)
    }

    pub fn trapped_shell(amplitude: f64, center: f64, width: f64) -> Self {
        Self::new(Geometry::TrappedShell { amplitude, center, width }, Damping::None)
    }

    pub fn crossterm_toy(epsilon: f64) -> Self {
        Self::new(Geometry::CrosstermToy { epsilon }, Damping::None)
    }

    pub fn with_damping(mut self, damping: Damping) -> Self {
        self.damping = damping;
        self
    }
}

impl Metric for MetricModel {
    fn sample(&self, x: &Vec3) -> MetricSample {
        self.geometry.sample(x)
    }
    fn damping(&self, x: &Vec3) -> f64 {
        self.damping.value(x)
    }
    fn damping_support_radius(&self) -> f64 {
        self.damping.support_radius()
    }
    fn damping_peak(&self) -> f64 {
        self.damping.peak()
    }
    fn ellipticity_bounds(&self) -> (f64, f64) {
        self.geometry.ellipticity_bounds()
    }
}

/// The rescaled model g̃(x) = g(γx), ã(x) = a(γx), with the operator's
/// damping coefficient multiplied by γ.
#[derive(Clone, Copy, Debug)]
pub struct Scaled<M> {
    pub inner: M,
    pub gamma: f64,
}

pub fn scale_metric<M: Metric>(metric: M, gamma: f64) -> Scaled<M> {
    assert!(gamma > 0.0, "scale factor must be positive");
    Scaled { inner: metric, gamma }
}

impl<M: Metric> Metric for Scaled<M> {
    fn sample(&self, x: &Vec3) -> MetricSample {
        let y = [self.gamma * x[0], self.gamma * x[1], self.gamma * x[2]];
        let mut s = self.inner.sample(&y);
        for k in 0..3 {
            for j in 0..3 {
                s.dg0[k][j] *= self.gamma;
                for i in 0..3 {
                    s.dg[k][i][j] *= self.gamma;
                }
            }
        }
        s
    }
    fn damping(&self, x: &Vec3) -> f64 {
        self.inner.damping(&[self.gamma * x[0], self.gamma * x[1], self.gamma * x[2]])
    }
    fn damping_support_radius(&self) -> f64 {
        self.inner.damping_support_radius() / self.gamma
    }
    fn damping_peak(&self) -> f64 {
        self.inner.damping_peak()
    }
    fn ellipticity_bounds(&self) -> (f64, f64) {
        self.inner.ellipticity_bounds()
    }
    fn damping_gain(&self) -> f64 {
        self.gamma * self.inner.damping_gain()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MetricError {
    NonFinite { x: Vec3 },
    NotAfSmall { j_max: usize, value: f64, threshold: f64 },
    InvalidArgument(&'static str),
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::NonFinite { x } => {
                write!(f, "metric returned a non-finite value at {x:?}")
            }
            MetricError::NotAfSmall { j_max, value, threshold } => {
                write!(f, "annulus {j_max} still has size {value:.3e} above threshold {threshold:.3e}")
            }
            MetricError::InvalidArgument(s) => write!(f, "invalid argument: {s}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MetricError {}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub g0: Vec3,
    pub g: Mat3,
    pub a: f64,
}

/// Coefficient values at `x`, rejecting non-finite output.
pub fn eval<M: Metric + ?Sized>(metric: &M, x: &Vec3) -> Result<Coefficients, MetricError> {
    let s = metric.sample(x);
    let a = metric.damping(x);
    if !s.is_finite() || !a.is_finite() {
        return Err(MetricError::NonFinite { x: *x });
    }
    Ok(Coefficients { g0: s.g0, g: s.g, a })
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AfOptions {
    pub j_max: usize,
    pub samples_per_annulus: usize,
    pub threshold: f64,
    /// Slow-variation exponent: c_j/c_k ≤ 2^{δ|j−k|}.
    pub delta: f64,
}

impl Default for AfOptions {
    fn default() -> Self {
        Self { j_max: 10, samples_per_annulus: 2000, threshold: 0.1, delta: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AfEstimate {
    pub r0: f64,
    /// Measured sup of Σ_{|α|≤2} ⟨x⟩^{|α|}|∂^α(g − m)| per annulus.
    pub measured: Vec<f64>,
    /// Slowly varying envelope of `measured`.
    pub c_seq: Vec<f64>,
    pub c_total: f64,
    pub delta: f64,
}

/// Σ_{|α|≤2} ⟨x⟩^{|α|}|∂^α(g − m)| at one point; second derivatives by
/// central differences of the analytic gradients.
pub fn af_pointwise<M: Metric + ?Sized>(metric: &M, x: &Vec3) -> f64 {
    let s = metric.sample(x);
    let mut h0 = dot(&s.g0, &s.g0);
    for i in 0..3 {
        for j in 0..3 {
            let m = if i == j { 1.0 } else { 0.0 };
            h0 += (s.g[i][j] - m) * (s.g[i][j] - m);
        }
    }
    let grad_sq = |s: &MetricSample| {
        let mut t = 0.0;
        for k in 0..3 {
            t += dot(&s.dg0[k], &s.dg0[k]);
            for i in 0..3 {
                t += dot(&s.dg[k][i], &s.dg[k][i]);
            }
        }
        t
    };
    let h1 = grad_sq(&s);
    let r = norm(x);
    let h = 1e-4 * r.max(1.0);
    let mut h2 = 0.0;
    for l in 0..3 {
        let mut xp = *x;
        let mut xm = *x;
        xp[l] += h;
        xm[l] -= h;
        let sp = metric.sample(&xp);
        let sm = metric.sample(&xm);
        let mut diff = MetricSample::flat();
        for k in 0..3 {
            for j in 0..3 {
                diff.dg0[k][j] = (sp.dg0[k][j] - sm.dg0[k][j]) / (2.0 * h);
                for i in 0..3 {
                    diff.dg[k][i][j] = (sp.dg[k][i][j] - sm.dg[k][i][j]) / (2.0 * h);
                }
            }
        }
        h2 += grad_sq(&diff);
    }
    let jb = japanese(r);
    sqrt(h0) + jb * sqrt(h1) + jb * jb * sqrt(h2)
}

/// Annulus A_j = {2ʲ ≤ ⟨x⟩ < 2ʲ⁺¹}; sampled uniformly in ⟨x⟩ and direction.
pub fn estimate_af<M: Metric + ?Sized>(metric: &M, opts: &AfOptions) -> Result<AfEstimate, MetricError> {
    if opts.j_max < 1 || opts.samples_per_annulus == 0 {
        return Err(MetricError::InvalidArgument("j_max must be ≥ 1 and samples positive"));
    }
    let seq = ScrambledHalton::plain(3);
    let mut measured = Vec::with_capacity(opts.j_max + 1);
    for j in 0..=opts.j_max {
        let lo = libm::ldexp(1.0, j as i32);
        let mut m: f64 = 0.0;
        for i in 0..opts.samples_per_annulus {
            let jb = lo * (1.0 + seq.coord(i as u64, 0));
            let r = sqrt(jb * jb - 1.0);
            let d = unit_sphere(seq.coord(i as u64, 1), seq.coord(i as u64, 2));
            let v = af_pointwise(metric, &[r * d[0], r * d[1], r * d[2]]);
            if !v.is_finite() {
                return Err(MetricError::NonFinite { x: [r * d[0], r * d[1], r * d[2]] });
            }
            m = m.max(v);
        }
        measured.push(m);
    }
    let last = measured[opts.j_max];
    if last >= opts.threshold {
        return Err(MetricError::NotAfSmall { j_max: opts.j_max, value: last, threshold: opts.threshold });
    }
    let mut j0 = opts.j_max;
    while j0 > 0 && measured[j0 - 1] < opts.threshold {
        j0 -= 1;
    }
    let c_seq: Vec<f64> = (0..measured.len())
        .map(|j| {
            measured
                .iter()
                .enumerate()
                .map(|(k, &m)| m * libm::exp2(-opts.delta * (j as f64 - k as f64).abs()))
                .fold(0.0, f64::max)
        })
        .collect();
    let c_total = c_seq.iter().sum();
    Ok(AfEstimate { r0: libm::ldexp(1.0, j0 as i32), measured, c_seq, c_total, delta: opts.delta })
}
