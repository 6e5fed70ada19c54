//! Damped wave equation ∂²_t u − 2g⁰ʲ∂_j∂_t u − (∂_j g⁰ʲ)∂_t u − ∂_i(gⁱʲ∂_j u) + a∂_t u = f
//! on [−L, L]³ with homogeneous Dirichlet data and a boundary sponge.
//!
//! Writing v = ∂_t u, the equation is v_t = Kv + Lu − Av + f with the skew
//! operator Kv = g⁰·∇v + ∇·(g⁰v), L = ∂_i gⁱʲ ∂_j and A = a + sponge. The
//! scheme is staggered leapfrog (u at integer steps, v at half steps) with
//! K and A averaged over the two half steps. Discretely K stays skew and L
//! symmetric, so M^{n+½} = |v^{n+½}|² + ⟨−Lu^{n+1}, u^n⟩ obeys
//! M^{n+½} − M^{n−½} = 2dt(⟨f, v̄⟩ − ⟨Av̄, v̄⟩) exactly.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math::{japanese, pairwise_sum, sqrt, Vec3};
use crate::metric::Metric;
use crate::par::{for_each_plane, map_indexed};

/// Largest admissible dt·√C_ell/h.
pub const CFL_MAX: f64 = 0.4;
pub const MAX_ANNULI: usize = 16;

const K_TOL: f64 = 1e-13;
const K_MAX_ITER: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    /// Half-width L of the cube.
    pub extent: f64,
    /// Nodes per axis, boundary included.
    pub n: usize,
    pub dt: f64,
    pub sponge_width: f64,
    pub sponge_strength: f64,
}

impl GridSpec {
    /// dt set to `cfl`·h/√C_ell.
    pub fn with_cfl(extent: f64, n: usize, cfl: f64, c_ell: f64, sponge_width: f64, sponge_strength: f64) -> Self {
        let h = 2.0 * extent / (n - 1) as f64;
        Self { extent, n, dt: cfl * h / sqrt(c_ell), sponge_width, sponge_strength }
    }

    /// Shrinks dt so the smallest positive report time is a whole number of
    /// steps. Other times land on steps when they are multiples of it.
    pub fn aligned_to(mut self, times: &[f64]) -> Self {
        let t0 = times.iter().cloned().filter(|t| *t > 0.0).fold(f64::INFINITY, f64::min);
        if t0.is_finite() && self.dt > 0.0 {
            let k = libm::ceil(t0 / self.dt - 1e-9).max(1.0);
            self.dt = t0 / k;
        }
        self
    }

    pub fn h(&self) -> f64 {
        2.0 * self.extent / (self.n - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.extent + i as f64 * self.h()
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dt_limit(&self, c_ell: f64) -> f64 {
        CFL_MAX * self.h() / sqrt(c_ell)
    }

    /// Quadratic ramp from the inner edge of the layer to the wall, measured
    /// along the axis with the largest excess.
    pub fn sponge(&self, x: &Vec3) -> f64 {
        if self.sponge_strength == 0.0 {
            return 0.0;
        }
        let start = self.extent - self.sponge_width;
        let d = x.iter().map(|c| (c.abs() - start).max(0.0)).fold(0.0, f64::max);
        let s = d / self.sponge_width;
        self.sponge_strength * s * s
    }

    pub fn validate(&self, c_ell: f64) -> Result<(), SolverError> {
        if self.n < 5 || !(self.extent > 0.0) || !(self.dt > 0.0) {
            return Err(SolverError::InvalidGrid("need n ≥ 5, L > 0, dt > 0"));
        }
        if self.sponge_strength < 0.0 {
            return Err(SolverError::InvalidGrid("sponge strength must be nonnegative"));
        }
        let limit = self.dt_limit(c_ell);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(SolverError::Cfl { dt: self.dt, limit });
        }
        if self.sponge_width < 4.0 * self.h() || self.sponge_width >= self.extent {
            return Err(SolverError::SpongeWidth { width: self.sponge_width, min: 4.0 * self.h() });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverError {
    Cfl {
        dt: f64,
        limit: f64,
    },
    SpongeWidth {
        width: f64,
        min: f64,
    },
    InvalidGrid(&'static str),
    NonFinite {
        step: usize,
    },
    /// The fixed-point solve for the cross term did not converge.
    CrossTerm {
        step: usize,
        residual: f64,
    },
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::Cfl { dt, limit } => {
                write!(f, "dt = {dt} exceeds the stability limit {limit}")
            }
            SolverError::SpongeWidth { width, min } => {
                write!(f, "sponge width {width} must be at least {min} and below L")
            }
            SolverError::InvalidGrid(m) => write!(f, "invalid grid: {m}"),
            SolverError::NonFinite { step } => write!(f, "non-finite field at step {step}"),
            SolverError::CrossTerm { step, residual } => {
                write!(f, "cross-term solve stalled at step {step} (residual {residual:.3e})")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SolverError {}

#[inline]
fn bump_profile(d2: f64, r: f64) -> f64 {
    bump_power(d2, r, 3)
}

/// (1 − d²/r²)ᵏ₊, which is C^{k−1}.
#[inline]
fn bump_power(d2: f64, r: f64, k: u32) -> f64 {
    let s = 1.0 - d2 / (r * r);
    if s > 0.0 {
        libm::pow(s, k as f64)
    } else {
        0.0
    }
}

#[cfg(feature = "serde")]
fn default_power() -> u32 {
    3
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum InitialData {
    Zero,
    /// u = A(1 − |x−c|²/r²)ᵏ₊ with k = `power` (default 3), ∂_t u = 0.
    Bump {
        center: Vec3,
        radius: f64,
        amplitude: f64,
        #[cfg_attr(feature = "serde", serde(default = "default_power"))]
        power: u32,
    },
    /// u = φ(x₁), ∂_t u = −φ′(x₁) with φ(s) = A(1 − ((s−c)/w)²)⁴₊: moves
    /// towards +x₁ at unit speed on flat space.
    PlanePulse {
        center: f64,
        width: f64,
        amplitude: f64,
    },
}

impl InitialData {
    pub fn eval(&self, x: &Vec3) -> (f64, f64) {
        match *self {
            InitialData::Zero => (0.0, 0.0),
            InitialData::Bump { center, radius, amplitude, power } => {
                let d2 = (0..3).map(|i| (x[i] - center[i]) * (x[i] - center[i])).sum::<f64>();
                (amplitude * bump_power(d2, radius, power), 0.0)
            }
            InitialData::PlanePulse { center, width, amplitude } => {
                let (p, dp) = plane_profile(x[0] - center, width, amplitude);
                (p, -dp)
            }
        }
    }
}

/// φ(s) = A(1 − (s/w)²)⁴₊ and φ′(s).
pub fn plane_profile(s: f64, width: f64, amplitude: f64) -> (f64, f64) {
    let z = s / width;
    let q = 1.0 - z * z;
    if q <= 0.0 {
        return (0.0, 0.0);
    }
    (amplitude * q * q * q * q, -8.0 * amplitude * z * q * q * q / width)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum Forcing {
    None,
    /// f = A·(1 − |x−c|²/r²)³₊·sin²(πt/duration)·sin(ωt) for t < duration.
    Pulse {
        center: Vec3,
        radius: f64,
        amplitude: f64,
        frequency: f64,
        duration: f64,
    },
}

impl Forcing {
    pub fn is_none(&self) -> bool {
        matches!(self, Forcing::None)
    }

    pub fn eval(&self, x: &Vec3, t: f64) -> f64 {
        match *self {
            Forcing::None => 0.0,
            Forcing::Pulse { center, radius, amplitude, frequency, duration } => {
                if t >= duration {
                    return 0.0;
                }
                let d2 = (0..3).map(|i| (x[i] - center[i]) * (x[i] - center[i])).sum::<f64>();
                let env = libm::sin(core::f64::consts::PI * t / duration);
                amplitude * bump_profile(d2, radius) * env * env * libm::sin(frequency * t)
            }
        }
    }
}

/// Annulus index of ⟨x⟩: A₀ = {⟨x⟩ < 2}, A_j = {2ʲ ≤ ⟨x⟩ < 2ʲ⁺¹}.
pub fn annulus_of(jb: f64) -> usize {
    (libm::floor(libm::log2(jb)).max(0.0) as usize).min(MAX_ANNULI - 1)
}

/// Discretised coefficients. Face arrays hold gⁱⁱ at the midpoint between a
/// node and its + neighbour along axis i.
struct Operator {
    n: usize,
    h: f64,
    face: [Vec<f64>; 3],
    /// g⁰¹, g⁰², g¹² at nodes, when any is nonzero.
    off: Option<[Vec<f64>; 3]>,
    g0: Option<[Vec<f64>; 3]>,
    damp: Vec<f64>,
    sponge: Vec<f64>,
    ann: Vec<u8>,
    inv_jb: Vec<f64>,
    annuli: usize,
}

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

fn fill<F: Fn(usize, usize, usize) -> f64 + Sync + Send>(n: usize, f: F) -> Vec<f64> {
    let mut out = vec![0.0; n * n * n];
    for_each_plane(&mut out, n * n, |i, plane| {
        for j in 0..n {
            for k in 0..n {
                plane[j * n + k] = f(i, j, k);
            }
        }
    });
    out
}

impl Operator {
    fn new<M: Metric + ?Sized>(metric: &M, grid: &GridSpec) -> Self {
        let n = grid.n;
        let h = grid.h();
        let half = 0.5 * h;
        let face = [0, 1, 2].map(|ax| {
            fill(n, |i, j, k| {
                let mut x = grid.point(i, j, k);
                x[ax] += half;
                metric.sample(&x).g[ax][ax]
            })
        });
        let off = {
            let arrs = PAIRS.map(|(a, b)| fill(n, |i, j, k| metric.sample(&grid.point(i, j, k)).g[a][b]));
            arrs.iter().any(|v| v.iter().any(|&g| g != 0.0)).then_some(arrs)
        };
        let g0 = {
            let arrs = [0, 1, 2].map(|c| fill(n, |i, j, k| metric.sample(&grid.point(i, j, k)).g0[c]));
            arrs.iter().any(|v| v.iter().any(|&g| g != 0.0)).then_some(arrs)
        };
        let gain = metric.damping_gain();
        let damp = fill(n, |i, j, k| gain * metric.damping(&grid.point(i, j, k)));
        let sponge = fill(n, |i, j, k| grid.sponge(&grid.point(i, j, k)));
        let jb = fill(n, |i, j, k| {
            let x = grid.point(i, j, k);
            japanese(sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]))
        });
        let ann: Vec<u8> = jb.iter().map(|&b| annulus_of(b) as u8).collect();
        let annuli = ann.iter().map(|&a| a as usize + 1).max().unwrap_or(1);
        let inv_jb = jb.iter().map(|&b| 1.0 / b).collect();
        Self { n, h, face, off, g0, damp, sponge, ann, inv_jb, annuli }
    }

    #[inline]
    fn strides(&self) -> [usize; 3] {
        [self.n * self.n, self.n, 1]
    }

    /// (Lu) at interior nodes, 0 on the boundary.
    fn apply_l(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        let s = self.strides();
        let ih2 = 1.0 / (self.h * self.h);
        let iq = 0.25 * ih2;
        for_each_plane(out, n * n, |i, plane| {
            plane.fill(0.0);
            if i == 0 || i == n - 1 {
                return;
            }
            for j in 1..n - 1 {
                for k in 1..n - 1 {
                    let m = (i * n + j) * n + k;
                    let c = u[m];
                    let mut acc = 0.0;
                    for ax in 0..3 {
                        let st = s[ax];
                        acc += self.face[ax][m] * (u[m + st] - c) - self.face[ax][m - st] * (c - u[m - st]);
                    }
                    acc *= ih2;
                    if let Some(off) = &self.off {
                        for (p, &(a, b)) in PAIRS.iter().enumerate() {
                            let (sa, sb) = (s[a], s[b]);
                            let g = &off[p];
                            // D⁰_a(g D⁰_b u) + D⁰_b(g D⁰_a u)
                            let t1 = g[m + sa] * (u[m + sa + sb] - u[m + sa - sb])
                                - g[m - sa] * (u[m - sa + sb] - u[m - sa - sb]);
                            let t2 = g[m + sb] * (u[m + sb + sa] - u[m + sb - sa])
                                - g[m - sb] * (u[m - sb + sa] - u[m - sb - sa]);
                            acc += iq * (t1 + t2);
                        }
                    }
                    plane[j * n + k] = acc;
                }
            }
        });
    }

    /// (Kv) = g⁰·D⁰v + D⁰·(g⁰v) at interior nodes.
    fn apply_k(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        let s = self.strides();
        let i2h = 0.5 / self.h;
        let g0 = self.g0.as_ref().expect("cross term present");
        for_each_plane(out, n * n, |i, plane| {
            plane.fill(0.0);
            if i == 0 || i == n - 1 {
                return;
            }
            for j in 1..n - 1 {
                for k in 1..n - 1 {
                    let m = (i * n + j) * n + k;
                    let mut acc = 0.0;
                    for ax in 0..3 {
                        let st = s[ax];
                        let g = &g0[ax];
                        acc += g[m] * (v[m + st] - v[m - st]) + (g[m + st] * v[m + st] - g[m - st] * v[m - st]);
                    }
                    plane[j * n + k] = acc * i2h;
                }
            }
        });
    }

    #[inline]
    fn interior(&self, m: usize) -> bool {
        let n = self.n;
        let (i, j, k) = (m / (n * n), (m / n) % n, m % n);
        i > 0 && j > 0 && k > 0 && i < n - 1 && j < n - 1 && k < n - 1
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Partial {
    v_bar: f64,
    pot: f64,
    v_old: f64,
    lu_v_old: f64,
    damp: f64,
    sponge: f64,
    force: f64,
    du: f64,
    f2: f64,
    ann: [[f64; 4]; MAX_ANNULI],
}

impl Partial {
    fn add(&self, o: &Partial) -> Partial {
        let mut r = Partial {
            v_bar: self.v_bar + o.v_bar,
            pot: self.pot + o.pot,
            v_old: self.v_old + o.v_old,
            lu_v_old: self.lu_v_old + o.lu_v_old,
            damp: self.damp + o.damp,
            sponge: self.sponge + o.sponge,
            force: self.force + o.force,
            du: self.du + o.du,
            f2: self.f2 + o.f2,
            ann: self.ann,
        };
        for a in 0..MAX_ANNULI {
            for c in 0..4 {
                r.ann[a][c] += o.ann[a][c];
            }
        }
        r
    }
}

fn reduce(parts: &[Partial]) -> Partial {
    match parts.len() {
        0 => Partial::default(),
        1 => parts[0],
        len => reduce(&parts[..len / 2]).add(&reduce(&parts[len / 2..])),
    }
}

/// Diagnostics at t_n. Integrals use the midpoint rule (weight h³).
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRecord {
    pub t: f64,
    /// E^n = ∫|v̄|² + gⁱʲ∂_iu∂_ju with v̄ the mean of the adjacent half steps.
    pub energy: f64,
    /// M^{n−½}, the exactly dissipated scheme energy.
    pub scheme_energy: f64,
    /// 2∫a|v̄|².
    pub physical_dissipation: f64,
    /// 2∫σ_sponge|v̄|².
    pub sponge_dissipation: f64,
    /// 2∫f v̄.
    pub forcing_power: f64,
    /// ‖∂u‖²_{L²} = ∫|v̄|² + |∇u|².
    pub du_sq: f64,
    pub f_sq: f64,
    /// Per annulus: ∫⟨x⟩⁻¹|∂u|², ∫⟨x⟩⁻³u², ∫⟨x⟩⁻¹u², ∫⟨x⟩f².
    pub annuli: Vec<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub ut: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WaveHistory {
    pub grid: GridSpec,
    pub data: InitialData,
    pub forcing: Forcing,
    /// ‖∂u(0)‖_{L²} from the exact initial data.
    pub initial_du: f64,
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    /// Share of each annulus' volume inside the cube.
    pub annulus_coverage: Vec<f64>,
}

impl WaveHistory {
    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.t).collect()
    }
}

fn gradient_sq(u: &[f64], n: usize, m: usize, ih2: f64) -> f64 {
    let s = [n * n, n, 1];
    let c = u[m];
    let mut g = 0.0;
    for st in s {
        let p = u[m + st] - c;
        let q = c - u[m - st];
        g += 0.5 * (p * p + q * q);
    }
    g * ih2
}

/// Evolves to `t_end`, keeping full fields at the steps nearest `snapshot_times`.
pub fn evolve<M: Metric + ?Sized>(
    metric: &M,
    grid: &GridSpec,
    data: &InitialData,
    forcing: &Forcing,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<WaveHistory, SolverError> {
    let (_, c_ell) = metric.ellipticity_bounds();
    grid.validate(c_ell)?;
    if !(t_end >= 0.0) {
        return Err(SolverError::InvalidGrid("final time must be nonnegative"));
    }
    let op = Operator::new(metric, grid);
    let n = grid.n;
    let len = grid.len();
    let dt = grid.dt;
    let h3 = grid.h() * grid.h() * grid.h();
    let ih2 = 1.0 / (grid.h() * grid.h());
    let steps = libm::ceil(t_end / dt - 1e-9).max(0.0) as usize;

    let init: Vec<(f64, f64)> = map_indexed(len, |m| {
        if !op.interior(m) {
            return (0.0, 0.0);
        }
        let (i, j, k) = (m / (n * n), (m / n) % n, m % n);
        data.eval(&grid.point(i, j, k))
    });
    let mut u: Vec<f64> = init.iter().map(|p| p.0).collect();
    let ut0: Vec<f64> = init.iter().map(|p| p.1).collect();
    drop(init);

    let mut lu = vec![0.0; len];
    let mut kv = vec![0.0; len];
    let mut f = vec![0.0; len];
    let force_at = |t: f64, f: &mut [f64]| {
        if forcing.is_none() {
            return;
        }
        for_each_plane(f, n * n, |i, plane| {
            for j in 0..n {
                for k in 0..n {
                    let m = (i * n + j) * n + k;
                    plane[j * n + k] = if op.interior(m) { forcing.eval(&grid.point(i, j, k), t) } else { 0.0 };
                }
            }
        });
    };

    let initial_du = {
        let parts = map_indexed(n, |i| {
            let mut acc = 0.0;
            if i == 0 || i == n - 1 {
                return acc;
            }
            for j in 1..n - 1 {
                for k in 1..n - 1 {
                    let m = (i * n + j) * n + k;
                    acc += ut0[m] * ut0[m] + gradient_sq(&u, n, m, ih2);
                }
            }
            acc
        });
        sqrt(pairwise_sum(&parts) * h3)
    };

    // v^{−½} = v(0) − dt/2·u_tt(0)
    op.apply_l(&u, &mut lu);
    force_at(0.0, &mut f);
    if op.g0.is_some() {
        op.apply_k(&ut0, &mut kv);
    }
    let mut v = vec![0.0; len];
    for m in 0..len {
        if op.interior(m) {
            let a = op.damp[m] + op.sponge[m];
            let utt = kv[m] + lu[m] - a * ut0[m] + f[m];
            v[m] = ut0[m] - 0.5 * dt * utt;
        }
    }
    drop(ut0);

    let mut vn = vec![0.0; len];
    let mut kv_new = vec![0.0; len];
    let mut records = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();
    let snap_steps: Vec<usize> =
        snapshot_times.iter().map(|&t| (libm::round(t / dt).max(0.0) as usize).min(steps)).collect();

    for step in 0..=steps {
        let t = step as f64 * dt;
        if step > 0 {
            op.apply_l(&u, &mut lu);
            force_at(t, &mut f);
        }
        // v^{n+½} from (1 + dtA/2)v⁺ − dt/2·Kv⁺ = (1 − dtA/2)v⁻ + dt/2·Kv⁻ + dt(Lu + f)
        let explicit = |m: usize, kv_sum: f64| {
            let a = op.damp[m] + op.sponge[m];
            ((1.0 - 0.5 * dt * a) * v[m] + dt * (lu[m] + f[m]) + 0.5 * dt * kv_sum) / (1.0 + 0.5 * dt * a)
        };
        if op.g0.is_some() {
            op.apply_k(&v, &mut kv);
            for_each_plane(&mut vn, n * n, |i, plane| {
                for r in 0..n * n {
                    let m = i * n * n + r;
                    plane[r] = if op.interior(m) { explicit(m, 2.0 * kv[m]) } else { 0.0 };
                }
            });
            let mut converged = false;
            let mut resid = f64::INFINITY;
            for _ in 0..K_MAX_ITER {
                op.apply_k(&vn, &mut kv_new);
                let diffs = map_indexed(n, |i| {
                    let mut d: f64 = 0.0;
                    let mut s: f64 = 0.0;
                    for r in 0..n * n {
                        let m = i * n * n + r;
                        if op.interior(m) {
                            let nv = explicit(m, kv[m] + kv_new[m]);
                            d = d.max((nv - vn[m]).abs());
                            s = s.max(nv.abs());
                        }
                    }
                    (d, s)
                });
                for_each_plane(&mut vn, n * n, |i, plane| {
                    for r in 0..n * n {
                        let m = i * n * n + r;
                        if op.interior(m) {
                            plane[r] = explicit(m, kv[m] + kv_new[m]);
                        }
                    }
                });
                let d = diffs.iter().map(|p| p.0).fold(0.0, f64::max);
                let s = diffs.iter().map(|p| p.1).fold(0.0, f64::max);
                resid = d / s.max(f64::MIN_POSITIVE);
                if d <= K_TOL * s || s == 0.0 {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(SolverError::CrossTerm { step, residual: resid });
            }
        } else {
            for_each_plane(&mut vn, n * n, |i, plane| {
                for r in 0..n * n {
                    let m = i * n * n + r;
                    plane[r] = if op.interior(m) { explicit(m, 0.0) } else { 0.0 };
                }
            });
        }

        let parts = map_indexed(n, |i| {
            let mut p = Partial::default();
            if i == 0 || i == n - 1 {
                return p;
            }
            for j in 1..n - 1 {
                for k in 1..n - 1 {
                    let m = (i * n + j) * n + k;
                    let vb = 0.5 * (v[m] + vn[m]);
                    let vb2 = vb * vb;
                    let g2 = gradient_sq(&u, n, m, ih2);
                    let uu = u[m] * u[m];
                    p.v_bar += vb2;
                    p.pot -= lu[m] * u[m];
                    p.v_old += v[m] * v[m];
                    p.lu_v_old -= lu[m] * v[m];
                    p.damp += op.damp[m] * vb2;
                    p.sponge += op.sponge[m] * vb2;
                    p.force += f[m] * vb;
                    p.du += vb2 + g2;
                    p.f2 += f[m] * f[m];
                    let w = op.inv_jb[m];
                    let a = &mut p.ann[op.ann[m] as usize];
                    a[0] += w * (vb2 + g2);
                    a[1] += w * w * w * uu;
                    a[2] += w * uu;
                    a[3] += f[m] * f[m] / w;
                }
            }
            p
        });
        let s = reduce(&parts);
        let rec = StepRecord {
            t,
            energy: h3 * (s.v_bar + s.pot),
            scheme_energy: h3 * (s.v_old + s.pot - dt * s.lu_v_old),
            physical_dissipation: 2.0 * h3 * s.damp,
            sponge_dissipation: 2.0 * h3 * s.sponge,
            forcing_power: 2.0 * h3 * s.force,
            du_sq: h3 * s.du,
            f_sq: h3 * s.f2,
            annuli: s.ann[..op.annuli].iter().map(|a| a.map(|c| c * h3)).collect(),
        };
        if !rec.energy.is_finite() || !rec.scheme_energy.is_finite() {
            return Err(SolverError::NonFinite { step });
        }
        records.push(rec);
        if snap_steps.contains(&step) {
            let ut: Vec<f64> = (0..len).map(|m| 0.5 * (v[m] + vn[m])).collect();
            snapshots.push(Snapshot { t, u: u.clone(), ut });
        }
        if step < steps {
            for_each_plane(&mut u, n * n, |i, plane| {
                for r in 0..n * n {
                    plane[r] += dt * vn[i * n * n + r];
                }
            });
            core::mem::swap(&mut v, &mut vn);
        }
    }

    Ok(WaveHistory {
        grid: *grid,
        data: *data,
        forcing: *forcing,
        initial_du,
        steps: records,
        snapshots,
        annulus_coverage: coverage(grid, &op),
    })
}

fn coverage(grid: &GridSpec, op: &Operator) -> Vec<f64> {
    let h3 = grid.h() * grid.h() * grid.h();
    let mut counts = vec![0usize; op.annuli];
    for &a in &op.ann {
        counts[a as usize] += 1;
    }
    (0..op.annuli)
        .map(|j| {
            // |x| range of {2ʲ ≤ ⟨x⟩ < 2ʲ⁺¹}
            let lo = if j == 0 { 0.0 } else { sqrt(libm::ldexp(1.0, 2 * j as i32) - 1.0) };
            let hi = sqrt(libm::ldexp(1.0, 2 * (j as i32 + 1)) - 1.0);
            let vol = 4.0 / 3.0 * core::f64::consts::PI * (hi * hi * hi - lo * lo * lo);
            (counts[j] as f64 * h3 / vol).min(1.0)
        })
        .collect()
}

/// E = ∫|∂_t u|² + gⁱʲ∂_iu∂_ju for one snapshot (grid-shaped arrays).
pub fn energy<M: Metric + ?Sized>(metric: &M, grid: &GridSpec, u: &[f64], ut: &[f64]) -> f64 {
    let op = Operator::new(metric, grid);
    let mut lu = vec![0.0; grid.len()];
    op.apply_l(u, &mut lu);
    let h3 = grid.h() * grid.h() * grid.h();
    let n = grid.n;
    let parts = map_indexed(n, |i| {
        let mut acc = 0.0;
        for r in 0..n * n {
            let m = i * n * n + r;
            if op.interior(m) {
                acc += ut[m] * ut[m] - lu[m] * u[m];
            }
        }
        acc
    });
    pairwise_sum(&parts) * h3
}

/// ∫|∂_t u|² + |∇u|² for one snapshot, with the same gradient stencil as the
/// step diagnostics.
pub fn du_norm_sq(grid: &GridSpec, u: &[f64], ut: &[f64]) -> f64 {
    let n = grid.n;
    let ih2 = 1.0 / (grid.h() * grid.h());
    let parts = map_indexed(n, |i| {
        let mut acc = 0.0;
        if i == 0 || i == n - 1 {
            return acc;
        }
        for j in 1..n - 1 {
            for k in 1..n - 1 {
                let m = (i * n + j) * n + k;
                acc += ut[m] * ut[m] + gradient_sq(u, n, m, ih2);
            }
        }
        acc
    });
    pairwise_sum(&parts) * grid.h() * grid.h() * grid.h()
}

/// max_n |(E^{n+1} − E^{n−1})/(2dt) − (2∫fv̄ − 2∫(a + sponge)|v̄|²)| / max E.
pub fn dissipation_residual(history: &WaveHistory) -> f64 {
    let s = &history.steps;
    if s.len() < 3 {
        return 0.0;
    }
    let dt = history.grid.dt;
    let emax = s.iter().map(|r| r.energy.abs()).fold(0.0, f64::max);
    if emax == 0.0 {
        return 0.0;
    }
    (1..s.len() - 1)
        .map(|n| {
            let de = (s[n + 1].energy - s[n - 1].energy) / (2.0 * dt);
            let rhs = s[n].forcing_power - s[n].physical_dissipation - s[n].sponge_dissipation;
            (de - rhs).abs()
        })
        .fold(0.0, f64::max)
        / emax
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MonotoneReport {
    /// Largest M^{k+1} − M^k relative to M^0 (nonpositive when monotone).
    pub max_relative_increase: f64,
    pub violations: usize,
    /// Energy removed by the sponge, ∫ 2∫σ|v̄|² dt.
    pub sponge_loss: f64,
    /// Energy removed by the physical damping.
    pub physical_loss: f64,
}

/// Checks M non-increasing between consecutive records; increases below
/// `rel_tol`·M⁰ count as rounding.
pub fn scheme_energy_monotone(history: &WaveHistory, rel_tol: f64) -> MonotoneReport {
    let s = &history.steps;
    let dt = history.grid.dt;
    let m0 = s.first().map_or(0.0, |r| r.scheme_energy.abs());
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for w in s.windows(2) {
        let d = (w[1].scheme_energy - w[0].scheme_energy) / m0.max(f64::MIN_POSITIVE);
        worst = worst.max(d);
        if d > rel_tol {
            violations += 1;
        }
    }
    MonotoneReport {
        max_relative_increase: if s.len() < 2 { 0.0 } else { worst },
        violations,
        sponge_loss: trapezoid(s.iter().map(|r| r.sponge_dissipation), s.len(), dt),
        physical_loss: trapezoid(s.iter().map(|r| r.physical_dissipation), s.len(), dt),
    }
}

fn trapezoid<I: Iterator<Item = f64>>(values: I, len: usize, dt: f64) -> f64 {
    let mut acc = 0.0;
    for (i, v) in values.enumerate() {
        let w = if i == 0 || i + 1 == len { 0.5 } else { 1.0 };
        acc += w * v;
    }
    acc * dt
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LEReport {
    pub t_end: f64,
    /// ‖⟨x⟩^{−½}u‖_{L²L²(A_j)} per annulus.
    pub per_annulus: Vec<f64>,
    pub le: f64,
    /// ‖∂u‖_{LE} + ‖⟨x⟩⁻¹u‖_{LE}.
    pub le1: f64,
    pub du_le: f64,
    pub u_le: f64,
    pub le_star_f: f64,
    pub l1l2_f: f64,
    /// Upper bound for the sum-space norm: min(LE*, L¹L²).
    pub sum_norm_f: f64,
    /// sup_t ‖∂u(t)‖_{L²}.
    pub sup_du: f64,
    pub energy_trace: Vec<(f64, f64)>,
    pub dissipation_residual: f64,
    pub annulus_coverage: Vec<f64>,
}

/// Norms over [0, t_end]; time integrals by the trapezoid rule over steps.
pub fn le_norms(history: &WaveHistory, t_end: f64) -> LEReport {
    let dt = history.grid.dt;
    let s: Vec<&StepRecord> = history.steps.iter().take_while(|r| r.t <= t_end + 0.5 * dt).collect();
    let na = s.first().map_or(0, |r| r.annuli.len());
    let len = s.len();
    let integral = |j: usize, c: usize| trapezoid(s.iter().map(|r| r.annuli[j][c]), len, dt);
    let per_annulus: Vec<f64> = (0..na).map(|j| sqrt(integral(j, 2))).collect();
    let du_le = (0..na).map(|j| sqrt(integral(j, 0))).fold(0.0, f64::max);
    let u_le = (0..na).map(|j| sqrt(integral(j, 1))).fold(0.0, f64::max);
    let le_star_f = (0..na).map(|j| sqrt(integral(j, 3))).sum::<f64>();
    let l1l2_f = trapezoid(s.iter().map(|r| sqrt(r.f_sq)), len, dt);
    let sub = WaveHistory {
        grid: history.grid,
        data: history.data,
        forcing: history.forcing,
        initial_du: history.initial_du,
        steps: s.iter().map(|r| (*r).clone()).collect(),
        snapshots: Vec::new(),
        annulus_coverage: Vec::new(),
    };
    LEReport {
        t_end: s.last().map_or(0.0, |r| r.t),
        le: per_annulus.iter().cloned().fold(0.0, f64::max),
        per_annulus,
        le1: du_le + u_le,
        du_le,
        u_le,
        le_star_f,
        l1l2_f,
        sum_norm_f: le_star_f.min(l1l2_f),
        sup_du: s.iter().map(|r| sqrt(r.du_sq)).fold(0.0, f64::max),
        energy_trace: s.iter().map(|r| (r.t, r.energy)).collect(),
        dissipation_residual: dissipation_residual(&sub),
        annulus_coverage: history.annulus_coverage.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LedRow {
    pub t: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub rho: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LedTable {
    pub rows: Vec<LedRow>,
    pub history: WaveHistory,
}

impl LedTable {
    pub fn rho_at(&self, t: f64) -> Option<f64> {
        let dt = self.history.grid.dt;
        self.rows.iter().find(|r| (r.t - t).abs() <= 0.5 * dt + 1e-12).map(|r| r.rho)
    }
}

/// ρ(T) = (‖u‖_{LE¹[0,T]} + ‖∂u‖_{L^∞L²[0,T]}) / (‖∂u(0)‖_{L²} + ‖f‖_{LE*+L¹L²[0,T]}).
pub fn led_experiment<M: Metric + ?Sized>(
    metric: &M,
    grid: &GridSpec,
    data: &InitialData,
    forcing: &Forcing,
    t_list: &[f64],
) -> Result<LedTable, SolverError> {
    let t_max = t_list.iter().cloned().fold(0.0, f64::max);
    let history = evolve(metric, grid, data, forcing, t_max, &[])?;
    let rows = t_list
        .iter()
        .map(|&t| {
            let r = le_norms(&history, t);
            let numerator = r.le1 + r.sup_du;
            let denominator = history.initial_du + r.sum_norm_f;
            let energy = r.energy_trace.last().map_or(0.0, |e| e.1);
            LedRow { t: r.t_end, numerator, denominator, rho: numerator / denominator, energy }
        })
        .collect();
    Ok(LedTable { rows, history })
}
