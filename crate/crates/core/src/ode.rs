//! Dormand–Prince 5(4) with Hairer's continuous extension, and classical RK4.

use core::fmt;

use crate::math::sqrt;

/// Autonomous system y' = F(y).
pub trait System<const N: usize> {
    fn rhs(&self, y: &[f64; N]) -> [f64; N];
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest admissible |h| relative to max(1, |s|).
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h_min: 1e-13, h_max: f64::INFINITY, max_steps: 2_000_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OdeError {
    StepUnderflow { s: f64, h: f64 },
    TooManySteps { s: f64 },
    NonFinite { s: f64 },
}

impl fmt::Display for OdeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OdeError::StepUnderflow { s, h } => {
                write!(f, "step size underflow (h = {h:.3e}) at s = {s}")
            }
            OdeError::TooManySteps { s } => write!(f, "step budget exhausted at s = {s}"),
            OdeError::NonFinite { s } => write!(f, "non-finite state at s = {s}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OdeError {}

/// One accepted step with its order-4 interpolant.
#[derive(Clone, Copy, Debug)]
pub struct DenseStep<const N: usize> {
    pub s0: f64,
    pub h: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    r: [[f64; N]; 3],
}

impl<const N: usize> DenseStep<N> {
    pub fn s1(&self) -> f64 {
        self.s0 + self.h
    }

    /// Interpolated state at `s` within the step.
    pub fn eval(&self, s: f64) -> [f64; N] {
        let th = (s - self.s0) / self.h;
        let th1 = 1.0 - th;
        let mut out = [0.0; N];
        for i in 0..N {
            let d = self.y1[i] - self.y0[i];
            out[i] = self.y0[i] + th * (d + th1 * (self.r[0][i] + th * (self.r[1][i] + th1 * self.r[2][i])));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug)]
pub struct Outcome<const N: usize> {
    pub s: f64,
    pub y: [f64; N],
    pub steps: usize,
    /// True when the callback ended the integration before `s_end`.
    pub stopped: bool,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[inline]
fn lin<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        if *c != 0.0 {
            for i in 0..N {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

fn initial_step<S: System<N>, const N: usize>(sys: &S, y0: &[f64; N], f0: &[f64; N], opts: &OdeOptions) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        let sk = opts.atol + opts.rtol * y0[i].abs();
        d0 += (y0[i] / sk) * (y0[i] / sk);
        d1 += (f0[i] / sk) * (f0[i] / sk);
    }
    d0 = sqrt(d0 / N as f64);
    d1 = sqrt(d1 / N as f64);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = lin(y0, h0, &[(1.0, f0)]);
    let f1 = sys.rhs(&y1);
    let mut d2 = 0.0;
    for i in 0..N {
        let sk = opts.atol + opts.rtol * y0[i].abs();
        d2 += ((f1[i] - f0[i]) / sk) * ((f1[i] - f0[i]) / sk);
    }
    d2 = sqrt(d2 / N as f64) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { libm::pow(0.01 / d1.max(d2), 0.2) };
    (100.0 * h0).min(h1).min(opts.h_max)
}

/// Integrates from `s0` to `s_end` (either direction). `on_step` sees every
/// accepted step and may stop the run early.
pub fn dopri5<S, F, const N: usize>(
    sys: &S,
    s0: f64,
    y0: [f64; N],
    s_end: f64,
    opts: &OdeOptions,
    mut on_step: F,
) -> Result<Outcome<N>, OdeError>
where
    S: System<N>,
    F: FnMut(&DenseStep<N>) -> Control,
{
    let dir = if s_end >= s0 { 1.0 } else { -1.0 };
    let mut s = s0;
    let mut y = y0;
    let mut k1 = sys.rhs(&y);
    if s_end == s0 {
        return Ok(Outcome { s, y, steps: 0, stopped: false });
    }
    let mut h = dir * initial_step(sys, &y, &k1, opts).min((s_end - s0).abs());
    let mut steps = 0usize;
    let mut reject = false;
    // Steps ending this close to s_end are stretched onto it, so no
    // rounding-sized sliver step is left over.
    let tiny = 1e-12 * s_end.abs().max(1.0);
    loop {
        if steps >= opts.max_steps {
            return Err(OdeError::TooManySteps { s });
        }
        if (s + h - s_end) * dir > -tiny {
            h = s_end - s;
        }
        let k2 = sys.rhs(&lin(&y, h, &[(A21, &k1)]));
        let k3 = sys.rhs(&lin(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = sys.rhs(&lin(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = sys.rhs(&lin(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = sys.rhs(&lin(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y1 = lin(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = sys.rhs(&y1);
        let mut err = 0.0;
        let mut finite = true;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = opts.atol + opts.rtol * y[i].abs().max(y1[i].abs());
            err += (e / sk) * (e / sk);
            finite &= y1[i].is_finite();
        }
        err = sqrt(err / N as f64);
        if !finite || !err.is_finite() {
            if h.abs() < opts.h_min * s.abs().max(1.0) {
                return Err(OdeError::NonFinite { s });
            }
            h *= 0.2;
            reject = true;
            continue;
        }
        if err <= 1.0 {
            let mut r = [[0.0; N]; 3];
            for i in 0..N {
                let d = y1[i] - y[i];
                let r3 = h * k1[i] - d;
                r[0][i] = r3;
                r[1][i] = d - h * k7[i] - r3;
                r[2][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let step = DenseStep { s0: s, h, y0: y, y1, r };
            let last = (s + h - s_end) * dir >= -tiny;
            s = if last { s_end } else { s + h };
            y = y1;
            k1 = k7;
            steps += 1;
            if on_step(&step) == Control::Stop {
                return Ok(Outcome { s, y, steps, stopped: true });
            }
            if last {
                return Ok(Outcome { s, y, steps, stopped: false });
            }
            let mut fac = 0.9 * libm::pow(err.max(1e-10), -0.2);
            fac = fac.clamp(0.2, if reject { 1.0 } else { 5.0 });
            h = (h * fac).abs().min(opts.h_max) * dir;
            reject = false;
        } else {
            let fac = (0.9 * libm::pow(err, -0.2)).max(0.2);
            h *= fac;
            reject = true;
        }
        if h.abs() < opts.h_min * s.abs().max(1.0) {
            return Err(OdeError::StepUnderflow { s, h });
        }
    }
}

/// One classical fourth-order Runge–Kutta step.
#[inline]
pub fn rk4_step<S: System<N>, const N: usize>(sys: &S, y: &[f64; N], h: f64) -> [f64; N] {
    let k1 = sys.rhs(y);
    let k2 = sys.rhs(&lin(y, 0.5 * h, &[(1.0, &k1)]));
    let k3 = sys.rhs(&lin(y, 0.5 * h, &[(1.0, &k2)]));
    let k4 = sys.rhs(&lin(y, h, &[(1.0, &k3)]));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    struct Oscillator;
    impl System<2> for Oscillator {
        fn rhs(&self, y: &[f64; 2]) -> [f64; 2] {
            [y[1], -y[0]]
        }
    }

    #[test]
    fn oscillator_accuracy_forward_and_backward() {
        let opts = OdeOptions::default();
        for end in [20.0, -20.0] {
            let out = dopri5(&Oscillator, 0.0, [1.0, 0.0], end, &opts, |_| Control::Continue).unwrap();
            assert_eq!(out.s, end);
            assert!((out.y[0] - libm::cos(end)).abs() < 1e-9);
            assert!((out.y[1] + libm::sin(end)).abs() < 1e-9);
        }
    }

    #[test]
    fn dense_output_is_accurate_inside_steps() {
        let opts = OdeOptions { rtol: 1e-10, atol: 1e-12, ..OdeOptions::default() };
        let mut worst: f64 = 0.0;
        dopri5(&Oscillator, 0.0, [1.0, 0.0], 10.0, &opts, |st| {
            for j in 1..4 {
                let s = st.s0 + st.h * j as f64 / 4.0;
                let y = st.eval(s);
                worst = worst.max((y[0] - libm::cos(s)).abs());
            }
            Control::Continue
        })
        .unwrap();
        assert!(worst < 1e-8, "dense error {worst}");
    }

    #[test]
    fn no_sliver_step_at_the_end() {
        // 3.76 after an odd start leaves a rounding-sized remainder unless
        // the last step is stretched.
        for (s0, s1) in [(0.0, 3.76), (0.1, 3.86), (0.0, -3.76)] {
            let mut min_h = f64::INFINITY;
            let out = dopri5(&Oscillator, s0, [1.0, 0.0], s1, &OdeOptions::default(), |st| {
                min_h = min_h.min(st.h.abs());
                Control::Continue
            })
            .unwrap();
            assert_eq!(out.s, s1);
            assert!(min_h > 1e-6, "sliver step {min_h:e}");
        }
    }

    #[test]
    fn callback_can_stop() {
        let mut seen = Vec::new();
        let out = dopri5(&Oscillator, 0.0, [1.0, 0.0], 100.0, &OdeOptions::default(), |st| {
            seen.push(st.s1());
            if st.s1() > 1.0 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert!(out.stopped);
        assert!(out.s > 1.0 && out.s < 100.0);
    }

    #[test]
    fn rk4_fourth_order() {
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let mut y = [1.0, 0.0];
            for _ in 0..n {
                y = rk4_step(&Oscillator, &y, h);
            }
            (y[0] - libm::cos(1.0)).abs()
        };
        let ratio = err(20) / err(40);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    struct Blowup;
    impl System<1> for Blowup {
        fn rhs(&self, y: &[f64; 1]) -> [f64; 1] {
            [y[0] * y[0]]
        }
    }

    #[test]
    fn finite_time_blowup_reports_failure() {
        let r = dopri5(&Blowup, 0.0, [1.0], 2.0, &OdeOptions::default(), |_| Control::Continue);
        assert!(r.is_err());
    }
}
