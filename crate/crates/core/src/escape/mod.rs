//! Escape-function symbols and the sampled check of the positive-commutator
//! inequality H_p q + 2γτaq + mp ≳ ⟨x⟩⁻²(τ² + |ξ|²) on |ξ| ≥ λ.

pub mod assembly;
pub mod bootstrap;
pub mod symbols;
pub mod verify;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use assembly::{assemble_q, build_correction, Coefficients, EscapeAssembly};
pub use bootstrap::{build_bootstrap, exterior_levels, with_floor, BootstrapWeight};
pub use symbols::{
    build_q_in, build_q_out, build_q_semibounded, zero_q_in, CoverOptions, CoverSeed, Exterior, NonTrapped, PsiOptions,
    SemiBounded,
};
pub use verify::{
    tune, verify_escape_inequality, Attempt, Offender, PositivityReport, SampleCache, SampleSpec, TuneGrid, TuneOutcome,
};

use crate::flow::GccRow;
use crate::halfwave::{b_scale_bounds, BScale, Sign};
use crate::metric::{AfEstimate, Metric};

#[derive(Clone, Debug, PartialEq)]
pub enum EscapeError {
    /// A trapped seed never met the damping within the horizon.
    GccViolated {
        seed: usize,
        sign: Sign,
    },
    /// A ray launched in supp ψ was still inside at the quadrature cap.
    Lingering {
        sign: Sign,
        x: [f64; 3],
        xi: [f64; 3],
        t_cap: f64,
    },
    /// The cover does not dominate the flow derivative on its own region.
    CoverInvalid {
        sign: Sign,
        margin: f64,
    },
    /// No tuning configuration passed.
    Exhausted {
        attempts: usize,
        best_c0: f64,
    },
    InvalidArgument(String),
}

impl fmt::Display for EscapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EscapeError::GccViolated { seed, sign } => {
                write!(f, "trapped seed {seed} ({}) never meets the damping", sign.as_str())
            }
            EscapeError::Lingering { sign, x, xi, t_cap } => {
                write!(f, "ray ({}) from x={x:?}, xi={xi:?} lingers in supp psi past s={t_cap}", sign.as_str())
            }
            EscapeError::CoverInvalid { sign, margin } => {
                write!(f, "cover ({}) fails its flow check, margin {margin:.3e}", sign.as_str())
            }
            EscapeError::Exhausted { attempts, best_c0 } => {
                write!(f, "no configuration passed after {attempts} attempts (best floor {best_c0:.3e})")
            }
            EscapeError::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EscapeError {}

#[inline]
pub(crate) fn idx(sign: Sign) -> usize {
    match sign {
        Sign::Plus => 0,
        Sign::Minus => 1,
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EscapeOptions {
    /// Radius R of the interior region.
    pub r: f64,
    pub cover: CoverOptions,
    pub psi: PsiOptions,
    /// α_d as a fraction of the damping peak.
    pub damping_alpha_fraction: f64,
    /// Summable floor added to the exterior levels c_j.
    pub c_floor: f64,
    pub bscale_samples: usize,
    /// Samples for the cover's own flow check.
    pub cover_validation_samples: usize,
    pub seed: u64,
}

impl Default for EscapeOptions {
    fn default() -> Self {
        Self {
            r: 16.0,
            cover: CoverOptions { radius: 0.25, ds: 0.05, horizon: 500.0, damping_alpha: 0.0, a_threshold: 0.0 },
            psi: PsiOptions::default(),
            damping_alpha_fraction: 0.05,
            c_floor: 0.02,
            bscale_samples: 20_000,
            cover_validation_samples: 256,
            seed: 0,
        }
    }
}

/// Everything that does not depend on (λ, σ, γ, ε).
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Symbols {
    pub r: f64,
    pub q1: [SemiBounded; 2],
    pub q_in: [NonTrapped; 2],
    pub q_out: [Exterior; 2],
    pub bscale: BScale,
    /// Exterior levels c_j (floored) fed to the bootstrap weight.
    pub levels: Vec<f64>,
    pub delta: f64,
    /// min of H_{p±}q₁ + C±a over the covered region, when a cover exists.
    pub cover_margin: [Option<f64>; 2],
}

impl Symbols {
    pub fn weight(&self, sigma: f64) -> BootstrapWeight {
        build_bootstrap(&self.levels, self.delta, sigma).normalized_at(self.r)
    }
}

/// Builds q₁±, q_in±, q_out± from a GCC audit and an AF estimate.
pub fn build_symbols<M: Metric + ?Sized>(
    metric: &M,
    rows: &[GccRow],
    af: &AfEstimate,
    opts: &EscapeOptions,
) -> Result<Symbols, EscapeError> {
    if !(opts.r > 0.0) || opts.r < af.r0 {
        return Err(EscapeError::InvalidArgument(alloc::format!("R = {} must be at least r0 = {}", opts.r, af.r0)));
    }
    let peak = metric.damping_peak();
    let alpha_d = opts.damping_alpha_fraction * peak;
    let mut cover_opts = opts.cover;
    cover_opts.damping_alpha = alpha_d;
    if cover_opts.a_threshold <= 0.0 {
        cover_opts.a_threshold = alpha_d;
    }
    let bscale = b_scale_bounds(metric, 8.0 * opts.r, opts.bscale_samples, opts.seed);
    let mut q1 = Vec::with_capacity(2);
    let mut q_in = Vec::with_capacity(2);
    let mut margin = [None, None];
    for sign in Sign::BOTH {
        let cover = build_q_semibounded(metric, sign, rows, &cover_opts)?;
        if let Some(m) =
            cover.validate(metric, opts.cover_validation_samples, metric.damping_support_radius(), opts.seed)
        {
            if !(m > 0.0) {
                return Err(EscapeError::CoverInvalid { sign, margin: m });
            }
            margin[idx(sign)] = Some(m);
        }
        q_in.push(build_q_in(metric, sign, opts.r, &bscale, &cover, alpha_d, &opts.psi)?);
        q1.push(cover);
    }
    let levels = with_floor(&exterior_levels(&af.measured, af.r0), opts.c_floor, af.delta);
    let [q1p, q1m]: [SemiBounded; 2] = q1.try_into().map_err(|_| EscapeError::InvalidArgument("sign count".into()))?;
    let [qip, qim]: [NonTrapped; 2] = q_in.try_into().map_err(|_| EscapeError::InvalidArgument("sign count".into()))?;
    Ok(Symbols {
        r: opts.r,
        q1: [q1p, q1m],
        q_in: [qip, qim],
        q_out: [build_q_out(Sign::Plus, opts.r), build_q_out(Sign::Minus, opts.r)],
        bscale,
        levels,
        delta: af.delta,
        cover_margin: margin,
    })
}
