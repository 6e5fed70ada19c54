//! Numerical laboratory for damped waves on stationary, asymptotically flat
//! backgrounds.
//!
//! The crate builds without `std` (it needs `alloc`). All transcendental
//! functions go through `libm` so results do not depend on the platform's
//! math library.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is how NaN gets refused; index loops mirror the 3-vector math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod escape;
pub mod flow;
pub mod halfwave;
pub mod halton;
pub mod math;
pub mod metric;
pub mod ode;
pub mod par;
pub mod solver;

pub use halfwave::{FullPhasePoint, PhasePoint, Sign};
pub use metric::{Damping, Geometry, Metric, MetricModel};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
