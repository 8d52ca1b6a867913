//! Pulse-level simulation and gate synthesis for a strongly driven transmon
//! coupled to a multimode bosonic cavity.
//!
//! Internal frequencies are angular (rad/s) and times are seconds. Basis
//! ordering is lexicographic with the transmon index slowest.

pub mod error;
pub mod exec;
pub mod linalg;

pub mod hilbert;
pub mod model;
pub mod pulse;
pub mod integrate;
pub mod floquet;
pub mod dynamics;
pub mod synthesis;
pub mod tomography;
pub mod fit;
pub mod io;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};

/// 2π, used everywhere Hz values are converted to angular units.
pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Convert a frequency in Hz to rad/s.
#[inline]
pub fn hz(f: f64) -> f64 {
    TWO_PI * f
}

/// Crate version, recorded in run reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
