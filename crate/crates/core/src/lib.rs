//! Numerical laboratory for the skew product
//!
//! ```text
//! F(θ, x) = (d·θ mod 1, a − x² + α·φ(θ))
//! ```
//!
//! on `𝕋 × ℝ`, where `a` is a Misiurewicz parameter of the quadratic family
//! and `φ` a trigonometric polynomial. The crate covers orbit and cocycle
//! evaluation, the critical-orbit shadowing chain, admissible curves and
//! their propagation, return-time statistics, and Lyapunov exponent
//! estimation.

pub mod analytic;
pub mod curves;
pub mod digits;
pub mod error;
pub mod fourier;
pub mod jet;
pub mod kahan;
pub mod lyapunov;
pub mod map;
pub mod params;
pub mod recurrence;
pub mod shadowing;
pub mod stats;
pub mod svg;

pub use error::{Error, Result};
pub use fourier::FourierSeries;
pub use params::ParameterSet;
