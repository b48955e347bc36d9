//! Image comparison by minimizing a nonlinear-elasticity functional.
//!
//! Two images `P1 = (Ω1, c1)` and `P2 = (Ω2, c2)` are compared through
//!
//! ```text
//! I(y) = ∫_Ω1 ψ(c1(x), c2(y(x)), Dy(x)) dx
//! ```
//!
//! minimized over orientation-preserving maps `y` carrying `Ω1` onto `Ω2`,
//! with boundary points free to slide along `∂Ω2`.
//!
//! The crate is organised bottom-up:
//!
//! * [`image`]: domains, intensity sources, sampling, PGM/PPM.
//! * [`energy`]: the integrand `ψ`, its singular-value calculus and pointwise certificates.
//! * [`deform`]: P1 triangulations, the sliding boundary chart, discrete energy assembly.
//! * [`solver`]: feasibility-preserving limited-memory quasi-Newton descent and its variants.
//! * [`verification`]: reproducible numerical experiments emitting certificates.
//! * [`export`]: CSV/JSON artifacts and pullback warping.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod deform;
pub mod energy;
pub mod error;
pub mod export;
pub mod image;
pub mod linalg;
pub mod solver;
pub mod verification;

pub use error::{Error, Result};
