//! Spectral-Galerkin micromagnetics on boxes and flat tori.
//!
//! The state variable is a magnetization field `u: Ω → ℝ³` discretized on a
//! tensor-product collocation grid and evolved in the span of the lowest `n`
//! eigenfunctions of `Δ − I` (Neumann or periodic). Three flows are provided:
//! Landau-Lifshitz-Gilbert dynamics driven by a spin-polarized current, and
//! the damped harmonic-map heat flows on bounded boxes and flat tori. All of
//! them are integrated in their ε-regularized form
//!
//! ```text
//! u_t = εΔu − P_n[ α 𝔍(u)×(𝔍(u)×h) + 𝔍(u)×h ]     (LLG)
//! u_t = εΔu − P_n[ 𝔍(u)×(𝔍(u)×h) ]                 (heat flows)
//! ```
//!
//! where `𝔍(u) = u/max{1,|u|}` clips to the unit ball and `h` collects
//! exchange, anisotropy, demagnetizing, and current-induced terms. The sphere
//! constraint `|u| = 1` is not enforced by the integrator; it re-emerges as
//! ε → 0, and the [`diagnostics`] module measures exactly how fast.
//!
//! Modules:
//! - [`grid`]: domains, spectral bases, transforms, differential operators.
//! - [`physics`]: anisotropy, spin current, clipping, effective fields, energy.
//! - [`demag`]: stray-field convolution kernel for 3-D boxes.
//! - [`solver`]: right-hand sides, RK4 and implicit-midpoint steppers, the
//!   (n, ε) continuation driver.
//! - [`diagnostics`]: energy ledger, dissipation identities, a priori
//!   envelope, weak-form residuals, maximum-principle monitor.
//! - [`acceptance`]: the canned desk-scale experiments behind `check`.

pub mod acceptance;
pub mod demag;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod physics;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
