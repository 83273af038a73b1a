//! Weak-diffusion asymptotics for a nonlocal cubic kinetic equation of
//! metal-vapour plasma, together with a spectral reference solver.
//!
//! The modules follow the computation pipeline:
//!
//! - [`specialfn`]: two-bound incomplete gamma function.
//! - [`coeffs`]: ionization rate, recombination kernel and their Taylor data.
//! - [`ee`]: moment system for `σ`, `X`, `α⁽²⁾`.
//! - [`relax`]: closed-form relaxation of a symmetric packet.
//! - [`ale`]: associated linear equation, Riccati propagator, Gaussian packet.
//! - [`refpde`]: pseudo-spectral solver of the full nonlocal equation.

pub mod ale;
pub mod coeffs;
pub mod ee;
pub mod grid;
pub mod ode;
pub mod refpde;
pub mod relax;
pub mod specialfn;
