//! Implicit bias of the JKO scheme.
//!
//! The JKO proximal step with step size `η` tracks, to second order, the
//! Wasserstein gradient flow of the modified energy `J − (η/4)|∂J|²`. This
//! crate implements that correction for Gaussian (Bures–Wasserstein) flows,
//! 1D grid and particle discretizations, and Riemannian gradient descent,
//! together with the convergence-order experiments that check it.

pub mod bures;
pub mod energies;
pub mod grid1d;
pub mod harness;
pub mod matcore;
pub mod particles1d;
pub mod riemannian;
