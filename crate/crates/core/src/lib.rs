//! Numerical core for semilinear stochastic partial differential equations
//!
//! ```text
//! dr_t = (A r_t + α(r_t)) dt + σ(r_t) dW_t + ∫_E γ(r_{t-}, x) (μ(dt, dx) − F(dx) dt)
//! ```
//!
//! driven by a trace-class Q-Wiener process and a finite-activity compensated
//! Poisson random measure. The state lives in a truncated eigenbasis of the
//! generator `A` ([`ModeVector`]). The semigroup is extended to a group on a
//! larger space ([`GroupFrame`]) so that the SPDE becomes an ordinary
//! Hilbert-space SDE in a moving frame; that SDE is solved by Picard
//! iteration, Euler splitting or cubature on Wiener space and projected back.
//!
//! The crate is `no_std` (it needs `alloc`). IO, configuration and the
//! command line live in the companion `moving-frame-cli` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod coefficients;
mod error;
pub mod exec;
pub mod frame;
mod math;
pub mod noise;
pub mod picard;
pub mod problem;
pub mod schemes;
pub mod spectral;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use spectral::{DiagonalGenerator, FrameKind, FrameVector, GroupFrame, ModeVector};
