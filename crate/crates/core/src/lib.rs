//! Simulation and estimation toolkit for a diamond ¹⁴N nuclear-spin gyroscope.
//!
//! The crate is organised by subsystem:
//!
//! - [`spincore`]: level bases, spin states, Hamiltonians and unitary propagation
//!   for the 3-level nuclear and 9-level electron⊗nuclear systems.
//! - [`sequence`]: rotation-sensitive Ramsey and echo sequences and the
//!   nuclear → electron readout mapping.
//! - [`threeaxis`]: the four NV orientation families, the tilted-axis forward
//!   model and the rotation-vector estimator.
//! - [`noise`]: Ornstein–Uhlenbeck dephasing, NV-T₁ dephasing and a small
//!   dipolar electron-spin bath.
//! - [`sensor`]: polarization transfer, repeated-readout efficiency and the
//!   shot-noise sensitivity budget.
//! - [`cli`]: configuration and command implementations behind the `nvgyro` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod noise;
pub mod rng;
pub mod sensor;
pub mod sequence;
pub mod spincore;
pub mod threeaxis;

pub use error::{GyroError, Result};
