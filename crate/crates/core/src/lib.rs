//! Drive-induced transitions of a transmon qubit.
//!
//! Exact charge-basis spectra, the dissipative environment seen by the
//! transmon island, golden-rule rates for inelastic scattering of drive
//! photons, a scanner for resonant features in the (ω_q, δω) plane, and a
//! Monte-Carlo emulator of the rate-measurement pipeline.

// `!(x > 0.0)` is used throughout to reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod emulator;
pub mod environment;
pub mod error;
pub mod quadrature;
pub mod rates;
pub mod scanner;
pub mod spectrum;
pub mod units;

pub use error::{Error, Result};
