//! Default-contagion engine for portfolio credit derivatives.
//!
//! The defaulted obligors form a set-valued chain that is Markov conditional
//! on a macro factor path. This crate implements the model's closed-form
//! transition kernels, CDO tranche pricing under a jump-diffusion factor,
//! a Monte Carlo simulator that doubles as the stochastic oracle, and
//! calibration of the homogeneous contagion model to market tranche quotes.

pub mod ajd;
pub mod calibrate;
pub mod error;
pub mod hypoexp;
pub mod kernel;
pub mod pricing;
pub mod simulate;
pub mod model;
pub mod numerics;
pub mod precision;

pub use ajd::{AjdParams, TransformValue};
pub use error::{Error, Result};
pub use model::{ContagionKind, ContagionSpec, ObligorSet, RecoveryVector};
pub use precision::{PrecisionPolicy, Real};
