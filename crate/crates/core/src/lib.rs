//! Online parameter estimation for fuel-cell polarization curves.
//!
//! The library covers the full pipeline: polarization-curve models and
//! synthetic data ([`model`]), linear-filter banks ([`filter`]) that turn the
//! nonlinear voltage equation into linear regressions ([`regressor`]),
//! globally convergent online estimators ([`estimator`]), the nonlinear
//! parameter maps tying the regression coefficients back to physical
//! parameters ([`maps`]), excitation diagnostics ([`diagnostics`]), and a run
//! harness ([`harness`]) gluing everything together behind TOML configs and
//! CSV artifacts.

pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod filter;
pub mod harness;
pub mod io;
pub mod maps;
pub mod model;
pub mod regressor;
pub mod linalg;
pub mod signal;

pub use error::{Error, Result};
