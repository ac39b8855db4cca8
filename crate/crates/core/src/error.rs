//! Crate-wide error type.
//!
//! Numerical routines fail loudly rather than propagating NaN: a sample that
//! leaves the model's domain, a Gram matrix that never became invertible or a
//! diverging estimator all surface here with enough context to tell the user
//! which knob to turn.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input sample (current, voltage, or time) was NaN or infinite.
    #[error("non-finite sample at t = {t}: {what}")]
    NonFiniteSample { t: f64, what: String },

    /// ln(u) requested for u <= 0; the log-based regressors only exist on u > 0.
    #[error("logarithm domain: current must be strictly positive, got {value} at t = {t}")]
    LogDomain { t: f64, value: f64 },

    /// The open-circuit voltage must dominate the loss term over the whole
    /// current range, otherwise ln(E_oc - v) is undefined.
    #[error("E_oc dominance violated: loss term reaches {loss} against E_oc = {e_oc}")]
    EocDominance { e_oc: f64, loss: f64 },

    /// Parameter map evaluated where it is not defined (eta_2 = 0 for the
    /// full-model reparameterization).
    #[error("singular reparameterization: {0}")]
    SingularReparameterization(String),

    /// Batch least squares on a Gram matrix that is numerically singular.
    #[error("regressor not IE: Gram matrix is singular (rcond ~ {rcond:.3e})")]
    NotExciting { rcond: f64 },

    /// Online estimator state left the trust region; carries the recent history.
    #[error("estimator diverged at t = {t}: state norm {norm:.3e} exceeds {limit:.0e}")]
    Divergence {
        t: f64,
        norm: f64,
        limit: f64,
        /// Last recorded (t, state-norm) pairs before the abort, oldest first.
        recent: Vec<(f64, f64)>,
    },

    /// Bad dimensions handed to a matrix/vector routine.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A configuration value failed validation.
    #[error("invalid config: {0}")]
    Config(String),

    /// CSV input violated the expected schema.
    #[error("csv schema: {0}")]
    Csv(String),

    /// Time column not strictly increasing in a replayed trace.
    #[error("non-monotone time at row {row}: {t_prev} -> {t}")]
    NonMonotoneTime { row: usize, t_prev: f64, t: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
