use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the model, the solvers and the pure ingestion steps.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the domain where a formula is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Parameters violate their invariants (positivity, green-split range).
    #[error("parameter error: {0}")]
    Param(String),
    /// Not enough data, or data the estimator cannot use.
    #[error("data error: {0}")]
    Data(String),
    /// The solver met a non-finite residual or Jacobian.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A derived quantity broke a type invariant.
    #[error("invariant violated: {0}")]
    Invariant(String),
    /// Inconsistent configuration, such as a segment without a lane count.
    #[error("config error: {0}")]
    Config(String),
    /// Signal events in an impossible order.
    #[error("event order error: {0}")]
    Order(String),
}
