//! Signal-parametrized speed-flow fundamental diagram for signalized urban
//! road segments.
//!
//! The crate is `no_std` (it needs `alloc`) and holds everything that is pure
//! computation:
//!
//! - [`fd`]: the speed-flow curve `v = v_max (1 - (q/q_cap)^alpha)^beta`, its
//!   green-split parameterization and curve audits.
//! - [`lm`]: a small dense Levenberg-Marquardt solver.
//! - [`calibration`]: per-segment `(alpha, beta)` fits and city-wide
//!   green-split coefficients.
//! - [`ingest`]: hourly aggregation, study filters, green-split extraction
//!   from phase events and flow binning.
//! - [`oracle`]: deterministic synthetic traffic generators used to check the
//!   estimators.
//!
//! File formats, the corpus writer and the command-line tool live in the
//! `sigfd` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod calibration;
pub mod error;
pub mod fd;
pub mod ingest;
pub mod lm;
pub mod oracle;

pub use error::{Error, Result};
