//! Files, synthetic corpora, plots and the command line around
//! [`sigfd_core`].
//!
//! - [`formats`]: CSV schemas for counts, speeds, signal events and every
//!   pipeline output.
//! - [`config`]: segments table and optional run file (TOML).
//! - [`corpus`]: writes synthetic corpora in the input formats.
//! - [`plot`]: SVG overlay of binned data and predicted curves.
//! - [`commands`] and [`cli`]: the `sigfd` subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;
pub mod formats;
pub mod plot;

pub use error::{CliError, Result};
