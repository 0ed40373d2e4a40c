//! Command-line experiments over the `moldable` crate: policy solving,
//! simulation campaigns, convergence fits, exact chains, capacity splits
//! between job classes, and fluid trajectories.

pub mod campaign;
pub mod commands;
pub mod config;
pub mod convergence;
pub mod error;
pub mod output;
pub mod parse;

pub use error::CliError;

/// Environment variable giving the worker-thread count.
pub const WORKERS_ENV: &str = "MOLDABLE_WORKERS";
