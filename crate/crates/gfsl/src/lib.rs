//! File formats, pipeline stages and parallel evaluation on top of
//! `gfsl-core`.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod parallel;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{CliError, Result};
