//! File formats, the HTTP summarization provider, and the `ssrl` command
//! line, on top of `ssrl_core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod formats;
pub mod pipeline;
pub mod provider;

pub use error::CliError;
