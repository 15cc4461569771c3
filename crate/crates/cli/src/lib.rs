//! Dataset preparation, file formats and the experiment driver behind the
//! `influence-ad` command.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod keyvalue;
pub mod pipeline;
pub mod report;
pub mod store;

pub use config::RunConfig;
pub use error::{CliError, Result};
