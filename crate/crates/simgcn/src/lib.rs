//! File formats, configuration and command implementations around
//! `simgcn-core`.

pub mod adjacency_dump;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod error;
mod wire;

pub use error::AppError;
