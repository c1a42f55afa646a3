//! File formats, artifacts, configuration and the command line on top of
//! `rem-core`.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod formats;
pub mod pipeline;
pub mod scenario;
