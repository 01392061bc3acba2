//! File formats, configuration, the parallel experiment runner and report
//! tables around `coldstart-core`.

pub mod config;
pub mod csvio;
pub mod output;
pub mod report;
pub mod runner;

pub use coldstart_core as core;
