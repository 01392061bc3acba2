//! Streaming active learning under cold start.
//!
//! The crate is `no_std` (with `alloc`): it holds the pools, the day-one
//! preprocessing pipeline, model kernels, query policies and their
//! sequencing, the simulation loop, dataset slicing and synthetic streams,
//! and learning-curve metrics. File formats, configuration and the command
//! line live in the `coldstart` crate.
#![no_std]

extern crate alloc;

pub mod data;
pub mod evaluation;
pub mod linalg;
pub mod math;
pub mod models;
pub mod oracle;
pub mod policies;
pub mod pool;
pub mod preprocess;
pub mod rng;
pub mod simulation;

pub use linalg::Matrix;
pub use oracle::{Label, Oracle};
pub use pool::{EntityId, Event, EventId, FeatureVector, LabelCounts, PoolError, PoolPair, QuerySet};
