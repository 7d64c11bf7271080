//! Flood-loss normalization, gap-filling and trend analysis on gridded
//! historical exposure.

pub mod copula;
pub mod events;
pub mod exec;
pub mod exposure;
pub mod footprint;
pub mod gapfill;
pub mod grid;
pub mod normalize;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod trend;
pub mod underreport;

pub use exec::Execution;
