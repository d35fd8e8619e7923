//! AIS vessel-tracking records to synthetic maritime Q&A: ingest, stratified
//! sampling, oracle answers, multi-model generation, judging, statistics,
//! training-side numerics and a query service.

pub mod ais;
pub mod config;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod geo;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod qa;
pub mod sampler;
pub mod service;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
