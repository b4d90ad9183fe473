//! Classify multivariate time series with a language model by serializing
//! them as tables, retrieving labeled neighbors and contrastive examples into
//! the prompt, and voting over several sampling temperatures.

pub mod backend;
pub mod cards;
pub mod cluster;
pub mod config;
pub mod dataset;
pub mod distance;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod retrieval;
pub mod synthetic;
pub mod table;

pub use error::{Error, Result};
