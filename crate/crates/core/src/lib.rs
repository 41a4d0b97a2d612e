//! Graph-based fragmentation of molecular clusters with machine-learned fragment
//! energy corrections.

pub mod assembly;
pub mod config;
pub mod descriptor;
pub mod ensemble;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod sampling;

pub use error::{Error, Result};
