//! Multi-token graph transformer pipeline: walk sampling, graph documents,
//! masked-token pre-training, token-sequence node classification and an
//! analysis suite for the underlying walk theory.

pub mod analysis;
pub mod dataset;
pub mod doc;
pub mod error;
pub mod graph;
pub mod model;
pub mod rng;
pub mod sgpm;
pub mod walk;

pub use error::{Error, Result};
