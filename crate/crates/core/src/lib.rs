//! Federated temporal graph clustering.
//!
//! Clients each hold a subgraph of a temporal graph and jointly train a
//! windowed temporal encoder by exchanging (optionally compressed) parameter
//! deltas with a server. The learned embeddings are clustered with k-means,
//! refined against a temporal clustering objective, and scored with
//! external and structural metrics.

pub mod cli;
pub mod clustering;
pub mod compression;
pub mod data;
pub mod embedding;
pub mod error;
pub mod federation;
pub mod graph;
pub mod metrics;
pub mod objective;
pub mod rng;

pub use error::{Error, Result};
