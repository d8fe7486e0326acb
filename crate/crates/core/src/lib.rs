//! Directed link prediction with GraphSAGE encoders and a gravity-inspired
//! decoder.
//!
//! The pipeline: load a [`graph::DirectedGraph`], hold out edges with
//! [`sampling::split_edges`], train an encoder/decoder pair with
//! [`training::train`], and score held-out edges with [`metrics`].
//! [`harness`] repeats this over seeded folds.

pub mod decoder;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod training;

pub use decoder::DecoderKind;
pub use encoder::{EncoderKind, EncoderParams};
pub use error::{Error, ErrorClass, Result};
pub use graph::{DirectedGraph, Features, NeighborMode};
pub use linalg::Matrix;
pub use sampling::EdgeSplit;
pub use training::{train, TrainConfig, TrainReport};
