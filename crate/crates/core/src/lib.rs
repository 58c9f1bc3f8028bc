//! Memory-enhanced spatial-temporal graph autoencoder for node anomaly
//! detection in dynamic graphs.
//!
//! A window of `τ` snapshots is encoded per snapshot by a GCN stack and
//! along time by gated temporal convolutions. Two prototype memories (one
//! spatial sub-bank per window offset, one temporal bank) supply attention
//! readouts that the decoder fuses back in before reconstructing attributes
//! and structure. Nodes are scored by reconstruction error plus distance to
//! the nearest prototype.

pub mod autograd;
pub mod bench;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod graph_store;
pub mod inject;
pub mod memory;
pub mod model;
pub mod pipeline;
pub mod scoring;
pub mod sparse;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use graph_store::{DynamicGraph, GraphWindow, NodeLabels, Snapshot};
pub use model::{ModelConfig, ModelParameters};
pub use tensor::Matrix;
