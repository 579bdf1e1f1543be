pub mod data;
pub mod embedder;
pub mod encoders;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod hpo;
pub mod layers;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use graph::{batch, build_radius_graph, AtomGraph, BatchedGraph};
pub use model::{Batch, Model, ModelConfig};
pub use numerics::Tensor;
