//! Message passing layers, multi-head attention, the hybrid block and pooling.

pub mod attention;
pub mod geometric;
pub mod gps;
pub mod mpnn;
pub mod params;
pub mod pool;
pub mod smoothing;

use std::sync::Arc;

use crate::graph::{AtomGraph, BatchedGraph};
use crate::numerics::Tensor;

pub use attention::{Attention, AttentionConfig};
pub use geometric::{geometric_edge_embed, GeometricBasis};
pub use gps::GpsBlock;
pub use mpnn::{Aggregator, LayerKind, MpnnLayer, MpnnLayerConfig};
pub use params::{Bound, Linear, ParamId, ParamStore};
pub use pool::{pool, PoolMode};
pub use smoothing::{mean_aggregation_step, oversmoothing_diagnostic};

/// Index structure of a (batched) graph as seen by the layers. Every undirected
/// edge `k = (a, b)` becomes directed edges `2k: a -> b` and `2k + 1: b -> a`.
#[derive(Clone, Debug)]
pub struct GraphContext {
    pub node_count: usize,
    /// Sender of each directed edge.
    pub src: Arc<[usize]>,
    /// Receiver of each directed edge.
    pub dst: Arc<[usize]>,
    /// Undirected edge behind each directed edge.
    pub undirected: Arc<[usize]>,
    pub in_degree: Vec<usize>,
    pub graph_index: Arc<[usize]>,
    /// `G + 1` node offsets.
    pub node_offsets: Vec<usize>,
    pub positions: Option<Tensor>,
}

impl GraphContext {
    pub fn new(
        node_count: usize,
        edges: &[(usize, usize)],
        node_offsets: Vec<usize>,
        graph_index: Vec<usize>,
        positions: Option<Tensor>,
    ) -> Self {
        let mut src = Vec::with_capacity(2 * edges.len());
        let mut dst = Vec::with_capacity(2 * edges.len());
        let mut undirected = Vec::with_capacity(2 * edges.len());
        let mut in_degree = vec![0; node_count];
        for (k, &(a, b)) in edges.iter().enumerate() {
            src.extend([a, b]);
            dst.extend([b, a]);
            undirected.extend([k, k]);
            in_degree[a] += 1;
            in_degree[b] += 1;
        }
        Self {
            node_count,
            src: src.into(),
            dst: dst.into(),
            undirected: undirected.into(),
            in_degree,
            graph_index: graph_index.into(),
            node_offsets,
            positions,
        }
    }

    pub fn from_batch(batch: &BatchedGraph) -> Self {
        Self::new(batch.node_count, &batch.edges, batch.node_offsets.clone(), batch.graph_index.clone(), batch.positions.clone())
    }

    pub fn from_graph(graph: &AtomGraph) -> Self {
        Self::new(graph.node_count, &graph.edges, vec![0, graph.node_count], vec![0; graph.node_count], graph.positions.clone())
    }

    pub fn directed_edge_count(&self) -> usize {
        self.src.len()
    }

    pub fn graph_count(&self) -> usize {
        self.node_offsets.len() - 1
    }
}
