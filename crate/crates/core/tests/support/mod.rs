#![allow(dead_code)]

pub mod gradients;
pub mod oracles;

use atomgraph::encoders::{encode_graph, validate_encodings, ElementTable, EncoderConfig, EncodingBundle, EncodingStats, Validity};
use atomgraph::layers::PoolMode;
use atomgraph::model::{ModelConfig, MpnnType, Task};
use atomgraph::{AtomGraph, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random connected graph: a random spanning tree plus extra edges with probability `p`.
pub fn random_connected_graph<R: Rng>(rng: &mut R, n: usize, p: f64) -> AtomGraph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = std::collections::BTreeSet::new();
    for i in 1..n {
        let parent = order[rng.random_range(0..i)];
        let (u, v) = (order[i], parent);
        edges.insert((u.min(v), u.max(v)));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.insert((u, v));
            }
        }
    }
    AtomGraph::from_edges(n, &edges.into_iter().collect::<Vec<_>>()).unwrap()
}

/// Every connected labeled graph on `n` nodes.
pub fn all_connected_graphs(n: usize) -> Vec<AtomGraph> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    (0u64..1 << pairs.len())
        .filter_map(|mask| {
            let edges: Vec<_> = pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &e)| e).collect();
            let g = AtomGraph::from_edges(n, &edges).unwrap();
            g.is_connected().then_some(g)
        })
        .collect()
}

pub fn shuffled_permutation<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Connected graph with three node features, one edge feature, positions, atomic numbers and a
/// graph target, whose encodings are all valid.
pub fn molecule<R: Rng>(rng: &mut R, n: usize) -> (AtomGraph, EncodingBundle) {
    loop {
        let mut g = random_connected_graph(rng, n, 0.25);
        let m = g.edge_count();
        g.node_features = Tensor::from_vec(n, 3, (0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        g.edge_features = Tensor::from_vec(m, 1, (0..m).map(|_| rng.random_range(0.5..2.0)).collect()).unwrap();
        g.positions = Some(Tensor::from_vec(n, 3, (0..3 * n).map(|_| rng.random_range(0.0..4.0)).collect()).unwrap());
        g.atomic_numbers = Some((0..n).map(|_| rng.random_range(1..=18)).collect());
        g.graph_targets = vec![rng.random_range(-1.0..1.0)];
        g.node_targets = Some(Tensor::from_vec(n, 1, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap());
        let b = encode_graph(&g, &EncoderConfig::default(), ElementTable::bundled()).unwrap();
        if validate_encodings(&b) == Validity::Keep {
            return (g, b);
        }
    }
}

/// `count` molecules whose encodings are standardized with statistics of the whole set.
pub fn molecules<R: Rng>(rng: &mut R, count: usize, sizes: std::ops::RangeInclusive<usize>) -> (Vec<AtomGraph>, Vec<EncodingBundle>) {
    let (graphs, raw): (Vec<AtomGraph>, Vec<EncodingBundle>) = (0..count)
        .map(|_| {
            let n = rng.random_range(sizes.clone());
            molecule(rng, n)
        })
        .unzip();
    let stats = EncodingStats::fit(&raw.iter().collect::<Vec<_>>());
    (graphs, raw.iter().map(|b| stats.apply(b)).collect())
}

pub fn model_config(use_attention: bool, use_encodings: bool, mpnn_type: MpnnType, edge_embed_dim: usize) -> ModelConfig {
    ModelConfig {
        use_attention,
        use_encodings,
        mpnn_type,
        num_conv_layers: 2,
        hidden_dim: 8,
        edge_embed_dim,
        global_attn_heads: if use_attention { 2 } else { 0 },
        pooling: PoolMode::Mean,
        task: Task::GraphRegression { outputs: 1 },
        has_pos: !MpnnType::WITHOUT_POSITIONS.contains(&mpnn_type),
        node_feature_dim: 3,
        edge_feature_dim: 1,
        lpe_dim: EncoderConfig::default().lpe_dim,
        radius_cutoff: 5.0,
        aggregator: None,
    }
}

pub const SWITCHES: [(bool, bool); 4] = [(false, false), (false, true), (true, false), (true, true)];
