use atomgraph::encoders::{encode_graph, validate_encodings, ElementTable, EncoderConfig, EncodingBundle, Validity};
use atomgraph::model::{MpnnType, Task};
use atomgraph::{AtomGraph, ModelConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random connected molecule-like graph with positions, atomic numbers and valid encodings.
pub fn molecule(seed: u64, n: usize) -> (AtomGraph, EncodingBundle) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (n as f64).cbrt() * 1.5;
    loop {
        let pos = Tensor::from_vec(n, 3, (0..3 * n).map(|_| rng.random_range(0.0..side)).collect()).unwrap();
        let z: Vec<u32> = (0..n).map(|_| rng.random_range(1..=18)).collect();
        let x = Tensor::column(&z.iter().map(|&z| z as f64 / 18.0).collect::<Vec<_>>());
        let Ok(mut g) = AtomGraph::from_positions(pos, 2.5, x) else { continue };
        g.atomic_numbers = Some(z);
        g.graph_targets = vec![rng.random_range(-1.0..1.0)];
        let b = encode_graph(&g, &EncoderConfig::default(), ElementTable::bundled()).unwrap();
        if g.is_connected() && validate_encodings(&b) == Validity::Keep {
            return (g, b);
        }
    }
}

pub fn config(attention: bool, encodings: bool, mpnn_type: MpnnType) -> ModelConfig {
    ModelConfig {
        use_attention: attention,
        use_encodings: encodings,
        mpnn_type,
        num_conv_layers: 2,
        hidden_dim: 32,
        edge_embed_dim: if attention || encodings { 8 } else { 0 },
        global_attn_heads: if attention { 4 } else { 0 },
        pooling: Default::default(),
        task: Task::GraphRegression { outputs: 1 },
        has_pos: true,
        node_feature_dim: 1,
        edge_feature_dim: 1,
        lpe_dim: EncoderConfig::default().lpe_dim,
        radius_cutoff: 2.5,
        aggregator: None,
    }
}
