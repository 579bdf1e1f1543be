use std::hint::black_box;

use atomgraph::encoders::{encode_graph, ElementTable, EncoderConfig};
use atomgraph::layers::{Attention, AttentionConfig, ParamStore};
use atomgraph::model::MpnnType;
use atomgraph::{Batch, Model, Tensor};
use atomgraph_bench::{config, molecule};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn encoders(c: &mut Criterion) {
    let mut group = c.benchmark_group("encode_graph");
    for n in [8, 16, 32] {
        let (g, _) = molecule(n as u64, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| {
            b.iter(|| encode_graph(black_box(g), &EncoderConfig::default(), ElementTable::bundled()).unwrap())
        });
    }
    group.finish();
}

fn attention(c: &mut Criterion) {
    let mut group = c.benchmark_group("attention_weights");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for n in [16, 64, 256] {
        let mut store = ParamStore::new();
        let att = Attention::new(&mut store, "a", AttentionConfig::for_hidden(32, 4).unwrap(), &mut rng).unwrap();
        let h = Tensor::from_vec(n, 32, (0..n * 32).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &h, |b, h| b.iter(|| att.weights(&store, &[0, n], black_box(h)).unwrap()));
    }
    group.finish();
}

fn model(c: &mut Criterion) {
    let graphs: Vec<_> = (0..16).map(|i| molecule(100 + i, 12)).collect();
    let refs: Vec<_> = graphs.iter().map(|(g, _)| g).collect();
    let encs: Vec<_> = graphs.iter().map(|(_, b)| b).collect();
    let batch = Batch::new(&refs, Some(&encs)).unwrap();
    let mut group = c.benchmark_group("model");
    for (name, att, enc, kind) in
        [("S1-SchNet", false, false, MpnnType::SchNet), ("S4-SchNet", true, true, MpnnType::SchNet), ("S4-PNA", true, true, MpnnType::Pna)]
    {
        let model = Model::new(config(att, enc, kind), 0).unwrap();
        group.bench_function(BenchmarkId::new("forward", name), |b| b.iter(|| model.predict(black_box(&batch)).unwrap()));
        group.bench_function(BenchmarkId::new("forward_backward", name), |b| {
            b.iter(|| model.loss_and_gradients(black_box(&batch)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, encoders, attention, model);
criterion_main!(benches);
