//! Finite-difference checks over every differentiable building block.

use atomgraph::embedder::{ChannelSet, Embedder, EmbedderConfig, Scheme};
use atomgraph::layers::{
    geometric_edge_embed, pool, Aggregator, Attention, AttentionConfig, Bound, GeometricBasis, GpsBlock, GraphContext, LayerKind,
    MpnnLayer, MpnnLayerConfig, ParamStore, PoolMode,
};
use atomgraph::numerics::gradcheck::{check_gradients, DEFAULT_STEP};
use atomgraph::numerics::{Tape, Var};
use atomgraph::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::random_connected_graph;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces `out` to a scalar through fixed random weights so every output entry matters.
fn project(tape: &mut Tape, out: Var, weights: &Tensor) -> Var {
    let w = tape.constant(weights.clone());
    let y = tape.mul(out, w);
    tape.sum_all(y)
}

/// Worst errors of one block: the elementwise contract and directional derivatives.
#[derive(Clone, Copy, Debug, Default)]
pub struct BlockCheck {
    pub elementwise: f64,
    pub directional: f64,
}

const DIRECTIONS: usize = 4;

/// Checks gradients w.r.t. `extra` inputs followed by every parameter of `store`.
fn check<F>(store: &ParamStore, extra: Vec<Tensor>, f: F) -> BlockCheck
where
    F: Fn(&mut Tape, &Bound, &[Var]) -> Result<Var>,
{
    let k = extra.len();
    let mut inputs = extra;
    inputs.extend(store.values().iter().cloned());
    let g = |tape: &mut Tape, vars: &[Var]| {
        let p = Bound::from_vars(vars[k..].to_vec());
        f(tape, &p, &vars[..k])
    };
    let elementwise = check_gradients(&inputs, DEFAULT_STEP, g).unwrap().max_relative_error;

    // Derivative of t -> f(x + t v) at 0 against <grad, v> for random unit-scale directions v.
    let eval = |vals: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.variable(t.clone())).collect();
        let out = g(&mut tape, &vars).unwrap();
        tape.value(out).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let out = g(&mut tape, &vars).unwrap();
    let grads = tape.backward(out).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get(&tape, v)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(inputs.iter().map(Tensor::len).sum::<usize>() as u64);
    let mut directional: f64 = 0.0;
    for _ in 0..DIRECTIONS {
        let dir: Vec<Tensor> = inputs.iter().map(|t| random(&mut rng, t.rows(), t.cols())).collect();
        let shifted =
            |sign: f64| -> Vec<Tensor> { inputs.iter().zip(&dir).map(|(x, d)| x.zip_map(d, |a, b| a + sign * DEFAULT_STEP * b)).collect() };
        let fd = (eval(&shifted(1.0)) - eval(&shifted(-1.0))) / (2.0 * DEFAULT_STEP);
        let an: f64 = analytic.iter().zip(&dir).map(|(a, d)| a.data().iter().zip(d.data()).map(|(x, y)| x * y).sum::<f64>()).sum();
        directional = directional.max((an - fd).abs() / fd.abs().max(1e-8));
    }
    BlockCheck { elementwise, directional }
}

fn small_context(rng: &mut ChaCha8Rng) -> (GraphContext, usize) {
    let n = rng.random_range(3..=6);
    let mut g = random_connected_graph(rng, n, 0.3);
    g.positions = Some(Tensor::from_vec(n, 3, (0..3 * n).map(|_| rng.random_range(0.0..2.5)).collect()).unwrap());
    (GraphContext::from_graph(&g), g.edge_count())
}

/// `(block name, worst relative error)` for one seed.
pub fn gradient_checks(seed: u64) -> Vec<(String, BlockCheck)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let (ctx, m) = small_context(&mut rng);
    let n = ctx.node_count;
    let (d_in, d_out, d_edge) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=2));

    let families = [
        ("edge-conditioned", LayerKind::EdgeConditioned, None, Aggregator::Sum),
        ("edge-conditioned/mean", LayerKind::EdgeConditioned, None, Aggregator::Mean),
        ("edge-conditioned/max", LayerKind::EdgeConditioned, None, Aggregator::Max),
        ("multi-aggregator", LayerKind::MultiAggregator, None, Aggregator::Multi),
        ("geometric", LayerKind::Geometric, Some(false), Aggregator::Sum),
        ("geometric/angular", LayerKind::Geometric, Some(true), Aggregator::Sum),
    ];
    for (name, kind, angular, aggregator) in families {
        let basis = angular.map(|a| GeometricBasis { cutoff: 5.0, angular: a });
        let cfg = MpnnLayerConfig { aggregator, basis, ..MpnnLayerConfig::new(kind, d_in, d_out, d_edge) };
        let mut store = ParamStore::new();
        let layer = MpnnLayer::new(&mut store, "l", cfg, &mut rng).unwrap();
        let geometry = basis.map(|b| geometric_edge_embed(&ctx, &b).unwrap());
        let w = random(&mut rng, n, d_out);
        let err = check(&store, vec![random(&mut rng, n, d_in), random(&mut rng, m, d_edge)], |tape, p, x| {
            let y = layer.forward(tape, p, &ctx, x[0], Some(x[1]), geometry.as_ref())?;
            Ok(project(tape, y, &w))
        });
        out.push((format!("layer {name}"), err));
    }

    let heads = rng.random_range(1..=3);
    let d_head = rng.random_range(1..=3);
    let mut store = ParamStore::new();
    let attn = Attention::new(&mut store, "a", AttentionConfig { d_in, heads, d_head, d_out }, &mut rng).unwrap();
    let w = random(&mut rng, n, d_out);
    out.push((
        "attention".into(),
        check(&store, vec![random(&mut rng, n, d_in)], |tape, p, x| {
            let y = attn.forward(tape, p, &ctx.node_offsets, x[0])?;
            Ok(project(tape, y, &w))
        }),
    ));

    let d = heads * d_head;
    let mut store = ParamStore::new();
    let cfg = MpnnLayerConfig::new(LayerKind::EdgeConditioned, d, d, d_edge);
    let block = GpsBlock::new(&mut store, "g", cfg, heads, &mut rng).unwrap();
    let w = random(&mut rng, n, d);
    out.push((
        "gps block".into(),
        check(&store, vec![random(&mut rng, n, d), random(&mut rng, m, d_edge)], |tape, p, x| {
            let y = block.forward(tape, p, &ctx, x[0], Some(x[1]), None)?;
            Ok(project(tape, y, &w))
        }),
    ));

    for (scheme, edge_embed) in [(Scheme::S2, 3), (Scheme::S3, 2), (Scheme::S4, 0)] {
        let cfg =
            EmbedderConfig { scheme, hidden: 4, edge_embed_dim: edge_embed, node_feature_dim: d_in, edge_feature_dim: d_edge, lpe_dim: 2 };
        let mut store = ParamStore::new();
        let emb = Embedder::new(&mut store, cfg.clone(), &mut rng).unwrap();
        let channels = cfg.node_channels();
        let mut extra: Vec<Tensor> = channels.iter().map(|&(_, w)| random(&mut rng, n, w)).collect();
        extra.push(random(&mut rng, m, cfg.d_edge_in()));
        let wn = random(&mut rng, n, cfg.d_node_out());
        let we = random(&mut rng, m, cfg.d_edge_out());
        out.push((
            format!("embedder {scheme}"),
            check(&store, extra, |tape, p, x| {
                let nodes: Vec<(ChannelSet, Var)> = channels.iter().zip(x).map(|(&(c, _), &v)| (c, v)).collect();
                let h = emb.embed_nodes(tape, p, &nodes)?;
                let a = project(tape, h, &wn);
                if cfg.edge_mode().is_none() {
                    return Ok(a);
                }
                let e = emb.embed_edges(tape, p, x[channels.len()]);
                let b = project(tape, e, &we);
                Ok(tape.add(a, b))
            }),
        ));
    }

    let w = random(&mut rng, ctx.graph_count(), d_out);
    for mode in [PoolMode::Min, PoolMode::Max, PoolMode::Sum, PoolMode::Mean] {
        out.push((
            format!("pool {mode:?}").to_lowercase(),
            check(&ParamStore::new(), vec![random(&mut rng, n, d_out)], |tape, _, x| {
                let y = pool(tape, &ctx, x[0], mode)?;
                Ok(project(tape, y, &w))
            }),
        ));
    }

    let target = random(&mut rng, n, d_out);
    out.push(("loss mse".into(), check(&ParamStore::new(), vec![random(&mut rng, n, d_out)], |tape, _, x| Ok(tape.mse(x[0], &target)))));
    let classes = d_out + 1;
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    out.push((
        "loss cross-entropy".into(),
        check(&ParamStore::new(), vec![random(&mut rng, n, classes)], |tape, _, x| Ok(tape.cross_entropy(x[0], &labels))),
    ));
    out
}
