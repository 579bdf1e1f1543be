//! Message passing: per-edge messages, a permutation-invariant aggregation and a
//! residual MLP update.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Bound, GeometricBasis, GraphContext, Linear, ParamStore};
use crate::numerics::{Extreme, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    /// `m = silu(h_u W_n + e W_e + b)`
    EdgeConditioned,
    /// `m = silu([h_u || h_v || e] W + b)`, several aggregators plus a log-degree scaler.
    MultiAggregator,
    /// `m = silu([h_u || h_v || e] W + b) * (e_geo W_f + b_f)` with `e_geo` from distances and angles.
    Geometric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregator {
    Sum,
    Mean,
    Max,
    /// Mean, max, min and sum side by side.
    Multi,
}

impl Aggregator {
    pub fn width_factor(self) -> usize {
        match self {
            Aggregator::Multi => 4,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpnnLayerConfig {
    pub kind: LayerKind,
    pub d_in: usize,
    pub d_out: usize,
    /// Width of the undirected edge attributes fed to the message; 0 for none.
    pub d_edge: usize,
    pub aggregator: Aggregator,
    /// Required by [`LayerKind::Geometric`].
    pub basis: Option<GeometricBasis>,
}

impl MpnnLayerConfig {
    pub fn new(kind: LayerKind, d_in: usize, d_out: usize, d_edge: usize) -> Self {
        let aggregator = if kind == LayerKind::MultiAggregator { Aggregator::Multi } else { Aggregator::Sum };
        Self { kind, d_in, d_out, d_edge, aggregator, basis: None }
    }

    fn message_in(&self) -> usize {
        match self.kind {
            LayerKind::EdgeConditioned => self.d_in + self.d_edge,
            _ => 2 * self.d_in + self.d_edge,
        }
    }

    fn aggregate_width(&self) -> usize {
        let scaled = if self.kind == LayerKind::MultiAggregator { 2 } else { 1 };
        self.d_out * self.aggregator.width_factor() * scaled
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpnnLayer {
    pub config: MpnnLayerConfig,
    pub message: Linear,
    pub filter: Option<Linear>,
    pub update_hidden: Linear,
    pub update_out: Linear,
    /// Projection of the skip path when input and output widths differ.
    pub residual: Option<Linear>,
}

impl MpnnLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, config: MpnnLayerConfig, rng: &mut R) -> Result<Self> {
        if config.d_in == 0 || config.d_out == 0 {
            return Err(Error::InvalidConfig(format!("{name}: layer widths must be positive")));
        }
        let filter = match (config.kind, config.basis) {
            (LayerKind::Geometric, Some(b)) => Some(Linear::new(store, &format!("{name}.filter"), b.width(), config.d_out, true, rng)),
            (LayerKind::Geometric, None) => return Err(Error::InvalidConfig(format!("{name}: geometric layer needs a radial basis"))),
            _ => None,
        };
        let message = Linear::new(store, &format!("{name}.message"), config.message_in(), config.d_out, true, rng);
        let update_hidden =
            Linear::new(store, &format!("{name}.update.0"), config.d_in + config.aggregate_width(), config.d_out, true, rng);
        let update_out = Linear::new(store, &format!("{name}.update.1"), config.d_out, config.d_out, true, rng);
        let residual =
            (config.d_in != config.d_out).then(|| Linear::new(store, &format!("{name}.residual"), config.d_in, config.d_out, false, rng));
        Ok(Self { config, message, filter, update_hidden, update_out, residual })
    }

    /// `h`: `N x d_in` node states; `edges`: `|E| x d_edge` undirected attributes;
    /// `geometry`: per-directed-edge basis rows from [`crate::layers::geometric_edge_embed`].
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        ctx: &GraphContext,
        h: Var,
        edges: Option<Var>,
        geometry: Option<&Tensor>,
    ) -> Result<Var> {
        let cfg = &self.config;
        let (n, d) = tape.shape(h);
        if n != ctx.node_count || d != cfg.d_in {
            return Err(Error::Shape {
                op: "mpnn_forward",
                detail: format!("node states {n}x{d}, expected {}x{}", ctx.node_count, cfg.d_in),
            });
        }
        let mut parts = vec![tape.gather_rows(h, &ctx.src)];
        if cfg.kind != LayerKind::EdgeConditioned {
            parts.push(tape.gather_rows(h, &ctx.dst));
        }
        if cfg.d_edge > 0 {
            let e = edges.ok_or(Error::InvalidConfig("message function expects edge attributes".into()))?;
            let (_, w) = tape.shape(e);
            if w != cfg.d_edge {
                return Err(Error::Shape {
                    op: "mpnn_forward",
                    detail: format!("edge attributes have width {w}, expected {}", cfg.d_edge),
                });
            }
            parts.push(tape.gather_rows(e, &ctx.undirected));
        }
        let input = tape.concat_cols(&parts);
        let pre = self.message.forward(tape, p, input);
        let mut m = tape.silu(pre);
        if let Some(filter) = &self.filter {
            let g = geometry.ok_or(Error::MissingPositions("geometric"))?;
            let g = tape.constant(g.clone());
            let f = filter.forward(tape, p, g);
            m = tape.mul(m, f);
        }

        let mut agg = aggregate(tape, ctx, m, cfg.aggregator);
        if cfg.kind == LayerKind::MultiAggregator {
            let s: Vec<f64> = ctx.in_degree.iter().map(|&k| (k as f64 + 1.0).ln()).collect();
            let s = tape.constant(Tensor::column(&s));
            let amplified = tape.mul_col(agg, s);
            agg = tape.concat_cols(&[agg, amplified]);
        }

        let z = tape.concat_cols(&[h, agg]);
        let z = self.update_hidden.forward(tape, p, z);
        let z = tape.silu(z);
        let z = self.update_out.forward(tape, p, z);
        let skip = match &self.residual {
            Some(r) => r.forward(tape, p, h),
            None => h,
        };
        Ok(tape.add(z, skip))
    }
}

/// Reduces directed-edge messages onto their receivers. Empty neighborhoods give zeros.
pub fn aggregate(tape: &mut Tape, ctx: &GraphContext, m: Var, aggregator: Aggregator) -> Var {
    let n = ctx.node_count;
    let sum = |tape: &mut Tape| tape.scatter_add(m, &ctx.dst, n);
    let mean = |tape: &mut Tape| {
        let s = tape.scatter_add(m, &ctx.dst, n);
        let inv: Vec<f64> = ctx.in_degree.iter().map(|&k| 1.0 / k.max(1) as f64).collect();
        let inv = tape.constant(Tensor::column(&inv));
        tape.mul_col(s, inv)
    };
    match aggregator {
        Aggregator::Sum => sum(tape),
        Aggregator::Mean => mean(tape),
        Aggregator::Max => tape.segment_extreme(m, &ctx.dst, n, Extreme::Max),
        Aggregator::Multi => {
            let a = mean(tape);
            let b = tape.segment_extreme(m, &ctx.dst, n, Extreme::Max);
            let c = tape.segment_extreme(m, &ctx.dst, n, Extreme::Min);
            let d = sum(tape);
            tape.concat_cols(&[a, b, c, d])
        }
    }
}
