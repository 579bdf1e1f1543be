//! Scheme assembly from the two switches, batched forward passes and losses.

use std::cell::Cell;
use std::fmt;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedder::{ChannelSet, Embedder, EmbedderConfig, Scheme};
use crate::encoders::EncodingBundle;
use crate::error::{Error, Result};
use crate::graph::{batch, AtomGraph, BatchedGraph};
use crate::layers::{
    geometric_edge_embed, pool, Aggregator, Bound, GeometricBasis, GpsBlock, GraphContext, LayerKind, Linear, MpnnLayer, MpnnLayerConfig,
    ParamStore, PoolMode,
};
use crate::numerics::{Tape, Tensor, Var};

/// Message passing model names of the search space, each mapped onto one layer family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MpnnType {
    #[serde(rename = "GAT")]
    Gat,
    #[serde(rename = "GINE")]
    Gine,
    #[serde(rename = "PNA")]
    Pna,
    #[serde(rename = "CGCNN")]
    Cgcnn,
    #[serde(rename = "SchNet")]
    SchNet,
    #[serde(rename = "DimeNet")]
    DimeNet,
    #[serde(rename = "EGNN")]
    Egnn,
    #[serde(rename = "PAINN")]
    Painn,
}

impl MpnnType {
    pub const ALL: [MpnnType; 8] = [Self::Gat, Self::Gine, Self::Pna, Self::Cgcnn, Self::SchNet, Self::DimeNet, Self::Egnn, Self::Painn];
    pub const WITH_POSITIONS: [MpnnType; 6] = [Self::Pna, Self::Cgcnn, Self::SchNet, Self::DimeNet, Self::Egnn, Self::Painn];
    pub const WITHOUT_POSITIONS: [MpnnType; 4] = [Self::Gat, Self::Gine, Self::Pna, Self::Cgcnn];

    pub fn admissible(has_pos: bool) -> &'static [MpnnType] {
        if has_pos {
            &Self::WITH_POSITIONS
        } else {
            &Self::WITHOUT_POSITIONS
        }
    }

    pub fn family(self) -> LayerKind {
        match self {
            Self::Gat | Self::Gine | Self::Cgcnn => LayerKind::EdgeConditioned,
            Self::Pna => LayerKind::MultiAggregator,
            Self::SchNet | Self::DimeNet | Self::Egnn | Self::Painn => LayerKind::Geometric,
        }
    }

    pub fn uses_angles(self) -> bool {
        self == Self::DimeNet
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gat => "GAT",
            Self::Gine => "GINE",
            Self::Pna => "PNA",
            Self::Cgcnn => "CGCNN",
            Self::SchNet => "SchNet",
            Self::DimeNet => "DimeNet",
            Self::Egnn => "EGNN",
            Self::Painn => "PAINN",
        }
    }
}

impl fmt::Display for MpnnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MpnnType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mpnn type `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Task {
    GraphRegression { outputs: usize },
    NodeRegression { outputs: usize },
    GraphClassification { classes: usize },
}

impl Task {
    pub fn output_width(self) -> usize {
        match self {
            Task::GraphRegression { outputs } | Task::NodeRegression { outputs } => outputs,
            Task::GraphClassification { classes } => classes,
        }
    }

    pub fn is_graph_level(self) -> bool {
        !matches!(self, Task::NodeRegression { .. })
    }

    pub fn is_classification(self) -> bool {
        matches!(self, Task::GraphClassification { .. })
    }
}

fn default_cutoff() -> f64 {
    5.0
}

/// One point of the search space plus the data-dependent input widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub use_attention: bool,
    pub use_encodings: bool,
    pub mpnn_type: MpnnType,
    pub num_conv_layers: usize,
    pub hidden_dim: usize,
    pub edge_embed_dim: usize,
    pub global_attn_heads: usize,
    #[serde(default)]
    pub pooling: PoolMode,
    pub task: Task,
    pub has_pos: bool,
    pub node_feature_dim: usize,
    pub edge_feature_dim: usize,
    pub lpe_dim: usize,
    #[serde(default = "default_cutoff")]
    pub radius_cutoff: f64,
    /// Overrides the family default aggregator.
    #[serde(default)]
    pub aggregator: Option<Aggregator>,
}

impl ModelConfig {
    pub fn scheme(&self) -> Scheme {
        Scheme::from_switches(self.use_attention, self.use_encodings)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.use_attention && self.global_attn_heads == 0 {
            return bad("attention is enabled but global_attn_heads = 0".into());
        }
        if !self.use_attention && self.global_attn_heads != 0 {
            return bad(format!("attention is disabled but global_attn_heads = {}", self.global_attn_heads));
        }
        if self.use_attention && !self.hidden_dim.is_multiple_of(self.global_attn_heads) {
            return Err(Error::HeadDivisibility { hidden: self.hidden_dim, heads: self.global_attn_heads });
        }
        if !MpnnType::admissible(self.has_pos).contains(&self.mpnn_type) {
            return bad(format!("mpnn type {} is not admissible with has_pos = {}", self.mpnn_type, self.has_pos));
        }
        if self.num_conv_layers == 0 {
            return bad("num_conv_layers must be positive".into());
        }
        if self.hidden_dim == 0 || self.node_feature_dim == 0 {
            return bad("hidden and node feature widths must be positive".into());
        }
        if self.task.output_width() == 0 {
            return bad("task must have at least one output".into());
        }
        if self.mpnn_type.family() == LayerKind::Geometric && !(self.radius_cutoff > 0.0 && self.radius_cutoff.is_finite()) {
            return bad("geometric layers need a positive radius cutoff".into());
        }
        self.embedder_config().validate()
    }

    pub fn embedder_config(&self) -> EmbedderConfig {
        EmbedderConfig {
            scheme: self.scheme(),
            hidden: self.hidden_dim,
            edge_embed_dim: self.edge_embed_dim,
            node_feature_dim: self.node_feature_dim,
            edge_feature_dim: self.edge_feature_dim,
            lpe_dim: self.lpe_dim,
        }
    }

    pub fn basis(&self) -> Option<GeometricBasis> {
        (self.mpnn_type.family() == LayerKind::Geometric)
            .then_some(GeometricBasis { cutoff: self.radius_cutoff, angular: self.mpnn_type.uses_angles() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Block {
    Mpnn(MpnnLayer),
    Gps(GpsBlock),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub embedder: Embedder,
    pub blocks: Vec<Block>,
    pub head: Linear,
}

/// A batch of graphs with their encodings, ready for the forward pass. Channel
/// accesses are recorded so tests can verify which inputs a scheme consumed.
pub struct Batch {
    pub graph: BatchedGraph,
    pub ctx: GraphContext,
    chemical: Option<Tensor>,
    node_topological: Option<Tensor>,
    edge_topological: Option<Tensor>,
    laplacian: Option<Tensor>,
    reads: Cell<ChannelSet>,
    geometry: OnceLock<(GeometricBasis, Tensor)>,
}

fn stack(parts: Vec<Option<&Tensor>>) -> Result<Option<Tensor>> {
    if parts.iter().any(Option::is_none) {
        return Ok(None);
    }
    let parts: Vec<&Tensor> = parts.into_iter().flatten().collect();
    if parts.is_empty() {
        return Ok(None);
    }
    Tensor::concat_rows(&parts).map(Some)
}

impl Batch {
    /// `encodings`, when given, must align one-to-one with `graphs`.
    pub fn new(graphs: &[&AtomGraph], encodings: Option<&[&EncodingBundle]>) -> Result<Self> {
        let owned: Vec<AtomGraph> = graphs.iter().map(|&g| g.clone()).collect();
        let graph = batch(&owned)?;
        let ctx = GraphContext::from_batch(&graph);
        let (mut chemical, mut node_topological, mut edge_topological, mut laplacian) = (None, None, None, None);
        if let Some(enc) = encodings {
            if enc.len() != graphs.len() {
                return Err(Error::Data(format!("{} encoding bundles for {} graphs", enc.len(), graphs.len())));
            }
            chemical = stack(enc.iter().map(|b| b.chemical.as_ref()).collect())?;
            node_topological = stack(enc.iter().map(|b| Some(&b.node_topological)).collect())?;
            edge_topological = stack(enc.iter().map(|b| Some(&b.edge_topological)).collect())?;
            laplacian = stack(enc.iter().map(|b| b.laplacian.as_ref()).collect())?;
        }
        Ok(Self {
            graph,
            ctx,
            chemical,
            node_topological,
            edge_topological,
            laplacian,
            reads: Cell::new(ChannelSet::empty()),
            geometry: OnceLock::new(),
        })
    }

    pub fn graph_count(&self) -> usize {
        self.graph.graph_count()
    }

    pub fn channels_read(&self) -> ChannelSet {
        self.reads.get()
    }

    pub fn reset_reads(&self) {
        self.reads.set(ChannelSet::empty());
    }

    fn mark(&self, c: ChannelSet) {
        self.reads.set(self.reads.get().union(c));
    }

    fn channel(&self, c: ChannelSet, scheme: Scheme) -> Result<&Tensor> {
        self.mark(c);
        let (t, name) = match c {
            ChannelSet::X => (Some(&self.graph.node_features), "X"),
            ChannelSet::E => (Some(&self.graph.edge_features), "E"),
            ChannelSet::L => (self.laplacian.as_ref(), "L"),
            ChannelSet::P => (self.node_topological.as_ref(), "P"),
            ChannelSet::C => (self.chemical.as_ref(), "C"),
            ChannelSet::G => (self.edge_topological.as_ref(), "G"),
            _ => (None, "R"),
        };
        t.ok_or(Error::MissingChannel { channel: name, scheme: scheme.name() })
    }

    fn geometry(&self, basis: &GeometricBasis) -> Result<Tensor> {
        self.mark(ChannelSet::R);
        if let Some((b, t)) = self.geometry.get() {
            if b == basis {
                return Ok(t.clone());
            }
        }
        let t = geometric_edge_embed(&self.ctx, basis)?;
        let _ = self.geometry.set((*basis, t.clone()));
        Ok(t)
    }

    /// Regression targets: `G x t` for graph tasks, `N x t` for node tasks.
    pub fn regression_targets(&self, task: Task) -> Result<Tensor> {
        match task {
            Task::NodeRegression { outputs } => {
                let t = self.graph.node_targets.as_ref().ok_or(Error::Data("batch has no node targets".into()))?;
                if t.cols() != outputs {
                    return Err(Error::Data(format!("node targets have width {}, task expects {outputs}", t.cols())));
                }
                Ok(t.clone())
            }
            Task::GraphRegression { outputs } => {
                let t = &self.graph.graph_targets;
                if t.cols() != outputs {
                    return Err(Error::Data(format!("graph targets have width {}, task expects {outputs}", t.cols())));
                }
                Ok(t.clone())
            }
            Task::GraphClassification { .. } => Err(Error::Data("classification task has no regression targets".into())),
        }
    }

    /// Class labels from the first graph target of each graph.
    pub fn labels(&self, classes: usize) -> Result<Vec<usize>> {
        (0..self.graph.graph_count())
            .map(|g| {
                let y = *self.graph.graph_targets.row(g).first().ok_or(Error::Data("graph has no class label".into()))?;
                if y < 0.0 || y.fract() != 0.0 || y as usize >= classes {
                    return Err(Error::Data(format!("graph {g}: label {y} is not a class index below {classes}")));
                }
                Ok(y as usize)
            })
            .collect()
    }
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let ecfg = config.embedder_config();
        let embedder = Embedder::new(&mut params, ecfg.clone(), &mut rng)?;
        let d_edge = ecfg.d_edge_out();
        let kind = config.mpnn_type.family();
        let layer_cfg = |d_in: usize| MpnnLayerConfig {
            aggregator: config.aggregator.unwrap_or(MpnnLayerConfig::new(kind, d_in, config.hidden_dim, d_edge).aggregator),
            basis: config.basis(),
            ..MpnnLayerConfig::new(kind, d_in, config.hidden_dim, d_edge)
        };
        let mut blocks = Vec::with_capacity(config.num_conv_layers);
        let mut d = ecfg.d_node_out();
        for k in 0..config.num_conv_layers {
            let name = format!("block{k}");
            blocks.push(if config.use_attention {
                Block::Gps(GpsBlock::new(&mut params, &name, layer_cfg(d), config.global_attn_heads, &mut rng)?)
            } else {
                Block::Mpnn(MpnnLayer::new(&mut params, &name, layer_cfg(d), &mut rng)?)
            });
            d = config.hidden_dim;
        }
        let head = Linear::new(&mut params, "head", config.hidden_dim, config.task.output_width(), true, &mut rng);
        Ok(Self { config, params, embedder, blocks, head })
    }

    pub fn count_parameters(&self) -> usize {
        self.params.scalar_count()
    }

    /// Outputs: `G x out` for graph tasks, `N x out` for node tasks.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, batch: &Batch) -> Result<Var> {
        let scheme = self.config.scheme();
        let mut nodes = Vec::new();
        for (c, _) in self.embedder.config.node_channels() {
            let t = batch.channel(c, scheme)?;
            if t.rows() != batch.graph.node_count {
                return Err(Error::Data(format!("channel {c} has {} rows for {} nodes", t.rows(), batch.graph.node_count)));
            }
            nodes.push((c, tape.constant(t.clone())));
        }
        let mut h = self.embedder.embed_nodes(tape, p, &nodes)?;

        let raw = batch.channel(ChannelSet::E, scheme)?;
        let (topo, lpe) = match self.embedder.config.edge_mode() {
            Some(crate::embedder::EdgeMode::Topological) => (Some(batch.channel(ChannelSet::G, scheme)?), None),
            Some(crate::embedder::EdgeMode::SpectralDifference) => (None, Some(batch.channel(ChannelSet::L, scheme)?)),
            None => (None, None),
        };
        let edge_in = self.embedder.edge_inputs(&batch.graph.edges, raw, topo, lpe)?;
        let edges = if edge_in.cols() > 0 {
            let e = tape.constant(edge_in);
            Some(self.embedder.embed_edges(tape, p, e))
        } else {
            None
        };
        let geometry = self.config.basis().map(|b| batch.geometry(&b)).transpose()?;

        for block in &self.blocks {
            h = match block {
                Block::Mpnn(l) => l.forward(tape, p, &batch.ctx, h, edges, geometry.as_ref())?,
                Block::Gps(b) => b.forward(tape, p, &batch.ctx, h, edges, geometry.as_ref())?,
            };
        }
        if self.config.task.is_graph_level() {
            h = pool(tape, &batch.ctx, h, self.config.pooling)?;
        }
        Ok(self.head.forward(tape, p, h))
    }

    /// Mean squared error or mean cross-entropy of `out` against the batch targets.
    pub fn loss(&self, tape: &mut Tape, batch: &Batch, out: Var) -> Result<Var> {
        match self.config.task {
            Task::GraphClassification { classes } => Ok(tape.cross_entropy(out, &batch.labels(classes)?)),
            task => Ok(tape.mse(out, &batch.regression_targets(task)?)),
        }
    }

    pub fn predict(&self, batch: &Batch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let out = self.forward(&mut tape, &p, batch)?;
        Ok(tape.value(out).clone())
    }

    /// Loss and parameter gradients (in store order) on one batch.
    pub fn loss_and_gradients(&self, batch: &Batch) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let out = self.forward(&mut tape, &p, batch)?;
        let loss = self.loss(&mut tape, batch, out)?;
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        Ok((value, p.gradients(&tape, &grads)))
    }
}
