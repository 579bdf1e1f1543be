use std::path::{Path, PathBuf};

use atomgraph::data::{Dataset, SyntheticLriConfig};
use atomgraph::encoders::EncoderConfig;
use atomgraph::hpo::{FixedFields, SearchSpace};
use atomgraph::layers::{Aggregator, PoolMode};
use atomgraph::model::MpnnType;
use atomgraph::training::TrainConfig;
use atomgraph::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Category, CliError, CliResult, Context};

/// Architecture fields of a model; task and input widths come from the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub use_attention: bool,
    pub use_encodings: bool,
    pub mpnn_type: MpnnType,
    pub num_conv_layers: usize,
    pub hidden_dim: usize,
    pub edge_embed_dim: usize,
    pub global_attn_heads: usize,
    pub pooling: PoolMode,
    pub radius_cutoff: f64,
    pub aggregator: Option<Aggregator>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            use_attention: false,
            use_encodings: false,
            mpnn_type: MpnnType::Pna,
            num_conv_layers: 2,
            hidden_dim: 32,
            edge_embed_dim: 0,
            global_attn_heads: 0,
            pooling: PoolMode::Mean,
            radius_cutoff: 5.0,
            aggregator: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpoSection {
    pub budget: usize,
    pub pooling: PoolMode,
    pub radius_cutoff: f64,
    /// Replaces the standard space for the dataset's `has_pos`.
    pub space: Option<SearchSpace>,
}

impl Default for HpoSection {
    fn default() -> Self {
        Self { budget: 10, pooling: PoolMode::Mean, radius_cutoff: 5.0, space: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub encoder: EncoderConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub hpo: HpoSection,
    pub lri: SyntheticLriConfig,
}

impl RunConfig {
    /// Reads a TOML file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).context(Category::Config, format!("cannot read {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).context(Category::Config, format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data, &mut cfg.checkpoint].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn data_path(&self) -> CliResult<&Path> {
        self.data.as_deref().ok_or_else(|| CliError::new(Category::Config, "no dataset given (set `data` or pass --data)"))
    }

    pub fn checkpoint_path(&self) -> CliResult<&Path> {
        self.checkpoint
            .as_deref()
            .ok_or_else(|| CliError::new(Category::Config, "no checkpoint given (set `checkpoint` or pass --checkpoint)"))
    }
}

pub struct Widths {
    pub task: atomgraph::model::Task,
    pub has_pos: bool,
    pub node_feature_dim: usize,
    pub edge_feature_dim: usize,
}

pub fn widths(ds: &Dataset) -> CliResult<Widths> {
    let (Some(task), Some(g)) = (ds.task, ds.graphs.first()) else {
        return Err(CliError::new(Category::Data, "dataset is empty"));
    };
    Ok(Widths { task: task.task, has_pos: task.has_pos, node_feature_dim: g.node_feature_dim(), edge_feature_dim: g.edge_feature_dim() })
}

pub fn model_config(cfg: &RunConfig, w: &Widths) -> ModelConfig {
    let m = &cfg.model;
    ModelConfig {
        use_attention: m.use_attention,
        use_encodings: m.use_encodings,
        mpnn_type: m.mpnn_type,
        num_conv_layers: m.num_conv_layers,
        hidden_dim: m.hidden_dim,
        edge_embed_dim: m.edge_embed_dim,
        global_attn_heads: m.global_attn_heads,
        pooling: m.pooling,
        task: w.task,
        has_pos: w.has_pos,
        node_feature_dim: w.node_feature_dim,
        edge_feature_dim: w.edge_feature_dim,
        lpe_dim: cfg.encoder.lpe_dim,
        radius_cutoff: m.radius_cutoff,
        aggregator: m.aggregator,
    }
}

pub fn fixed_fields(cfg: &RunConfig, w: &Widths) -> FixedFields {
    FixedFields {
        task: w.task,
        node_feature_dim: w.node_feature_dim,
        edge_feature_dim: w.edge_feature_dim,
        lpe_dim: cfg.encoder.lpe_dim,
        pooling: cfg.hpo.pooling,
        radius_cutoff: cfg.hpo.radius_cutoff,
    }
}
