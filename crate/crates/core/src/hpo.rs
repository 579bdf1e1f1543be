//! Conditional random search with constraint rejection and argmin selection.

use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Splits;
use crate::embedder::Scheme;
use crate::error::{Error, Result};
use crate::layers::PoolMode;
use crate::model::{Model, ModelConfig, MpnnType, Task};
use crate::training::{evaluate, Metrics, TrainConfig, TrainOutcome, Trainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub num_conv_layers: Vec<usize>,
    pub global_attn_heads: Vec<usize>,
    pub hidden_dim: Vec<usize>,
    pub edge_embed_dim: Vec<usize>,
}

fn grid(lo: usize, hi: usize, step: usize) -> Vec<usize> {
    (lo..=hi).step_by(step).collect()
}

/// Per-scheme ranges keyed by switch state. Empty flag lists disable a branch value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub has_pos: bool,
    pub global_attn_engine: Vec<bool>,
    pub use_encodings: Vec<bool>,
    /// Defaults to every kind admissible for `has_pos`.
    #[serde(default)]
    pub mpnn_types: Vec<MpnnType>,
    pub s1: Branch,
    pub s2: Branch,
    pub s3: Branch,
    pub s4: Branch,
}

impl SearchSpace {
    /// The published grids, with interval bounds read as integer steps of one.
    pub fn standard(has_pos: bool) -> Self {
        let no_attention = |hidden: Vec<usize>, edge: Vec<usize>| Branch {
            num_conv_layers: grid(1, 6, 1),
            global_attn_heads: vec![0],
            hidden_dim: hidden,
            edge_embed_dim: edge,
        };
        let attention = |hidden: Vec<usize>, edge: Vec<usize>| Branch {
            num_conv_layers: grid(1, 3, 1),
            global_attn_heads: vec![2, 4, 8],
            hidden_dim: hidden,
            edge_embed_dim: edge,
        };
        let mut edges = vec![0];
        edges.extend(grid(4, 12, 1));
        Self {
            has_pos,
            global_attn_engine: vec![false, true],
            use_encodings: vec![false, true],
            mpnn_types: MpnnType::admissible(has_pos).to_vec(),
            s1: no_attention(grid(4, 32, 1), vec![0]),
            s2: no_attention(grid(16, 64, 1), edges.clone()),
            s3: attention(grid(8, 48, 8), edges.iter().copied().filter(|&e| e != 7).collect()),
            s4: attention(grid(16, 64, 8), edges),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::SearchSpace(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::SearchSpace(e.to_string()))
    }

    pub fn branch(&self, scheme: Scheme) -> &Branch {
        match scheme {
            Scheme::S1 => &self.s1,
            Scheme::S2 => &self.s2,
            Scheme::S3 => &self.s3,
            Scheme::S4 => &self.s4,
        }
    }

    pub fn mpnn_choices(&self) -> Vec<MpnnType> {
        if self.mpnn_types.is_empty() {
            MpnnType::admissible(self.has_pos).to_vec()
        } else {
            self.mpnn_types.clone()
        }
    }

    pub fn schemes(&self) -> Vec<Scheme> {
        let mut out = Vec::new();
        for &a in &self.global_attn_engine {
            for &e in &self.use_encodings {
                out.push(Scheme::from_switches(a, e));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SearchSpace(m));
        if self.schemes().is_empty() {
            return bad("no switch states enabled".into());
        }
        let kinds = self.mpnn_choices();
        if let Some(k) = kinds.iter().find(|k| !MpnnType::admissible(self.has_pos).contains(k)) {
            return bad(format!("mpnn type {k} is not admissible with has_pos = {}", self.has_pos));
        }
        for scheme in self.schemes() {
            let b = self.branch(scheme);
            let name = scheme.name();
            if b.num_conv_layers.is_empty() || b.hidden_dim.is_empty() || b.edge_embed_dim.is_empty() || b.global_attn_heads.is_empty() {
                return bad(format!("{name}: every range needs at least one value"));
            }
            if b.num_conv_layers.contains(&0) || b.hidden_dim.contains(&0) {
                return bad(format!("{name}: layer counts and hidden widths must be positive"));
            }
            if scheme.uses_attention() {
                if b.global_attn_heads.contains(&0) {
                    return bad(format!("{name}: attention branch cannot offer zero heads"));
                }
                if let Some(h) = b.hidden_dim.iter().find(|&&h| b.global_attn_heads.iter().any(|&k| h % k != 0)) {
                    return bad(format!("{name}: hidden_dim {h} is not divisible by every head count"));
                }
            } else if b.global_attn_heads != [0] {
                return bad(format!("{name}: attention-off branch must fix heads to 0"));
            }
            if scheme == Scheme::S1 && b.edge_embed_dim != [0] {
                return bad(format!("{name}: the plain branch takes raw edges, so edge_embed_dim must be 0"));
            }
        }
        Ok(())
    }
}

/// Data-dependent fields copied into every sampled configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedFields {
    pub task: Task,
    pub node_feature_dim: usize,
    pub edge_feature_dim: usize,
    pub lpe_dim: usize,
    #[serde(default)]
    pub pooling: PoolMode,
    pub radius_cutoff: f64,
}

const MAX_REJECTIONS: usize = 10_000;

/// Uniform draw over the grid of one randomly chosen branch, resampled until valid.
pub fn sample_config<R: Rng + ?Sized>(space: &SearchSpace, fixed: &FixedFields, rng: &mut R) -> Result<ModelConfig> {
    space.validate()?;
    let kinds = space.mpnn_choices();
    for _ in 0..MAX_REJECTIONS {
        let use_attention = *space.global_attn_engine.choose(rng).unwrap();
        let use_encodings = *space.use_encodings.choose(rng).unwrap();
        let b = space.branch(Scheme::from_switches(use_attention, use_encodings));
        let config = ModelConfig {
            use_attention,
            use_encodings,
            mpnn_type: *kinds.choose(rng).unwrap(),
            num_conv_layers: *b.num_conv_layers.choose(rng).unwrap(),
            hidden_dim: *b.hidden_dim.choose(rng).unwrap(),
            edge_embed_dim: *b.edge_embed_dim.choose(rng).unwrap(),
            global_attn_heads: *b.global_attn_heads.choose(rng).unwrap(),
            pooling: fixed.pooling,
            task: fixed.task,
            has_pos: space.has_pos,
            node_feature_dim: fixed.node_feature_dim,
            edge_feature_dim: fixed.edge_feature_dim,
            lpe_dim: fixed.lpe_dim,
            radius_cutoff: fixed.radius_cutoff,
            aggregator: None,
        };
        if config.validate().is_ok() {
            return Ok(config);
        }
    }
    Err(Error::SearchSpace(format!("no feasible configuration after {MAX_REJECTIONS} draws")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    pub config: ModelConfig,
    pub val_loss: Option<f64>,
    pub test: Option<Metrics>,
    pub parameters: usize,
    pub checkpoint: Option<String>,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.val_loss.is_none_or(|v| !v.is_finite())
    }
}

/// Earliest trial with the smallest finite validation loss.
pub fn select_best(trials: &[TrialRecord]) -> Option<usize> {
    let mut best: Option<&TrialRecord> = None;
    for t in trials.iter().filter(|t| !t.failed()) {
        let better = match best {
            None => true,
            Some(b) => t.val_loss < b.val_loss || (t.val_loss == b.val_loss && t.index < b.index),
        };
        if better {
            best = Some(t);
        }
    }
    best.map(|t| t.index)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HpoConfig {
    pub budget: usize,
    pub seed: u64,
}

pub struct HpoOutcome {
    pub trials: Vec<TrialRecord>,
    pub best: usize,
    pub model: Model,
    pub retrain: TrainOutcome,
    pub test: Metrics,
}

fn trial_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng.random()
}

/// Samples every trial configuration up front so the sequence depends only on the seed.
pub fn plan_trials(space: &SearchSpace, fixed: &FixedFields, cfg: &HpoConfig) -> Result<Vec<(u64, ModelConfig)>> {
    if cfg.budget == 0 {
        return Err(Error::SearchSpace("budget must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.budget).map(|i| Ok((trial_seed(cfg.seed, i), sample_config(space, fixed, &mut rng)?))).collect()
}

pub fn run_trial(index: usize, seed: u64, config: ModelConfig, data: &Splits, train: &TrainConfig) -> TrialRecord {
    let mut record =
        TrialRecord { index, seed, config: config.clone(), val_loss: None, test: None, parameters: 0, checkpoint: None, error: None };
    let run = || -> Result<(f64, Metrics, usize)> {
        let mut model = Model::new(config, seed)?;
        let cfg = TrainConfig { seed, workers: 1, ..train.clone() };
        let outcome = Trainer::new(&cfg).train(&mut model, data.train.examples(), data.val.examples(), cfg.epochs)?;
        let test = evaluate(&model, data.test.examples(), cfg.batch_size)?.metrics;
        Ok((outcome.best_val, test, model.count_parameters()))
    };
    match run() {
        Ok((val, test, params)) => {
            record.val_loss = Some(val);
            record.test = Some(test);
            record.parameters = params;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

pub fn write_trials(path: &Path, trials: &[TrialRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in trials {
        serde_json::to_writer(&mut w, t)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRecord>> {
    std::fs::read_to_string(path)?.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

/// Trains every planned trial for `train.epochs` (concurrently), selects the argmin, then
/// retrains the winner for `train.retrain_epochs` with early stopping.
pub fn run_hpo(
    space: &SearchSpace,
    fixed: &FixedFields,
    cfg: &HpoConfig,
    data: &Splits,
    train: &TrainConfig,
    retrain_checkpoints: Option<&Path>,
) -> Result<HpoOutcome> {
    train.validate()?;
    let plan = plan_trials(space, fixed, cfg)?;
    let trials: Vec<TrialRecord> =
        plan.into_par_iter().enumerate().map(|(i, (seed, config))| run_trial(i, seed, config, data, train)).collect();
    let Some(best) = select_best(&trials) else {
        let summary = trials.iter().filter_map(|t| t.error.as_deref()).take(3).collect::<Vec<_>>().join("; ");
        return Err(Error::AllTrialsFailed { count: trials.len(), summary });
    };
    let winner = &trials[best];
    let mut model = Model::new(winner.config.clone(), winner.seed)?;
    let retrain_cfg = TrainConfig { seed: winner.seed, ..train.clone() };
    let mut trainer = Trainer::new(&retrain_cfg);
    if let Some(dir) = retrain_checkpoints {
        trainer = trainer.with_checkpoints(dir);
    }
    let retrain = trainer.train(&mut model, data.train.examples(), data.val.examples(), retrain_cfg.retrain_epochs)?;
    let test = evaluate(&model, data.test.examples(), retrain_cfg.batch_size)?.metrics;
    Ok(HpoOutcome { trials, best, model, retrain, test })
}
