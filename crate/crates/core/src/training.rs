//! Mini-batch optimization with early stopping, checkpoints and metrics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoders::EncodingBundle;
use crate::error::{Error, Result};
use crate::graph::AtomGraph;
use crate::model::{Batch, Model, ModelConfig, Task};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Epochs per search trial.
    pub epochs: usize,
    /// Epochs for the final retraining run.
    pub retrain_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Replicas a mini-batch is split across; gradients are averaged before the step.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            retrain_epochs: 200,
            patience: 20,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.epochs == 0 || self.retrain_epochs == 0 || self.patience == 0 {
            return bad("epochs, retrain_epochs and patience must be positive");
        }
        if self.retrain_epochs < self.epochs {
            return bad("retrain_epochs must be at least epochs");
        }
        if self.batch_size == 0 || self.workers == 0 {
            return bad("batch_size and workers must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("optimizer moments must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        Self {
            learning_rate: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn apply(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
            }
        }
    }
}

/// Patience counter. An epoch improves only if it beats the best loss by at least `MIN_IMPROVEMENT`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: Option<usize>,
    pub stale: usize,
}

pub const MIN_IMPROVEMENT: f64 = 1e-12;

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, best_epoch: None, stale: 0 }
    }

    /// Records one validation loss; returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        let improved = match self.best {
            None => true,
            Some(b) => b - loss >= MIN_IMPROVEMENT,
        };
        if improved {
            self.best = Some(loss);
            self.best_epoch = Some(epoch);
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        (improved, self.stale >= self.patience)
    }
}

/// Everything needed to continue a run after the last completed epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub next_epoch: usize,
    pub max_epochs: usize,
    pub optimizer: Adam,
    pub stopping: EarlyStopping,
    pub best_params: Vec<Tensor>,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub stopped: bool,
}

pub const CHECKPOINT_FORMAT: &str = "atomgraph-checkpoint/1";

/// JSON container: model config, named weights and optional run state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub names: Vec<String>,
    pub params: Vec<Tensor>,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub state: Option<TrainState>,
}

impl Checkpoint {
    pub fn of(model: &Model, train_config: Option<&TrainConfig>, state: Option<&TrainState>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            config: model.config.clone(),
            names: model.params.ids().map(|id| model.params.name(id).to_string()).collect(),
            params: model.params.values().to_vec(),
            train_config: train_config.cloned(),
            state: state.cloned(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unsupported checkpoint format `{}`", c.format)));
        }
        Ok(c)
    }

    pub fn model(&self) -> Result<Model> {
        let mut model = Model::new(self.config.clone(), 0)?;
        let names: Vec<&str> = model.params.ids().map(|id| model.params.name(id)).collect();
        if names != self.names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Checkpoint("parameter names do not match the configured architecture".into()));
        }
        model.params.load_values(self.params.clone())?;
        Ok(model)
    }
}

/// Graphs with optional per-graph encodings, aligned by index.
#[derive(Clone, Copy, Debug)]
pub struct Examples<'a> {
    pub graphs: &'a [AtomGraph],
    pub encodings: Option<&'a [EncodingBundle]>,
}

impl<'a> Examples<'a> {
    pub fn new(graphs: &'a [AtomGraph], encodings: Option<&'a [EncodingBundle]>) -> Self {
        Self { graphs, encodings }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn batch(&self, index: &[usize]) -> Result<Batch> {
        let graphs: Vec<&AtomGraph> = index.iter().map(|&i| &self.graphs[i]).collect();
        let enc: Option<Vec<&EncodingBundle>> = self.encodings.map(|e| index.iter().map(|&i| &e[i]).collect());
        Batch::new(&graphs, enc.as_deref())
    }
}

/// Number of loss terms a batch contributes, used to weight partial means.
pub fn loss_weight(task: Task, graphs: &[&AtomGraph]) -> usize {
    match task {
        Task::GraphRegression { outputs } => graphs.len() * outputs,
        Task::NodeRegression { outputs } => graphs.iter().map(|g| g.node_count).sum::<usize>() * outputs,
        Task::GraphClassification { .. } => graphs.len(),
    }
}

/// Mean loss and gradients of `index`, computed on up to `workers` disjoint replicas and
/// recombined with weights proportional to each replica's share of loss terms.
pub fn parallel_gradients(model: &Model, data: Examples<'_>, index: &[usize], workers: usize) -> Result<(f64, Vec<Tensor>)> {
    let workers = workers.clamp(1, index.len().max(1));
    if workers == 1 {
        return model.loss_and_gradients(&data.batch(index)?);
    }
    let chunk = index.len().div_ceil(workers);
    let parts: Vec<(usize, f64, Vec<Tensor>)> = index
        .par_chunks(chunk)
        .map(|part| {
            let graphs: Vec<&AtomGraph> = part.iter().map(|&i| &data.graphs[i]).collect();
            let (loss, grads) = model.loss_and_gradients(&data.batch(part)?)?;
            Ok((loss_weight(model.config.task, &graphs), loss, grads))
        })
        .collect::<Result<_>>()?;
    let total: usize = parts.iter().map(|p| p.0).sum();
    let mut loss = 0.0;
    let mut grads: Vec<Tensor> = model.params.values().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
    for (w, l, g) in parts {
        let f = w as f64 / total as f64;
        loss += f * l;
        for (acc, g) in grads.iter_mut().zip(&g) {
            acc.add_assign(&g.scale(f));
        }
    }
    Ok((loss, grads))
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    let mut z = seed ^ (epoch as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(seed, epoch)));
    order
}

/// Mean loss over `data`, weighted by loss terms per batch.
pub fn mean_loss(model: &Model, data: Examples<'_>, batch_size: usize) -> Result<f64> {
    let index: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    let mut weight = 0usize;
    for part in index.chunks(batch_size.max(1)) {
        let b = data.batch(part)?;
        let mut tape = crate::numerics::Tape::new();
        let p = model.params.bind(&mut tape);
        let out = model.forward(&mut tape, &p, &b)?;
        let loss = model.loss(&mut tape, &b, out)?;
        let graphs: Vec<&AtomGraph> = part.iter().map(|&i| &data.graphs[i]).collect();
        let w = loss_weight(model.config.task, &graphs);
        total += tape.value(loss).item() * w as f64;
        weight += w;
    }
    Ok(total / weight as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub epochs_run: usize,
    pub early_stopped: bool,
    pub checkpoints: Vec<PathBuf>,
}

pub struct Trainer<'a> {
    pub config: &'a TrainConfig,
    /// When set, `epoch_NNNN.json` is written after every epoch.
    pub checkpoint_dir: Option<&'a Path>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: &'a TrainConfig) -> Self {
        Self { config, checkpoint_dir: None }
    }

    pub fn with_checkpoints(mut self, dir: &'a Path) -> Self {
        self.checkpoint_dir = Some(dir);
        self
    }

    pub fn initial_state(&self, model: &Model, max_epochs: usize) -> TrainState {
        TrainState {
            next_epoch: 0,
            max_epochs,
            optimizer: Adam::new(self.config, model.params.values()),
            stopping: EarlyStopping::new(self.config.patience),
            best_params: model.params.values().to_vec(),
            train_losses: Vec::new(),
            val_losses: Vec::new(),
            stopped: false,
        }
    }

    pub fn train(&self, model: &mut Model, train: Examples<'_>, val: Examples<'_>, max_epochs: usize) -> Result<TrainOutcome> {
        let state = self.initial_state(model, max_epochs);
        self.resume(model, train, val, state, None)
    }

    /// Runs epochs from `state.next_epoch`, stopping after `until` epochs total when given.
    /// Best-validation weights are restored only when the run finishes.
    pub fn resume(
        &self,
        model: &mut Model,
        train: Examples<'_>,
        val: Examples<'_>,
        mut state: TrainState,
        until: Option<usize>,
    ) -> Result<TrainOutcome> {
        self.config.validate()?;
        if train.is_empty() || val.is_empty() {
            return Err(Error::Data("training and validation sets must be non-empty".into()));
        }
        let mut checkpoints = Vec::new();
        let limit = until.map_or(state.max_epochs, |u| u.min(state.max_epochs));
        while !state.stopped && state.next_epoch < limit {
            let epoch = state.next_epoch;
            let order = epoch_order(train.len(), self.config.seed, epoch);
            let mut total = 0.0;
            let mut weight = 0usize;
            for (b, part) in order.chunks(self.config.batch_size).enumerate() {
                let (loss, grads) = parallel_gradients(model, train, part, self.config.workers)?;
                if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFiniteLoss { epoch, batch: b });
                }
                state.optimizer.apply(model.params.values_mut(), &grads);
                let graphs: Vec<&AtomGraph> = part.iter().map(|&i| &train.graphs[i]).collect();
                let w = loss_weight(model.config.task, &graphs);
                total += loss * w as f64;
                weight += w;
            }
            let val_loss = mean_loss(model, val, self.config.batch_size)?;
            if !val_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: 0 });
            }
            state.train_losses.push(total / weight as f64);
            state.val_losses.push(val_loss);
            let (improved, stop) = state.stopping.observe(epoch, val_loss);
            if improved {
                state.best_params = model.params.values().to_vec();
            }
            state.stopped = stop;
            state.next_epoch += 1;
            if let Some(dir) = self.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("epoch_{epoch:04}.json"));
                Checkpoint::of(model, Some(self.config), Some(&state)).save(&path)?;
                checkpoints.push(path);
            }
        }
        let finished = state.stopped || state.next_epoch >= state.max_epochs;
        if finished {
            model.params.load_values(state.best_params.clone())?;
        }
        Ok(TrainOutcome {
            best_epoch: state.stopping.best_epoch.unwrap_or(0),
            best_val: state.stopping.best.unwrap_or(f64::INFINITY),
            epochs_run: state.next_epoch,
            early_stopped: state.stopped,
            train_losses: state.train_losses,
            val_losses: state.val_losses,
            checkpoints,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub pearson_r: Option<f64>,
    /// Set when either side has zero variance; `pearson_r` is then 0.
    pub pearson_degenerate: bool,
    pub accuracy: Option<f64>,
}

impl Metrics {
    pub fn regression(truth: &[f64], pred: &[f64]) -> Result<Self> {
        if truth.len() != pred.len() || truth.is_empty() {
            return Err(Error::Data(format!("metrics need equal non-empty inputs, got {} and {}", truth.len(), pred.len())));
        }
        let n = truth.len() as f64;
        let mse = truth.iter().zip(pred).map(|(t, p)| (p - t) * (p - t)).sum::<f64>() / n;
        let mae = truth.iter().zip(pred).map(|(t, p)| (p - t).abs()).sum::<f64>() / n;
        let mt = truth.iter().sum::<f64>() / n;
        let mp = pred.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (t, p) in truth.iter().zip(pred) {
            sxy += (t - mt) * (p - mp);
            sxx += (t - mt) * (t - mt);
            syy += (p - mp) * (p - mp);
        }
        let degenerate = sxx == 0.0 || syy == 0.0;
        let r = if degenerate { 0.0 } else { (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0) };
        Ok(Self { count: truth.len(), mse: Some(mse), mae: Some(mae), pearson_r: Some(r), pearson_degenerate: degenerate, accuracy: None })
    }

    pub fn classification(labels: &[usize], logits: &Tensor) -> Result<Self> {
        if labels.len() != logits.rows() || labels.is_empty() {
            return Err(Error::Data(format!("{} labels for {} logit rows", labels.len(), logits.rows())));
        }
        let hits = labels
            .iter()
            .enumerate()
            .filter(|&(i, &y)| {
                let row = logits.row(i);
                let arg = (0..row.len()).fold(0, |a, j| if row[j] > row[a] { j } else { a });
                arg == y
            })
            .count();
        Ok(Self {
            count: labels.len(),
            mse: None,
            mae: None,
            pearson_r: None,
            pearson_degenerate: false,
            accuracy: Some(hits as f64 / labels.len() as f64),
        })
    }

    /// `name=value` lines.
    pub fn report(&self) -> String {
        let mut s = format!("count={}\n", self.count);
        for (name, v) in [("mse", self.mse), ("mae", self.mae), ("pearson_r", self.pearson_r), ("accuracy", self.accuracy)] {
            if let Some(v) = v {
                let _ = writeln!(s, "{name}={v:?}");
            }
        }
        if self.pearson_r.is_some() {
            let _ = writeln!(s, "pearson_degenerate={}", self.pearson_degenerate);
        }
        s
    }
}

/// Flattened `(true, predicted)` pairs and the metrics computed from them.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub parity: Vec<(f64, f64)>,
}

impl Evaluation {
    pub fn parity_csv(&self) -> String {
        let mut s = String::from("true,predicted\n");
        for (t, p) in &self.parity {
            let _ = writeln!(s, "{t:?},{p:?}");
        }
        s
    }
}

pub fn evaluate(model: &Model, data: Examples<'_>, batch_size: usize) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate an empty set".into()));
    }
    let index: Vec<usize> = (0..data.len()).collect();
    let task = model.config.task;
    let mut parity = Vec::new();
    let mut labels = Vec::new();
    let mut logits = Vec::new();
    for part in index.chunks(batch_size.max(1)) {
        let b = data.batch(part)?;
        let pred = model.predict(&b)?;
        match task {
            Task::GraphClassification { classes } => {
                labels.extend(b.labels(classes)?);
                for r in 0..pred.rows() {
                    let arg = (0..pred.cols()).fold(0, |a, j| if pred.get(r, j) > pred.get(r, a) { j } else { a });
                    parity.push((b.graph.graph_targets.get(r, 0), arg as f64));
                }
                logits.push(pred);
            }
            _ => {
                let truth = b.regression_targets(task)?;
                parity.extend(truth.data().iter().copied().zip(pred.data().iter().copied()));
            }
        }
    }
    let metrics = match task {
        Task::GraphClassification { .. } => {
            let parts: Vec<&Tensor> = logits.iter().collect();
            Metrics::classification(&labels, &Tensor::concat_rows(&parts)?)?
        }
        _ => {
            let (t, p): (Vec<f64>, Vec<f64>) = parity.iter().copied().unzip();
            Metrics::regression(&t, &p)?
        }
    };
    Ok(Evaluation { metrics, parity })
}
