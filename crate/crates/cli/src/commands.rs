use std::fmt::Write as _;
use std::path::Path;

use atomgraph::data::{gen_synthetic_lri, Dataset, Split, Splits};
use atomgraph::encoders::ElementTable;
use atomgraph::hpo::{run_hpo, write_trials, HpoConfig, SearchSpace};
use atomgraph::training::{evaluate, Checkpoint, TrainConfig, TrainOutcome, Trainer};
use atomgraph::{Model, ModelConfig};

use crate::config::{fixed_fields, model_config, widths, RunConfig};
use crate::error::{Category, CliResult, Context};
use crate::manifest::Artifacts;

pub const DATASET: &str = "dataset.jsonl";
pub const CHECKPOINTS: &str = "checkpoints";

fn load(cfg: &RunConfig) -> CliResult<Dataset> {
    let path = cfg.data_path()?;
    Dataset::load(path).map_err(|e| {
        let mut err = crate::error::CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

fn needs_encodings(c: &ModelConfig) -> bool {
    c.use_attention || c.use_encodings
}

/// Encodes on the fly when the model needs channels the file does not carry, then splits.
fn prepare(cfg: &RunConfig, mut ds: Dataset, encode: bool) -> CliResult<Splits> {
    if encode && ds.encodings.is_none() {
        ds.encode(&cfg.encoder, ElementTable::bundled())?;
    }
    ds.ensure_splits(cfg.seed)?;
    Ok(ds.prepare()?)
}

fn losses_csv(out: &TrainOutcome) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for (e, (t, v)) in out.train_losses.iter().zip(&out.val_losses).enumerate() {
        let _ = writeln!(s, "{e},{t:?},{v:?}");
    }
    s
}

fn training_summary(out: &TrainOutcome) -> String {
    format!(
        "epochs_run={}\nbest_epoch={}\nbest_val_loss={:?}\nearly_stopped={}\n",
        out.epochs_run, out.best_epoch, out.best_val, out.early_stopped
    )
}

fn save_model(art: &mut Artifacts, model: &Model, train: Option<&TrainConfig>) -> CliResult<()> {
    Checkpoint::of(model, train, None).save(&art.path("model.json"))?;
    art.record("model.json");
    Ok(())
}

fn test_report(art: &mut Artifacts, model: &Model, data: &Splits, batch_size: usize) -> CliResult<()> {
    let eval = evaluate(model, data.test.examples(), batch_size)?;
    art.write("metrics.txt", eval.metrics.report())?;
    art.write("parity.csv", eval.parity_csv())
}

pub fn encode(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let mut ds = load(cfg)?;
    let report = ds.encode(&cfg.encoder, ElementTable::bundled())?;
    ds.save(&art.path(DATASET))?;
    art.record(DATASET);
    art.write("discard_report.json", serde_json::to_vec_pretty(&report).context(Category::Io, "discard report")?)
}

pub fn train(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let ds = load(cfg)?;
    let config = model_config(cfg, &widths(&ds)?);
    let mut model = Model::new(config, cfg.seed)?;
    let data = prepare(cfg, ds, needs_encodings(&model.config))?;
    cfg.train.validate()?;
    let dir = art.path(CHECKPOINTS);
    std::fs::create_dir_all(&dir).context(Category::Io, format!("cannot create {}", dir.display()))?;
    let out =
        Trainer::new(&cfg.train).with_checkpoints(&dir).train(&mut model, data.train.examples(), data.val.examples(), cfg.train.epochs)?;
    art.record_dir(CHECKPOINTS)?;
    save_model(art, &model, Some(&cfg.train))?;
    art.write("losses.csv", losses_csv(&out))?;
    art.write("training.txt", training_summary(&out))?;
    test_report(art, &model, &data, cfg.train.batch_size)
}

pub fn hpo(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let ds = load(cfg)?;
    let w = widths(&ds)?;
    let space = cfg.hpo.space.clone().unwrap_or_else(|| SearchSpace::standard(w.has_pos));
    let space = SearchSpace { has_pos: w.has_pos, ..space };
    space.validate()?;
    let fixed = fixed_fields(cfg, &w);
    let data = prepare(cfg, ds, true)?;
    let dir = art.path(CHECKPOINTS);
    std::fs::create_dir_all(&dir).context(Category::Io, format!("cannot create {}", dir.display()))?;
    let outcome = run_hpo(&space, &fixed, &HpoConfig { budget: cfg.hpo.budget, seed: cfg.seed }, &data, &cfg.train, Some(&dir))?;
    art.record_dir(CHECKPOINTS)?;
    write_trials(&art.path("trials.jsonl"), &outcome.trials)?;
    art.record("trials.jsonl");
    let best = &outcome.trials[outcome.best];
    let summary = serde_json::json!({ "index": best.index, "seed": best.seed, "val_loss": best.val_loss, "config": best.config });
    art.write("best.json", serde_json::to_vec_pretty(&summary).context(Category::Io, "best trial")?)?;
    art.write("space.toml", space.to_toml()?)?;
    save_model(art, &outcome.model, Some(&cfg.train))?;
    art.write("losses.csv", losses_csv(&outcome.retrain))?;
    art.write("training.txt", training_summary(&outcome.retrain))?;
    test_report(art, &outcome.model, &data, cfg.train.batch_size)
}

fn load_model(cfg: &RunConfig) -> CliResult<Model> {
    let path = cfg.checkpoint_path()?;
    let ck = Checkpoint::load(path).context(Category::Data, format!("cannot load checkpoint {}", path.display()))?;
    Ok(ck.model()?)
}

fn part(data: &Splits, split: Split) -> &atomgraph::data::Part {
    match split {
        Split::Train => &data.train,
        Split::Val => &data.val,
        Split::Test => &data.test,
    }
}

pub fn eval(cfg: &RunConfig, split: Split, art: &mut Artifacts) -> CliResult<()> {
    let model = load_model(cfg)?;
    let data = prepare(cfg, load(cfg)?, needs_encodings(&model.config))?;
    let eval = evaluate(&model, part(&data, split).examples(), cfg.train.batch_size)?;
    art.write("metrics.txt", eval.metrics.report())?;
    art.write("parity.csv", eval.parity_csv())
}

pub fn gen_lri(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let ds = gen_synthetic_lri(&cfg.lri)?;
    ds.save(&art.path(DATASET))?;
    art.record(DATASET);
    Ok(())
}

pub fn report(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let model = load_model(cfg)?;
    let data = prepare(cfg, load(cfg)?, needs_encodings(&model.config))?;
    let c = &model.config;
    let mut s = String::new();
    let _ = writeln!(s, "checkpoint: {}", cfg.checkpoint_path()?.display());
    let _ = writeln!(s, "dataset: {}", cfg.data_path()?.display());
    let _ = writeln!(
        s,
        "model: scheme {}, {} x {}, hidden {}, heads {}, edge embedding {}, pooling {:?}",
        c.scheme(),
        c.num_conv_layers,
        c.mpnn_type,
        c.hidden_dim,
        c.global_attn_heads,
        c.edge_embed_dim,
        c.pooling
    );
    let _ = writeln!(s, "parameters: {}", model.count_parameters());
    let mut test = None;
    for split in [Split::Train, Split::Val, Split::Test] {
        let p = part(&data, split);
        let _ = writeln!(s, "\n[{split:?}] graphs={}", p.graphs.len());
        if p.graphs.is_empty() {
            continue;
        }
        let e = evaluate(&model, p.examples(), cfg.train.batch_size)?;
        s += &e.metrics.report();
        if split == Split::Test {
            test = Some(e);
        }
    }
    art.write("summary.txt", s)?;
    if let Some(e) = test {
        art.write("parity.csv", e.parity_csv())?;
    }
    Ok(())
}

pub fn config_path_display(p: Option<&Path>) -> String {
    p.map(|p| p.display().to_string()).unwrap_or_else(|| "<defaults>".into())
}
