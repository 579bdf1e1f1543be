use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use atomgraph::data::{split, Dataset, TaskDescriptor, DEFAULT_FRACTIONS};
use atomgraph::encoders::{encode_graph, validate_encodings, ElementTable, EncoderConfig, Validity};
use atomgraph::model::{MpnnType, Task};
use atomgraph::training::{evaluate, Checkpoint};
use atomgraph::{AtomGraph, Model, ModelConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn atomgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atomgraph")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = atomgraph(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn molecule(rng: &mut ChaCha8Rng) -> AtomGraph {
    loop {
        let n = rng.random_range(4..=8);
        let pos = Tensor::from_vec(n, 3, (0..3 * n).map(|_| rng.random_range(0.0..3.0)).collect()).unwrap();
        let z: Vec<u32> = (0..n).map(|_| rng.random_range(1..=9)).collect();
        let x = Tensor::column(&z.iter().map(|&z| z as f64 / 9.0).collect::<Vec<_>>());
        let Ok(mut g) = AtomGraph::from_positions(pos, 2.5, x) else { continue };
        g.atomic_numbers = Some(z.clone());
        let bundle = encode_graph(&g, &EncoderConfig::default(), ElementTable::bundled()).unwrap();
        if !g.is_connected() || validate_encodings(&bundle) != Validity::Keep {
            continue;
        }
        g.graph_targets = vec![z.iter().map(|&z| z as f64).sum::<f64>() / n as f64];
        return g;
    }
}

fn dataset(count: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs = (0..count).map(|_| molecule(&mut rng)).collect();
    let mut ds = Dataset::new(TaskDescriptor { task: Task::GraphRegression { outputs: 1 }, has_pos: true }, graphs).unwrap();
    ds.splits = Some(split(count, DEFAULT_FRACTIONS, seed).unwrap());
    ds
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_TRAIN: &str = "[train]\nepochs = 3\nretrain_epochs = 3\npatience = 3\nbatch_size = 8\n";

#[test]
fn usage_and_config_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(atomgraph(&["train", "--bogus"]).status.code(), Some(2));
    let missing = dir.path().join("absent.toml");
    assert_eq!(atomgraph(&["train", "--config", s(&missing)]).status.code(), Some(3));
    let cfg = write_config(dir.path(), "unknown_key = 1\n");
    assert_eq!(atomgraph(&["train", "--config", s(&cfg)]).status.code(), Some(3));
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"format\":\"atomgraph-graphs\",\"version\":1}\n").unwrap();
    let out = dir.path().join("out");
    assert_eq!(atomgraph(&["encode", "--data", s(&bad), "--out", s(&out)]).status.code(), Some(4));
    assert!(!out.join("manifest.json").exists());
    let help = String::from_utf8(ok(&["--help"]).stdout).unwrap();
    assert!(help.contains("Exit codes") && help.contains("4  data error"));
}

#[test]
fn eval_of_exact_model_reports_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = dataset(30, 1);
    let config = ModelConfig {
        use_attention: false,
        use_encodings: false,
        mpnn_type: MpnnType::Pna,
        num_conv_layers: 2,
        hidden_dim: 8,
        edge_embed_dim: 0,
        global_attn_heads: 0,
        pooling: Default::default(),
        task: Task::GraphRegression { outputs: 1 },
        has_pos: true,
        node_feature_dim: 1,
        edge_feature_dim: 1,
        lpe_dim: 2,
        radius_cutoff: 5.0,
        aggregator: None,
    };
    let model = Model::new(config, 4).unwrap();
    let parity = evaluate(&model, ds.prepare().unwrap().test.examples(), 32).unwrap().parity;
    let splits = ds.splits.clone().unwrap();
    let test: Vec<usize> = (0..ds.len()).filter(|&i| splits[i] == atomgraph::data::Split::Test).collect();
    for (&i, (_, pred)) in test.iter().zip(&parity) {
        ds.graphs[i].graph_targets = vec![*pred];
    }
    let (data, ck, out) = (dir.path().join("d.jsonl"), dir.path().join("m.json"), dir.path().join("eval"));
    ds.save(&data).unwrap();
    Checkpoint::of(&model, None, None).save(&ck).unwrap();
    ok(&["eval", "--data", s(&data), "--checkpoint", s(&ck), "--out", s(&out)]);
    let metrics = std::fs::read_to_string(out.join("metrics.txt")).unwrap();
    let value = |k: &str| -> f64 { metrics.lines().find_map(|l| l.strip_prefix(&format!("{k}="))).unwrap().parse().unwrap() };
    assert_eq!(value("mse"), 0.0);
    assert!((value("pearson_r") - 1.0).abs() <= 1e-12, "{metrics}");
    assert!(std::fs::read_to_string(out.join("parity.csv")).unwrap().starts_with("true,predicted\n"));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["artifacts"], serde_json::json!(["metrics.txt", "parity.csv"]));
}

#[test]
fn plain_scheme_ignores_supplied_encodings() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    dataset(30, 2).save(&raw).unwrap();
    let enc = dir.path().join("enc");
    ok(&["encode", "--data", s(&raw), "--out", s(&enc)]);
    let encoded = Dataset::load(&enc.join("dataset.jsonl")).unwrap();
    assert!(encoded.encodings.is_some());
    assert_eq!(encoded.len(), 30);
    let cfg = write_config(dir.path(), &format!("[model]\nmpnn_type = \"CGCNN\"\nhidden_dim = 8\n{SMALL_TRAIN}"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["train", "--config", s(&cfg), "--data", s(&raw), "--seed", "5", "--out", s(&a)]);
    ok(&["train", "--config", s(&cfg), "--data", s(&enc.join("dataset.jsonl")), "--seed", "5", "--out", s(&b)]);
    for f in ["metrics.txt", "losses.csv", "parity.csv", "model.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<&str> = manifest["artifacts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(listed.contains(&"checkpoints/epoch_0000.json") && listed.contains(&"metrics.txt"));
    for name in &listed {
        assert!(a.join(name).exists(), "{name}");
    }
    let report = dir.path().join("report");
    ok(&["report", "--data", s(&raw), "--checkpoint", s(&a.join("model.json")), "--out", s(&report)]);
    let summary = std::fs::read_to_string(report.join("summary.txt")).unwrap();
    assert!(summary.contains("scheme S1") && summary.contains("[Test]"), "{summary}");
}

#[test]
fn hpo_replay_gives_identical_trial_stores() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    dataset(20, 3).save(&data).unwrap();
    let space = "[hpo.space]\nhas_pos = true\nglobal_attn_engine = [false, true]\nuse_encodings = [false, true]\n\
                 mpnn_types = [\"PNA\", \"SchNet\", \"DimeNet\"]\n\
                 s1 = { num_conv_layers = [1], global_attn_heads = [0], hidden_dim = [4, 8], edge_embed_dim = [0] }\n\
                 s2 = { num_conv_layers = [1], global_attn_heads = [0], hidden_dim = [16], edge_embed_dim = [0, 4] }\n\
                 s3 = { num_conv_layers = [1], global_attn_heads = [2, 4], hidden_dim = [8], edge_embed_dim = [0, 4] }\n\
                 s4 = { num_conv_layers = [1], global_attn_heads = [2, 4, 8], hidden_dim = [16], edge_embed_dim = [0, 4] }\n";
    let cfg = write_config(dir.path(), &format!("{SMALL_TRAIN}[hpo]\nbudget = 5\n{space}"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["hpo", "--config", s(&cfg), "--data", s(&data), "--seed", "11", "--workers", "2", "--out", s(out)]);
    }
    let trials = std::fs::read_to_string(a.join("trials.jsonl")).unwrap();
    assert_eq!(trials.lines().count(), 5);
    for f in ["trials.jsonl", "best.json", "model.json", "metrics.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn gen_lri_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[lri]\ngraphs = 12\nc6 = 64.0\n");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&["gen-lri", "--config", s(&cfg), "--seed", "1", "--out", s(&a)]);
    ok(&["gen-lri", "--config", s(&cfg), "--seed", "1", "--out", s(&b)]);
    ok(&["gen-lri", "--config", s(&cfg), "--seed", "2", "--out", s(&c)]);
    let read = |d: &Path| std::fs::read(d.join("dataset.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(Dataset::load(&a.join("dataset.jsonl")).unwrap().len(), 12);
}
