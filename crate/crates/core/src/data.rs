//! Line-delimited graph files, split policy and synthetic generators.
//!
//! File layout: line 1 is a header object
//! `{"format":"atomgraph-graphs","version":1,"task":{...},"has_pos":bool,"node_feature_dim":p,"edge_feature_dim":f}`,
//! then one record per line:
//! `{"n":..,"edges":[[u,v],..],"x":[[..],..],"e":[[..],..],"pos"?,"y_graph"?,"y_node"?,"z"?,"cutoff"?,"split"?,"enc"?}`.
//! An empty file is an empty dataset.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoders::{
    encode_all, validate_encodings, DiscardReport, ElementTable, EncoderConfig, EncodingBundle, EncodingStats, Validity,
};
use crate::error::{Error, Result};
use crate::graph::{distance, AtomGraph};
use crate::model::Task;
use crate::numerics::Tensor;
use crate::training::Examples;

pub const FORMAT: &str = "atomgraph-graphs";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub task: Task,
    pub has_pos: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    task: Task,
    has_pos: bool,
    node_feature_dim: usize,
    edge_feature_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    n: usize,
    edges: Vec<[usize; 2]>,
    x: Vec<Vec<f64>>,
    e: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pos: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_graph: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_node: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cutoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    enc: Option<EncodingBundle>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    /// `None` only for a dataset read from an empty file.
    pub task: Option<TaskDescriptor>,
    pub graphs: Vec<AtomGraph>,
    pub encodings: Option<Vec<EncodingBundle>>,
    pub splits: Option<Vec<Split>>,
}

fn schema(line: usize, path: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Schema { line, path: path.into(), reason: reason.into() }
}

fn tensor(line: usize, field: &str, rows: &[Vec<f64>], expect_rows: usize, width: usize) -> Result<Tensor> {
    if rows.len() != expect_rows {
        return Err(schema(line, field, format!("expected {expect_rows} rows, found {}", rows.len())));
    }
    let mut data = Vec::with_capacity(expect_rows * width);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(schema(line, format!("{field}[{i}]"), format!("expected {width} values, found {}", r.len())));
        }
        data.extend_from_slice(r);
    }
    Tensor::from_vec(expect_rows, width, data)
}

fn parse<T: serde::de::DeserializeOwned>(line: usize, text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(line, if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
    })
}

impl Dataset {
    pub fn new(task: TaskDescriptor, graphs: Vec<AtomGraph>) -> Result<Self> {
        let d = Self { task: Some(task), graphs, encodings: None, splits: None };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    fn check_graph(&self, g: &AtomGraph, line: usize) -> Result<()> {
        g.validate().map_err(|e| schema(line, "<record>", e.to_string()))?;
        let Some(td) = self.task else { return Ok(()) };
        if td.has_pos && g.positions.is_none() {
            return Err(schema(line, "pos", "positions are required by the task descriptor"));
        }
        match td.task {
            Task::GraphRegression { outputs } if g.graph_targets.len() != outputs => {
                Err(schema(line, "y_graph", format!("expected {outputs} targets, found {}", g.graph_targets.len())))
            }
            Task::NodeRegression { outputs } => match &g.node_targets {
                Some(t) if t.cols() == outputs => Ok(()),
                Some(t) => Err(schema(line, "y_node", format!("expected width {outputs}, found {}", t.cols()))),
                None => Err(schema(line, "y_node", "node targets are required by the task descriptor")),
            },
            Task::GraphClassification { classes } => match g.graph_targets.first() {
                Some(&y) if y >= 0.0 && y.fract() == 0.0 && (y as usize) < classes => Ok(()),
                _ => Err(schema(line, "y_graph", format!("expected a class index below {classes}"))),
            },
            _ => Ok(()),
        }
    }

    /// Graph-core invariants, task consistency and split/encoding alignment.
    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.graphs.iter().enumerate() {
            self.check_graph(g, i + 2)?;
        }
        if let Some(first) = self.graphs.first() {
            for (i, g) in self.graphs.iter().enumerate() {
                if g.node_feature_dim() != first.node_feature_dim() || g.edge_feature_dim() != first.edge_feature_dim() {
                    return Err(schema(i + 2, "x", "feature widths differ across graphs"));
                }
            }
        }
        if self.splits.as_ref().is_some_and(|s| s.len() != self.graphs.len()) {
            return Err(Error::Data("split assignment does not cover every graph".into()));
        }
        if self.encodings.as_ref().is_some_and(|e| e.len() != self.graphs.len()) {
            return Err(Error::Data("encodings do not cover every graph".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(std::fs::File::open(path)?))
    }

    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let mut header: Option<Header> = None;
        for (i, line) in lines.by_ref() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let h: Header = parse(i + 1, &line)?;
            if h.format != FORMAT || h.version != VERSION {
                return Err(schema(i + 1, "format", format!("unsupported format {} version {}", h.format, h.version)));
            }
            header = Some(h);
            break;
        }
        let Some(header) = header else { return Ok(Self::default()) };
        let mut ds = Self { task: Some(TaskDescriptor { task: header.task, has_pos: header.has_pos }), ..Self::default() };
        let mut splits = Vec::new();
        let mut encodings = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let no = i + 1;
            let r: Record = parse(no, &line)?;
            let m = r.edges.len();
            let x = tensor(no, "x", &r.x, r.n, header.node_feature_dim)?;
            let e = tensor(no, "e", &r.e, m, header.edge_feature_dim)?;
            let positions = r
                .pos
                .map(|p| {
                    let rows: Vec<Vec<f64>> = p.iter().map(|v| v.to_vec()).collect();
                    tensor(no, "pos", &rows, r.n, 3)
                })
                .transpose()?;
            let node_targets = match (r.y_node, header.task) {
                (Some(y), Task::NodeRegression { outputs }) => Some(tensor(no, "y_node", &y, r.n, outputs)),
                (Some(y), _) => Some(tensor(no, "y_node", &y, r.n, y.first().map_or(0, Vec::len))),
                (None, _) => None,
            }
            .transpose()?;
            if let Some(z) = &r.z {
                if z.len() != r.n {
                    return Err(schema(no, "z", format!("expected {} atomic numbers, found {}", r.n, z.len())));
                }
            }
            let g = AtomGraph {
                node_count: r.n,
                edges: r.edges.iter().map(|&[u, v]| (u, v)).collect(),
                node_features: x,
                edge_features: e,
                positions,
                atomic_numbers: r.z,
                graph_targets: r.y_graph.unwrap_or_default(),
                node_targets,
                cutoff: r.cutoff,
            };
            ds.check_graph(&g, no)?;
            splits.push(r.split);
            encodings.push(r.enc);
            ds.graphs.push(g);
        }
        ds.splits = collect_all(splits, "split")?;
        ds.encodings = collect_all(encodings, "enc")?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        self.validate()?;
        let Some(td) = self.task else {
            if self.graphs.is_empty() {
                return Ok(());
            }
            return Err(Error::Data("a non-empty dataset needs a task descriptor".into()));
        };
        let first = self.graphs.first();
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            task: td.task,
            has_pos: td.has_pos,
            node_feature_dim: first.map_or(0, AtomGraph::node_feature_dim),
            edge_feature_dim: first.map_or(0, AtomGraph::edge_feature_dim),
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for (i, g) in self.graphs.iter().enumerate() {
            let r = Record {
                n: g.node_count,
                edges: g.edges.iter().map(|&(u, v)| [u, v]).collect(),
                x: g.node_features.to_rows(),
                e: g.edge_features.to_rows(),
                pos: g.positions.as_ref().map(|p| (0..p.rows()).map(|r| [p.get(r, 0), p.get(r, 1), p.get(r, 2)]).collect()),
                y_graph: (!g.graph_targets.is_empty()).then(|| g.graph_targets.clone()),
                y_node: g.node_targets.as_ref().map(Tensor::to_rows),
                z: g.atomic_numbers.clone(),
                cutoff: g.cutoff,
                split: self.splits.as_ref().map(|s| s[i]),
                enc: self.encodings.as_ref().map(|e| e[i].clone()),
            };
            serde_json::to_writer(&mut w, &r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Assigns splits unless the file already carried them.
    pub fn ensure_splits(&mut self, seed: u64) -> Result<()> {
        if self.splits.is_none() {
            self.splits = Some(split(self.len(), DEFAULT_FRACTIONS, seed)?);
        }
        Ok(())
    }

    /// Computes encodings for every graph and drops graphs whose encodings are invalid.
    pub fn encode(&mut self, config: &EncoderConfig, table: &ElementTable) -> Result<DiscardReport> {
        let bundles = encode_all(&self.graphs, config, table)?;
        let report = DiscardReport::from_bundles(&bundles);
        let keep: Vec<bool> = bundles.iter().map(|b| validate_encodings(b) == Validity::Keep).collect();
        let mut k = keep.iter();
        self.graphs.retain(|_| *k.next().unwrap());
        if let Some(s) = &mut self.splits {
            let mut k = keep.iter();
            s.retain(|_| *k.next().unwrap());
        }
        self.encodings = Some(bundles.into_iter().zip(&keep).filter(|(_, &k)| k).map(|(b, _)| b).collect());
        Ok(report)
    }

    pub fn subset(&self, which: Split) -> Result<Part> {
        let splits = self.splits.as_ref().ok_or(Error::Data("dataset has no split assignment".into()))?;
        let idx: Vec<usize> = (0..self.len()).filter(|&i| splits[i] == which).collect();
        Ok(Part {
            graphs: idx.iter().map(|&i| self.graphs[i].clone()).collect(),
            encodings: self.encodings.as_ref().map(|e| idx.iter().map(|&i| e[i].clone()).collect()),
        })
    }

    /// Train/val/test parts with encodings standardized by training-split statistics.
    pub fn prepare(&self) -> Result<Splits> {
        let mut train = self.subset(Split::Train)?;
        let mut val = self.subset(Split::Val)?;
        let mut test = self.subset(Split::Test)?;
        let stats = train.encodings.as_ref().map(|e| EncodingStats::fit(&e.iter().collect::<Vec<_>>()));
        if let Some(stats) = &stats {
            for part in [&mut train, &mut val, &mut test] {
                if let Some(e) = &mut part.encodings {
                    *e = e.iter().map(|b| stats.apply(b)).collect();
                }
            }
        }
        Ok(Splits { train, val, test, stats })
    }
}

fn collect_all<T>(items: Vec<Option<T>>, field: &str) -> Result<Option<Vec<T>>> {
    let present = items.iter().filter(|i| i.is_some()).count();
    if present == 0 {
        return Ok(None);
    }
    if present != items.len() {
        let line = items.iter().position(Option::is_none).unwrap() + 2;
        return Err(schema(line, field, "field must be present on every record or on none"));
    }
    Ok(Some(items.into_iter().flatten().collect()))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Part {
    pub graphs: Vec<AtomGraph>,
    pub encodings: Option<Vec<EncodingBundle>>,
}

impl Part {
    pub fn examples(&self) -> Examples<'_> {
        Examples::new(&self.graphs, self.encodings.as_deref())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Part,
    pub val: Part,
    pub test: Part,
    pub stats: Option<EncodingStats>,
}

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.8, 0.1, 0.1];

/// Seeded shuffle, then contiguous slices of sizes `floor(f0 n)`, `floor(f1 n)` and the remainder.
pub fn split(n: usize, fractions: [f64; 3], seed: u64) -> Result<Vec<Split>> {
    if n < 3 {
        return Err(Error::Data(format!("cannot split {n} graphs into three parts")));
    }
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Data(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
    }
    let size = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
    let n_train = size(fractions[0]);
    let n_val = size(fractions[1]).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticLriConfig {
    pub graphs: usize,
    pub min_atoms: usize,
    pub max_atoms: usize,
    pub box_side: f64,
    pub cutoff: f64,
    pub c6: f64,
    pub seed: u64,
    /// Resample placements until the radius graph is connected.
    pub require_connected: bool,
}

impl Default for SyntheticLriConfig {
    fn default() -> Self {
        Self { graphs: 500, min_atoms: 8, max_atoms: 16, box_side: 4.0, cutoff: 2.0, c6: 1.0, seed: 0, require_connected: true }
    }
}

/// Sum of `-c6 / r^6` over unordered pairs with `r >= cutoff`.
pub fn lri_target(positions: &Tensor, cutoff: f64, c6: f64) -> f64 {
    let n = positions.rows();
    let mut y = 0.0;
    for u in 0..n {
        for v in u + 1..n {
            let r = distance(positions, u, v);
            if r >= cutoff {
                y -= c6 / r.powi(6);
            }
        }
    }
    y
}

const MAX_PLACEMENTS: usize = 10_000;

pub fn gen_synthetic_lri(cfg: &SyntheticLriConfig) -> Result<Dataset> {
    if [cfg.cutoff, cfg.c6, cfg.box_side].iter().any(|&v| v.is_nan() || v <= 0.0) {
        return Err(Error::InvalidConfig("cutoff, c6 and box_side must be positive".into()));
    }
    if cfg.min_atoms < 2 || cfg.min_atoms > cfg.max_atoms {
        return Err(Error::InvalidConfig(format!("invalid atom range {}..={}", cfg.min_atoms, cfg.max_atoms)));
    }
    if cfg.box_side * 3f64.sqrt() <= cfg.cutoff {
        return Err(Error::InvalidConfig("no long-range pairs: every pair in the box lies within the cutoff".into()));
    }
    let graphs: Vec<AtomGraph> = (0..cfg.graphs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let n = rng.random_range(cfg.min_atoms..=cfg.max_atoms);
            for _ in 0..MAX_PLACEMENTS {
                let pos: Vec<f64> = (0..3 * n).map(|_| rng.random::<f64>() * cfg.box_side).collect();
                let pos = Tensor::from_vec(n, 3, pos)?;
                let mut g = AtomGraph::from_positions(pos, cfg.cutoff, Tensor::filled(n, 1, 1.0))?;
                if cfg.require_connected && !g.is_connected() {
                    continue;
                }
                g.graph_targets = vec![lri_target(g.positions.as_ref().unwrap(), cfg.cutoff, cfg.c6)];
                return Ok(g);
            }
            Err(Error::InvalidConfig(format!("graph {i}: no connected placement after {MAX_PLACEMENTS} attempts")))
        })
        .collect::<Result<_>>()?;
    if !graphs.is_empty() && graphs.iter().all(|g| g.graph_targets[0] == 0.0) {
        return Err(Error::InvalidConfig("no long-range pairs in any generated graph".into()));
    }
    Dataset::new(TaskDescriptor { task: Task::GraphRegression { outputs: 1 }, has_pos: true }, graphs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_rigid_motion;
    use crate::graph::tests::random_graph;

    fn sizes(s: &[Split]) -> (usize, usize, usize) {
        let c = |w| s.iter().filter(|&&x| x == w).count();
        (c(Split::Train), c(Split::Val), c(Split::Test))
    }

    #[test]
    fn split_sizes_and_determinism() {
        assert_eq!(sizes(&split(10, DEFAULT_FRACTIONS, 1).unwrap()), (8, 1, 1));
        assert_eq!(sizes(&split(1003, DEFAULT_FRACTIONS, 1).unwrap()), (802, 100, 101));
        assert_eq!(split(50, DEFAULT_FRACTIONS, 9).unwrap(), split(50, DEFAULT_FRACTIONS, 9).unwrap());
        assert!(split(2, DEFAULT_FRACTIONS, 0).is_err());
        assert!(split(10, [0.5, 0.1, 0.1], 0).is_err());
    }

    #[test]
    fn empty_input_is_an_empty_dataset() {
        let ds = Dataset::read(&b""[..]).unwrap();
        assert!(ds.is_empty() && ds.task.is_none());
    }

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let graphs: Vec<AtomGraph> = (0..100)
            .map(|_| {
                let n = rng.random_range(1..12);
                let mut g = random_graph(&mut rng, n, 2);
                g.graph_targets = vec![rng.random::<f64>() * 1e-3 - 7.0];
                g
            })
            .collect();
        let mut ds = Dataset::new(TaskDescriptor { task: Task::GraphRegression { outputs: 1 }, has_pos: true }, graphs).unwrap();
        ds.ensure_splits(3).unwrap();
        let mut buf = Vec::new();
        ds.write(&mut buf).unwrap();
        assert_eq!(Dataset::read(&buf[..]).unwrap(), ds);
    }

    #[test]
    fn schema_errors_carry_line_and_path() {
        let head = r#"{"format":"atomgraph-graphs","version":1,"task":{"kind":"graph-regression","outputs":1},"has_pos":true,"node_feature_dim":1,"edge_feature_dim":0}"#;
        let no_pos = format!("{head}\n{}\n", r#"{"n":1,"edges":[],"x":[[1.0]],"e":[],"y_graph":[0.5]}"#);
        match Dataset::read(no_pos.as_bytes()) {
            Err(Error::Schema { line: 2, path, .. }) => assert_eq!(path, "pos"),
            other => panic!("{other:?}"),
        }
        let bad = format!("{head}\n{}\n", r#"{"n":1,"edges":[[0,"a"]],"x":[[1.0]],"e":[[]],"pos":[[0,0,0]]}"#);
        match Dataset::read(bad.as_bytes()) {
            Err(Error::Schema { line: 2, path, .. }) => assert!(path.starts_with("edges[0]"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lri_target_examples() {
        let near = Tensor::from_rows(&[vec![0.0; 3], vec![0.5, 0.0, 0.0]], 3).unwrap();
        assert_eq!(lri_target(&near, 1.0, 1.0), 0.0);
        let far = Tensor::from_rows(&[vec![0.0; 3], vec![2.0, 0.0, 0.0]], 3).unwrap();
        assert_eq!(lri_target(&far, 1.0, 1.0), -1.0 / 64.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pos = Tensor::from_vec(9, 3, (0..27).map(|_| rng.random::<f64>() * 5.0).collect()).unwrap();
        let moved = random_rigid_motion(&mut rng).apply(&pos);
        let a = lri_target(&pos, 1.5, 2.0);
        assert!((lri_target(&moved, 1.5, 2.0) - a).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn generator_is_seeded_and_rejects_tiny_boxes() {
        let cfg = SyntheticLriConfig { graphs: 20, ..SyntheticLriConfig::default() };
        let a = gen_synthetic_lri(&cfg).unwrap();
        assert_eq!(a, gen_synthetic_lri(&cfg).unwrap());
        assert!(a.graphs.iter().all(|g| g.is_connected() && (8..=16).contains(&g.node_count)));
        assert!(gen_synthetic_lri(&SyntheticLriConfig { box_side: 1.0, cutoff: 2.0, ..cfg }).is_err());
    }
}
