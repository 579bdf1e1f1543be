//! Chemical, topological and spectral channels computed once per graph.

pub mod elements;
pub mod spectral;
pub mod standardize;
pub mod topology;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{check_permutation, AtomGraph};
use crate::numerics::Tensor;

pub use elements::{chemical_descriptors, ElementTable};
pub use spectral::{laplacian_eigenpairs, laplacian_matrix, laplacian_pe, LaplacianKind, LaplacianPe};
pub use standardize::{standardize, ColumnStats, STD_FLOOR};
pub use topology::{edge_topological_encodings, node_topological_encodings, EDGE_COLUMNS, NODE_COLUMNS};

pub const CHEMICAL_WIDTH: usize = elements::PROPERTY_COUNT;
pub const NODE_TOPO_WIDTH: usize = 9;
pub const EDGE_TOPO_WIDTH: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub lpe_dim: usize,
    #[serde(default)]
    pub laplacian: LaplacianKind,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { lpe_dim: 2, laplacian: LaplacianKind::Combinatorial }
    }
}

/// Channels of one graph. `chemical` is absent when the graph carries no atomic
/// numbers, `laplacian` when the graph had to be omitted for its spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingBundle {
    /// C: `N x 15`
    pub chemical: Option<Tensor>,
    /// P: `N x 9`
    pub node_topological: Tensor,
    /// G: `|E| x 4`
    pub edge_topological: Tensor,
    /// L: `N x d_l`
    pub laplacian: Option<Tensor>,
    /// Set when a sub-computation flagged the graph.
    pub invalid: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Validity {
    Keep,
    Discard(String),
}

impl EncodingBundle {
    /// Reorders node-aligned channels as [`AtomGraph::permute`] does; edge rows keep their order.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.node_topological.rows())?;
        let rows = |t: &Tensor| {
            let mut out = Tensor::zeros(t.rows(), t.cols());
            for (old, &new) in perm.iter().enumerate() {
                out.row_mut(new).copy_from_slice(t.row(old));
            }
            out
        };
        Ok(Self {
            chemical: self.chemical.as_ref().map(rows),
            node_topological: rows(&self.node_topological),
            edge_topological: self.edge_topological.clone(),
            laplacian: self.laplacian.as_ref().map(rows),
            invalid: self.invalid.clone(),
        })
    }
}

/// Computes every channel for `graph`. Only unsupported elements are hard errors;
/// spectral omission and non-finite metrics mark the bundle for discarding.
pub fn encode_graph(graph: &AtomGraph, config: &EncoderConfig, table: &ElementTable) -> Result<EncodingBundle> {
    let chemical = graph.atomic_numbers.as_deref().map(|z| chemical_descriptors(z, table)).transpose()?;
    let (laplacian, invalid) = match laplacian_pe(graph, config.lpe_dim, config.laplacian) {
        Ok(l) => (Some(l), None),
        Err(Error::InvalidGraph(reason)) => (None, Some(format!("laplacian encodings: {reason}"))),
        Err(e) => return Err(e),
    };
    Ok(EncodingBundle {
        chemical,
        node_topological: node_topological_encodings(graph),
        edge_topological: edge_topological_encodings(graph),
        laplacian,
        invalid,
    })
}

pub fn encode_all(graphs: &[AtomGraph], config: &EncoderConfig, table: &ElementTable) -> Result<Vec<EncodingBundle>> {
    graphs.par_iter().map(|g| encode_graph(g, config, table)).collect()
}

pub fn validate_encodings(bundle: &EncodingBundle) -> Validity {
    if let Some(reason) = &bundle.invalid {
        return Validity::Discard(reason.clone());
    }
    let channels = [
        ("chemical descriptors", bundle.chemical.as_ref()),
        ("node encodings", Some(&bundle.node_topological)),
        ("edge encodings", Some(&bundle.edge_topological)),
        ("laplacian encodings", bundle.laplacian.as_ref()),
    ];
    for (name, t) in channels {
        if t.is_some_and(|t| !t.is_finite()) {
            return Validity::Discard(name.to_string());
        }
    }
    Validity::Keep
}

/// Discard counts keyed by reason.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscardReport {
    pub total: usize,
    pub kept: usize,
    pub reasons: BTreeMap<String, usize>,
}

impl DiscardReport {
    pub fn from_bundles(bundles: &[EncodingBundle]) -> Self {
        let mut report = Self { total: bundles.len(), ..Self::default() };
        for b in bundles {
            match validate_encodings(b) {
                Validity::Keep => report.kept += 1,
                Validity::Discard(reason) => *report.reasons.entry(reason).or_default() += 1,
            }
        }
        report
    }
}

/// Training-split statistics for every channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingStats {
    pub chemical: Option<ColumnStats>,
    pub node_topological: ColumnStats,
    pub edge_topological: ColumnStats,
    pub laplacian: Option<ColumnStats>,
}

impl EncodingStats {
    /// Fits on the row union of `train` bundles; all must be valid.
    pub fn fit(train: &[&EncodingBundle]) -> Self {
        let fit = |sel: &dyn Fn(&EncodingBundle) -> Option<&Tensor>| {
            let parts: Vec<&Tensor> = train.iter().filter_map(|b| sel(b)).collect();
            (!parts.is_empty()).then(|| ColumnStats::fit_parts(&parts))
        };
        Self {
            chemical: fit(&|b| b.chemical.as_ref()),
            node_topological: fit(&|b| Some(&b.node_topological))
                .unwrap_or_else(|| ColumnStats { mean: vec![0.0; NODE_TOPO_WIDTH], std: vec![1.0; NODE_TOPO_WIDTH] }),
            edge_topological: fit(&|b| Some(&b.edge_topological))
                .unwrap_or_else(|| ColumnStats { mean: vec![0.0; EDGE_TOPO_WIDTH], std: vec![1.0; EDGE_TOPO_WIDTH] }),
            laplacian: fit(&|b| b.laplacian.as_ref()),
        }
    }

    pub fn apply(&self, bundle: &EncodingBundle) -> EncodingBundle {
        let opt = |s: &Option<ColumnStats>, t: &Option<Tensor>| match (s, t) {
            (Some(s), Some(t)) => Some(s.apply(t)),
            (_, t) => t.clone(),
        };
        EncodingBundle {
            chemical: opt(&self.chemical, &bundle.chemical),
            node_topological: self.node_topological.apply(&bundle.node_topological),
            edge_topological: self.edge_topological.apply(&bundle.edge_topological),
            laplacian: opt(&self.laplacian, &bundle.laplacian),
            invalid: bundle.invalid.clone(),
        }
    }
}
