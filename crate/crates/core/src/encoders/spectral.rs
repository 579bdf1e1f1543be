//! Laplacian eigenvector positional encodings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AtomGraph;
use crate::numerics::{sym_eigendecompose, Tensor};

/// Smallest admissible gap between a selected eigenvalue and its neighbors.
pub const EIGENGAP_TOLERANCE: f64 = 1e-9;
const SIGN_TIE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplacianKind {
    /// `D - A`
    #[default]
    Combinatorial,
    /// `I - D^{-1/2} A D^{-1/2}`
    Normalized,
}

pub fn laplacian_matrix(graph: &AtomGraph, kind: LaplacianKind) -> Tensor {
    let n = graph.node_count;
    let adj = graph.adjacency();
    let mut l = Tensor::zeros(n, n);
    for (u, nb) in adj.iter().enumerate() {
        match kind {
            LaplacianKind::Combinatorial => {
                l.set(u, u, nb.len() as f64);
                for &v in nb {
                    l.set(u, v, -1.0);
                }
            }
            LaplacianKind::Normalized => {
                if !nb.is_empty() {
                    l.set(u, u, 1.0);
                }
                for &v in nb {
                    l.set(u, v, -1.0 / ((nb.len() * adj[v].len()) as f64).sqrt());
                }
            }
        }
    }
    l
}

/// Eigenpairs behind [`laplacian_pe`]: the `dim` smallest nonzero eigenvalues and
/// their sign-fixed unit eigenvectors as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianPe {
    pub values: Vec<f64>,
    pub vectors: Tensor,
}

pub fn laplacian_eigenpairs(graph: &AtomGraph, dim: usize, kind: LaplacianKind) -> Result<LaplacianPe> {
    let n = graph.node_count;
    if dim == 0 {
        return Err(Error::InvalidConfig("laplacian encoding dimension must be positive".into()));
    }
    if n < dim + 1 {
        return Err(Error::InvalidGraph(format!("{n} nodes give fewer than {dim} nontrivial eigenvectors")));
    }
    if !graph.is_connected() {
        return Err(Error::InvalidGraph("disconnected graph has no well-defined laplacian encoding".into()));
    }
    let eig = sym_eigendecompose(&laplacian_matrix(graph, kind))?;
    // Connected: exactly one zero eigenvalue, so the nonzero spectrum starts at index 1.
    for i in 1..=dim {
        let below = eig.values[i] - eig.values[i - 1];
        let above = eig.values.get(i + 1).map_or(f64::INFINITY, |v| v - eig.values[i]);
        if below < EIGENGAP_TOLERANCE || above < EIGENGAP_TOLERANCE {
            return Err(Error::InvalidGraph(format!(
                "near-degenerate laplacian eigenvalue {:.6e} (gap below {EIGENGAP_TOLERANCE:e})",
                eig.values[i]
            )));
        }
    }
    let mut vectors = Tensor::zeros(n, dim);
    for c in 0..dim {
        let mut v = eig.vector(c + 1);
        let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let lead = v.iter().position(|x| x.abs() >= max - SIGN_TIE_TOLERANCE).unwrap();
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for (r, x) in v.into_iter().enumerate() {
            vectors.set(r, c, x);
        }
    }
    Ok(LaplacianPe { values: eig.values[1..=dim].to_vec(), vectors })
}

/// `N x dim` encoding. Graphs that are disconnected, too small, or whose selected
/// eigenvalues are near-degenerate are rejected so the caller can omit them.
pub fn laplacian_pe(graph: &AtomGraph, dim: usize, kind: LaplacianKind) -> Result<Tensor> {
    laplacian_eigenpairs(graph, dim, kind).map(|pe| pe.vectors)
}
