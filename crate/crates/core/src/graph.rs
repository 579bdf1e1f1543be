//! Atomistic graph model, radius-cutoff construction, relabeling and batching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// One molecule or material. Edges are undirected and stored once with `u < v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomGraph {
    pub node_count: usize,
    pub edges: Vec<(usize, usize)>,
    /// `N x p`
    pub node_features: Tensor,
    /// `|E| x f`, `f` may be zero.
    pub edge_features: Tensor,
    /// `N x 3`
    pub positions: Option<Tensor>,
    pub atomic_numbers: Option<Vec<u32>>,
    pub graph_targets: Vec<f64>,
    /// `N x t`
    pub node_targets: Option<Tensor>,
    /// Set when the edges came from [`build_radius_graph`].
    pub cutoff: Option<f64>,
}

/// Edge list produced by [`build_radius_graph`], with one distance per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct RadiusEdges {
    pub edges: Vec<(usize, usize)>,
    pub distances: Vec<f64>,
}

pub fn distance(positions: &Tensor, u: usize, v: usize) -> f64 {
    let a = positions.row(u);
    let b = positions.row(v);
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// All pairs `u < v` with `|r_u - r_v| < cutoff`, in lexicographic order.
pub fn build_radius_graph(positions: &Tensor, cutoff: f64) -> Result<RadiusEdges> {
    if positions.cols() != 3 {
        return Err(Error::Shape { op: "build_radius_graph", detail: format!("positions have {} columns", positions.cols()) });
    }
    if positions.rows() == 0 {
        return Err(Error::InvalidGraph("radius graph needs at least one node".into()));
    }
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(Error::InvalidGraph(format!("cutoff must be positive and finite, got {cutoff}")));
    }
    if let Some(node) = (0..positions.rows()).find(|&i| !positions.row(i).iter().all(|v| v.is_finite())) {
        return Err(Error::NonFiniteCoordinate { node });
    }
    let n = positions.rows();
    let mut edges = Vec::new();
    let mut distances = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let d = distance(positions, u, v);
            if d < cutoff {
                edges.push((u, v));
                distances.push(d);
            }
        }
    }
    Ok(RadiusEdges { edges, distances })
}

impl AtomGraph {
    /// A graph with the given topology and features and no targets.
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>, node_features: Tensor, edge_features: Tensor) -> Result<Self> {
        let g = Self {
            node_count,
            edges,
            node_features,
            edge_features,
            positions: None,
            atomic_numbers: None,
            graph_targets: Vec::new(),
            node_targets: None,
            cutoff: None,
        };
        g.validate()?;
        Ok(g)
    }

    /// Graph on bare topology: one constant node feature and no edge features.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let edges = edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect::<Vec<_>>();
        let m = edges.len();
        Self::new(node_count, edges, Tensor::filled(node_count, 1, 1.0), Tensor::zeros(m, 0))
    }

    /// Radius graph over `positions`; the interatomic distance is the only edge feature.
    pub fn from_positions(positions: Tensor, cutoff: f64, node_features: Tensor) -> Result<Self> {
        let radius = build_radius_graph(&positions, cutoff)?;
        let n = positions.rows();
        let g = Self {
            node_count: n,
            edge_features: Tensor::column(&radius.distances),
            edges: radius.edges,
            node_features,
            positions: Some(positions),
            atomic_numbers: None,
            graph_targets: Vec::new(),
            node_targets: None,
            cutoff: Some(cutoff),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_feature_dim(&self) -> usize {
        self.node_features.cols()
    }

    pub fn edge_feature_dim(&self) -> usize {
        self.edge_features.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.node_count;
        let mut seen = std::collections::HashSet::with_capacity(self.edges.len());
        for (k, &(u, v)) in self.edges.iter().enumerate() {
            if u == v {
                return Err(Error::InvalidGraph(format!("edge {k} is a self-loop on node {u}")));
            }
            if u > v {
                return Err(Error::InvalidGraph(format!("edge {k} ({u},{v}) is not stored with u < v")));
            }
            if v >= n {
                return Err(Error::InvalidGraph(format!("edge {k} ({u},{v}) references a node >= {n}")));
            }
            if !seen.insert((u, v)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({u},{v})")));
            }
        }
        if self.node_features.rows() != n {
            return Err(Error::InvalidGraph(format!("{} node feature rows for {n} nodes", self.node_features.rows())));
        }
        if self.edge_features.rows() != self.edges.len() {
            return Err(Error::InvalidGraph(format!("{} edge feature rows for {} edges", self.edge_features.rows(), self.edges.len())));
        }
        if let Some(z) = &self.atomic_numbers {
            if z.len() != n {
                return Err(Error::InvalidGraph(format!("{} atomic numbers for {n} nodes", z.len())));
            }
        }
        if let Some(t) = &self.node_targets {
            if t.rows() != n {
                return Err(Error::InvalidGraph(format!("{} node target rows for {n} nodes", t.rows())));
            }
        }
        if let Some(pos) = &self.positions {
            if pos.shape() != (n, 3) {
                return Err(Error::InvalidGraph(format!("positions have shape {:?}, expected ({n}, 3)", pos.shape())));
            }
            if let Some(node) = (0..n).find(|&i| !pos.row(i).iter().all(|v| v.is_finite())) {
                return Err(Error::NonFiniteCoordinate { node });
            }
            if let Some(rc) = self.cutoff {
                if let Some(&(u, v)) = self.edges.iter().find(|&&(u, v)| distance(pos, u, v) >= rc) {
                    return Err(Error::InvalidGraph(format!("edge ({u},{v}) is not shorter than the cutoff {rc}")));
                }
            }
        }
        Ok(())
    }

    /// Neighbor lists in ascending node order.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.node_count == 0 {
            return false;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.node_count
    }

    /// Relabels node `i` as `perm[i]`. Edge order and edge rows are preserved;
    /// endpoints are re-canonicalized to `u < v`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.node_count)?;
        let permute_rows = |t: &Tensor| {
            let mut out = Tensor::zeros(t.rows(), t.cols());
            for (old, &new) in perm.iter().enumerate() {
                out.row_mut(new).copy_from_slice(t.row(old));
            }
            out
        };
        let edges = self
            .edges
            .iter()
            .map(|&(u, v)| {
                let (a, b) = (perm[u], perm[v]);
                (a.min(b), a.max(b))
            })
            .collect();
        let atomic_numbers = self.atomic_numbers.as_ref().map(|z| {
            let mut out = vec![0; z.len()];
            for (old, &new) in perm.iter().enumerate() {
                out[new] = z[old];
            }
            out
        });
        Ok(Self {
            node_count: self.node_count,
            edges,
            node_features: permute_rows(&self.node_features),
            edge_features: self.edge_features.clone(),
            positions: self.positions.as_ref().map(permute_rows),
            atomic_numbers,
            graph_targets: self.graph_targets.clone(),
            node_targets: self.node_targets.as_ref().map(permute_rows),
            cutoff: self.cutoff,
        })
    }
}

pub fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::InvalidPermutation { n, reason: format!("length {} != {n}", perm.len()) });
    }
    let mut hit = vec![false; n];
    for &p in perm {
        if p >= n {
            return Err(Error::InvalidPermutation { n, reason: format!("image {p} out of range") });
        }
        if hit[p] {
            return Err(Error::InvalidPermutation { n, reason: format!("image {p} appears twice") });
        }
        hit[p] = true;
    }
    Ok(())
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Disjoint union of several graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchedGraph {
    pub node_count: usize,
    pub edges: Vec<(usize, usize)>,
    pub node_features: Tensor,
    pub edge_features: Tensor,
    pub positions: Option<Tensor>,
    pub atomic_numbers: Option<Vec<u32>>,
    /// `G x t`
    pub graph_targets: Tensor,
    pub node_targets: Option<Tensor>,
    /// Source graph of every node; non-decreasing.
    pub graph_index: Vec<usize>,
    /// `G + 1` prefix offsets into the node rows.
    pub node_offsets: Vec<usize>,
    /// `G + 1` prefix offsets into the edge rows.
    pub edge_offsets: Vec<usize>,
    pub cutoffs: Vec<Option<f64>>,
}

impl BatchedGraph {
    pub fn graph_count(&self) -> usize {
        self.node_offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Splits the union back into its members.
    pub fn unbatch(&self) -> Vec<AtomGraph> {
        (0..self.graph_count())
            .map(|g| {
                let (n0, n1) = (self.node_offsets[g], self.node_offsets[g + 1]);
                let (e0, e1) = (self.edge_offsets[g], self.edge_offsets[g + 1]);
                AtomGraph {
                    node_count: n1 - n0,
                    edges: self.edges[e0..e1].iter().map(|&(u, v)| (u - n0, v - n0)).collect(),
                    node_features: self.node_features.slice_rows(n0, n1 - n0),
                    edge_features: self.edge_features.slice_rows(e0, e1 - e0),
                    positions: self.positions.as_ref().map(|p| p.slice_rows(n0, n1 - n0)),
                    atomic_numbers: self.atomic_numbers.as_ref().map(|z| z[n0..n1].to_vec()),
                    graph_targets: self.graph_targets.row(g).to_vec(),
                    node_targets: self.node_targets.as_ref().map(|t| t.slice_rows(n0, n1 - n0)),
                    cutoff: self.cutoffs[g],
                }
            })
            .collect()
    }
}

/// Disjoint union with node indices offset per member. All members must agree on
/// feature widths, target arities and which optional fields are present.
pub fn batch(graphs: &[AtomGraph]) -> Result<BatchedGraph> {
    let first = graphs.first();
    let p = first.map_or(0, |g| g.node_feature_dim());
    let f = first.map_or(0, |g| g.edge_feature_dim());
    let t = first.map_or(0, |g| g.graph_targets.len());
    let has_pos = first.is_some_and(|g| g.positions.is_some());
    let has_z = first.is_some_and(|g| g.atomic_numbers.is_some());
    let node_t = first.and_then(|g| g.node_targets.as_ref().map(|x| x.cols()));

    let mismatch = |index: usize, reason: String| Error::BatchMismatch { index, reason };
    for (i, g) in graphs.iter().enumerate() {
        if g.node_feature_dim() != p {
            return Err(mismatch(i, format!("node feature width {} != {p}", g.node_feature_dim())));
        }
        if g.edge_feature_dim() != f {
            return Err(mismatch(i, format!("edge feature width {} != {f}", g.edge_feature_dim())));
        }
        if g.graph_targets.len() != t {
            return Err(mismatch(i, format!("graph target arity {} != {t}", g.graph_targets.len())));
        }
        if g.positions.is_some() != has_pos {
            return Err(mismatch(i, "positions present in some members only".into()));
        }
        if g.atomic_numbers.is_some() != has_z {
            return Err(mismatch(i, "atomic numbers present in some members only".into()));
        }
        if g.node_targets.as_ref().map(|x| x.cols()) != node_t {
            return Err(mismatch(i, "node target arity differs".into()));
        }
    }

    let total_nodes: usize = graphs.iter().map(|g| g.node_count).sum();
    let mut edges = Vec::new();
    let mut graph_index = Vec::with_capacity(total_nodes);
    let mut node_offsets = vec![0];
    let mut edge_offsets = vec![0];
    let mut z = has_z.then(Vec::new);
    for (gi, g) in graphs.iter().enumerate() {
        let off = *node_offsets.last().unwrap();
        edges.extend(g.edges.iter().map(|&(u, v)| (u + off, v + off)));
        graph_index.extend(std::iter::repeat_n(gi, g.node_count));
        node_offsets.push(off + g.node_count);
        edge_offsets.push(edges.len());
        if let (Some(all), Some(zz)) = (z.as_mut(), g.atomic_numbers.as_ref()) {
            all.extend_from_slice(zz);
        }
    }
    let cat = |sel: &dyn Fn(&AtomGraph) -> &Tensor, cols: usize| -> Result<Tensor> {
        if graphs.is_empty() {
            return Ok(Tensor::zeros(0, cols));
        }
        Tensor::concat_rows(&graphs.iter().map(sel).collect::<Vec<_>>())
    };
    let node_features = cat(&|g| &g.node_features, p)?;
    let edge_features = cat(&|g| &g.edge_features, f)?;
    let positions = if has_pos { Some(cat(&|g| g.positions.as_ref().unwrap(), 3)?) } else { None };
    let node_targets = match node_t {
        Some(w) => Some(cat(&|g| g.node_targets.as_ref().unwrap(), w)?),
        None => None,
    };
    let mut graph_targets = Tensor::zeros(graphs.len(), t);
    for (i, g) in graphs.iter().enumerate() {
        graph_targets.row_mut(i).copy_from_slice(&g.graph_targets);
    }
    Ok(BatchedGraph {
        node_count: total_nodes,
        edges,
        node_features,
        edge_features,
        positions,
        atomic_numbers: z,
        graph_targets,
        node_targets,
        graph_index,
        node_offsets,
        edge_offsets,
        cutoffs: graphs.iter().map(|g| g.cutoff).collect(),
    })
}
