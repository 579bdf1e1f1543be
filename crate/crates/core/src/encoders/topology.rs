//! Centrality and structure measures on the unweighted, undirected graph.
//!
//! Order-dependent float reductions go through a sorted sum so the results are
//! bit-identical under node relabeling.

use crate::graph::AtomGraph;
use crate::numerics::{canonical_sum, Tensor};

pub const NODE_COLUMNS: [&str; 9] = [
    "degree",
    "closeness",
    "betweenness",
    "eigenvector_centrality",
    "pagerank",
    "clustering",
    "core_number",
    "harmonic_centrality",
    "eccentricity",
];

pub const EDGE_COLUMNS: [&str; 4] = ["edge_betweenness", "jaccard", "adamic_adar", "preferential_attachment"];

pub const PAGERANK_DAMPING: f64 = 0.85;
pub const ITERATION_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 100_000;

/// Hop distances and shortest-path counts from every source.
pub(crate) struct ShortestPaths {
    /// `usize::MAX` when unreachable.
    pub dist: Vec<Vec<usize>>,
    pub sigma: Vec<Vec<f64>>,
}

pub(crate) fn shortest_paths(adj: &[Vec<usize>]) -> ShortestPaths {
    let n = adj.len();
    let mut dist = vec![vec![usize::MAX; n]; n];
    let mut sigma = vec![vec![0.0; n]; n];
    let mut queue = std::collections::VecDeque::with_capacity(n);
    for s in 0..n {
        let (d, sg) = (&mut dist[s], &mut sigma[s]);
        d[s] = 0;
        sg[s] = 1.0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if d[w] == usize::MAX {
                    d[w] = d[u] + 1;
                    queue.push_back(w);
                }
                if d[w] == d[u] + 1 {
                    sg[w] += sg[u];
                }
            }
        }
    }
    ShortestPaths { dist, sigma }
}

fn betweenness(sp: &ShortestPaths, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    if n < 3 {
        return out;
    }
    let norm = ((n - 1) * (n - 2)) as f64 / 2.0;
    let mut terms = Vec::new();
    for (v, slot) in out.iter_mut().enumerate() {
        terms.clear();
        for s in 0..n {
            for t in s + 1..n {
                if s == v || t == v || sp.dist[s][t] == usize::MAX {
                    continue;
                }
                let (dsv, dvt) = (sp.dist[s][v], sp.dist[v][t]);
                if dsv != usize::MAX && dvt != usize::MAX && dsv + dvt == sp.dist[s][t] {
                    terms.push(sp.sigma[s][v] * sp.sigma[v][t] / sp.sigma[s][t]);
                }
            }
        }
        *slot = canonical_sum(&mut terms) / norm;
    }
    out
}

/// Power iteration on `A + I`, which shares the Perron vector of `A` but does not
/// oscillate on bipartite graphs. Unit L2 norm.
fn eigenvector_centrality(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut buf = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut y: Vec<f64> = (0..n)
            .map(|v| {
                buf.clear();
                buf.push(x[v]);
                buf.extend(adj[v].iter().map(|&u| x[u]));
                canonical_sum(&mut buf)
            })
            .collect();
        let mut sq: Vec<f64> = y.iter().map(|v| v * v).collect();
        let norm = canonical_sum(&mut sq).sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        let mut delta: Vec<f64> = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).collect();
        x = y;
        if canonical_sum(&mut delta) < ITERATION_TOLERANCE {
            break;
        }
    }
    x
}

/// Dangling (isolated) nodes spread their mass uniformly.
fn pagerank(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let nf = n as f64;
    let mut x = vec![1.0 / nf; n];
    let mut buf = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        buf.clear();
        buf.extend((0..n).filter(|&u| adj[u].is_empty()).map(|u| x[u]));
        let dangling = canonical_sum(&mut buf);
        let y: Vec<f64> = (0..n)
            .map(|v| {
                buf.clear();
                buf.extend(adj[v].iter().map(|&u| x[u] / adj[u].len() as f64));
                (1.0 - PAGERANK_DAMPING) / nf + PAGERANK_DAMPING * (canonical_sum(&mut buf) + dangling / nf)
            })
            .collect();
        let mut delta: Vec<f64> = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).collect();
        x = y;
        if canonical_sum(&mut delta) < ITERATION_TOLERANCE {
            break;
        }
    }
    x
}

fn clustering(adj: &[Vec<usize>]) -> Vec<f64> {
    adj.iter()
        .map(|nb| {
            let k = nb.len();
            if k < 2 {
                return 0.0;
            }
            let mut links = 0usize;
            for (i, &a) in nb.iter().enumerate() {
                for &b in &nb[i + 1..] {
                    if adj[a].binary_search(&b).is_ok() {
                        links += 1;
                    }
                }
            }
            2.0 * links as f64 / (k * (k - 1)) as f64
        })
        .collect()
}

/// Core numbers by repeated removal of a minimum-degree node.
fn core_numbers(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut deg: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut removed = vec![false; n];
    let mut core = vec![0.0; n];
    let mut k = 0;
    for _ in 0..n {
        let v = (0..n).filter(|&v| !removed[v]).min_by_key(|&v| deg[v]).unwrap();
        k = k.max(deg[v]);
        core[v] = k as f64;
        removed[v] = true;
        for &w in &adj[v] {
            if !removed[w] {
                deg[w] -= 1;
            }
        }
    }
    core
}

/// `N x 9` node encodings in [`NODE_COLUMNS`] order. On a disconnected graph
/// closeness and eccentricity are infinite, which invalidates the bundle.
pub fn node_topological_encodings(graph: &AtomGraph) -> Tensor {
    let n = graph.node_count;
    let adj = graph.adjacency();
    let sp = shortest_paths(&adj);
    let between = betweenness(&sp, n);
    let eig = eigenvector_centrality(&adj);
    let pr = pagerank(&adj);
    let clust = clustering(&adj);
    let core = core_numbers(&adj);
    let mut out = Tensor::zeros(n, NODE_COLUMNS.len());
    let mut inv = Vec::with_capacity(n);
    for v in 0..n {
        let dist = &sp.dist[v];
        let disconnected = dist.contains(&usize::MAX);
        let total: usize = dist.iter().filter(|&&d| d != usize::MAX).sum();
        let closeness = if n == 1 {
            0.0
        } else if disconnected {
            f64::INFINITY
        } else {
            (n - 1) as f64 / total as f64
        };
        inv.clear();
        inv.extend(dist.iter().filter(|&&d| d != 0 && d != usize::MAX).map(|&d| 1.0 / d as f64));
        let harmonic = canonical_sum(&mut inv);
        let ecc = if disconnected { f64::INFINITY } else { *dist.iter().max().unwrap() as f64 };
        out.row_mut(v).copy_from_slice(&[adj[v].len() as f64, closeness, between[v], eig[v], pr[v], clust[v], core[v], harmonic, ecc]);
    }
    out
}

/// `|E| x 4` edge encodings in [`EDGE_COLUMNS`] order, rows aligned with `graph.edges`.
pub fn edge_topological_encodings(graph: &AtomGraph) -> Tensor {
    let n = graph.node_count;
    let adj = graph.adjacency();
    let sp = shortest_paths(&adj);
    let norm = (n * n.saturating_sub(1)) as f64 / 2.0;
    let mut out = Tensor::zeros(graph.edge_count(), EDGE_COLUMNS.len());
    let mut terms = Vec::new();
    for (k, &(a, b)) in graph.edges.iter().enumerate() {
        terms.clear();
        for s in 0..n {
            for t in s + 1..n {
                let dst = sp.dist[s][t];
                if dst == usize::MAX {
                    continue;
                }
                for (x, y) in [(a, b), (b, a)] {
                    let (dsx, dyt) = (sp.dist[s][x], sp.dist[y][t]);
                    if dsx != usize::MAX && dyt != usize::MAX && dsx + 1 + dyt == dst {
                        terms.push(sp.sigma[s][x] * sp.sigma[y][t] / sp.sigma[s][t]);
                    }
                }
            }
        }
        let edge_betweenness = canonical_sum(&mut terms) / norm;

        let (na, nb) = (&adj[a], &adj[b]);
        let common: Vec<usize> = na.iter().copied().filter(|w| nb.binary_search(w).is_ok()).collect();
        let union = na.len() + nb.len() - common.len();
        let jaccard = common.len() as f64 / union as f64;
        terms.clear();
        terms.extend(common.iter().map(|&w| 1.0 / (adj[w].len() as f64).ln()));
        let adamic_adar = canonical_sum(&mut terms);
        let pref = (na.len() * nb.len()) as f64;
        out.row_mut(k).copy_from_slice(&[edge_betweenness, jaccard, adamic_adar, pref]);
    }
    out
}
