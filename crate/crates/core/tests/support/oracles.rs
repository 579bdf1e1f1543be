#![allow(clippy::needless_range_loop)]

//! Brute-force reference implementations for graph measures, written
//! independently of the library code paths.

use atomgraph::numerics::{sym_eigendecompose, Tensor};
use atomgraph::AtomGraph;

fn adjacency_matrix(g: &AtomGraph) -> Vec<Vec<bool>> {
    let mut a = vec![vec![false; g.node_count]; g.node_count];
    for &(u, v) in &g.edges {
        a[u][v] = true;
        a[v][u] = true;
    }
    a
}

/// Every simple path from `s` to `t`, as node sequences.
fn simple_paths(a: &[Vec<bool>], s: usize, t: usize) -> Vec<Vec<usize>> {
    fn dfs(a: &[Vec<bool>], t: usize, path: &mut Vec<usize>, on: &mut [bool], out: &mut Vec<Vec<usize>>) {
        let u = *path.last().unwrap();
        if u == t {
            out.push(path.clone());
            return;
        }
        for w in 0..a.len() {
            if a[u][w] && !on[w] {
                on[w] = true;
                path.push(w);
                dfs(a, t, path, on, out);
                path.pop();
                on[w] = false;
            }
        }
    }
    let mut on = vec![false; a.len()];
    on[s] = true;
    let mut out = Vec::new();
    dfs(a, t, &mut vec![s], &mut on, &mut out);
    out
}

/// Shortest paths for each ordered pair, found by filtering all simple paths.
pub struct PathTable {
    pub dist: Vec<Vec<usize>>,
    pub shortest: Vec<Vec<Vec<Vec<usize>>>>,
}

pub fn path_table(g: &AtomGraph) -> PathTable {
    let n = g.node_count;
    let a = adjacency_matrix(g);
    let mut dist = vec![vec![0; n]; n];
    let mut shortest = vec![vec![Vec::new(); n]; n];
    for s in 0..n {
        for t in 0..n {
            if s == t {
                shortest[s][t] = vec![vec![s]];
                continue;
            }
            let all = simple_paths(&a, s, t);
            let len = all.iter().map(Vec::len).min().expect("connected graph");
            dist[s][t] = len - 1;
            shortest[s][t] = all.into_iter().filter(|p| p.len() == len).collect();
        }
    }
    PathTable { dist, shortest }
}

fn degrees(g: &AtomGraph) -> Vec<usize> {
    let mut d = vec![0; g.node_count];
    for &(u, v) in &g.edges {
        d[u] += 1;
        d[v] += 1;
    }
    d
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    x
}

/// Columns: degree, closeness, betweenness, eigenvector, PageRank, clustering,
/// core number, harmonic, eccentricity. Requires a connected graph.
pub fn node_measures(g: &AtomGraph) -> Vec<[f64; 9]> {
    let n = g.node_count;
    let a = adjacency_matrix(g);
    let deg = degrees(g);
    let pt = path_table(g);

    let mut between = vec![0.0; n];
    if n >= 3 {
        for s in 0..n {
            for t in s + 1..n {
                let paths = &pt.shortest[s][t];
                for (v, b) in between.iter_mut().enumerate() {
                    if v != s && v != t {
                        let through = paths.iter().filter(|p| p.contains(&v)).count();
                        *b += through as f64 / paths.len() as f64;
                    }
                }
            }
        }
        let norm = ((n - 1) * (n - 2)) as f64 / 2.0;
        between.iter_mut().for_each(|b| *b /= norm);
    }

    // Perron vector of A from a full eigendecomposition.
    let mut am = Tensor::zeros(n, n);
    for u in 0..n {
        for v in 0..n {
            if a[u][v] {
                am.set(u, v, 1.0);
            }
        }
    }
    let eig = sym_eigendecompose(&am).unwrap();
    let mut perron = eig.vector(n - 1);
    let norm = perron.iter().map(|x| x * x).sum::<f64>().sqrt();
    perron.iter_mut().for_each(|x| *x = x.abs() / norm);
    if n == 1 {
        perron = vec![1.0];
    }

    // PageRank as the solution of (I - d M) x = (1 - d)/N.
    let d = 0.85;
    let m: Vec<Vec<f64>> = (0..n)
        .map(|v| {
            (0..n)
                .map(|u| {
                    let id = if u == v { 1.0 } else { 0.0 };
                    let walk = if deg[u] == 0 {
                        1.0 / n as f64
                    } else if a[u][v] {
                        1.0 / deg[u] as f64
                    } else {
                        0.0
                    };
                    id - d * walk
                })
                .collect()
        })
        .collect();
    let pr = solve(m, vec![(1.0 - d) / n as f64; n]);

    // Core number: largest k whose k-core (iterated deletion of degree < k) keeps v.
    let core = |v: usize| {
        let mut best = 0;
        for k in 1..n {
            let mut alive = vec![true; n];
            loop {
                let drop: Vec<usize> = (0..n).filter(|&u| alive[u] && (0..n).filter(|&w| alive[w] && a[u][w]).count() < k).collect();
                if drop.is_empty() {
                    break;
                }
                drop.into_iter().for_each(|u| alive[u] = false);
            }
            if alive[v] {
                best = k;
            }
        }
        best as f64
    };

    (0..n)
        .map(|v| {
            let nb: Vec<usize> = (0..n).filter(|&w| a[v][w]).collect();
            let links = nb.iter().flat_map(|&x| nb.iter().map(move |&y| (x, y))).filter(|&(x, y)| x < y && a[x][y]).count();
            let k = nb.len();
            let clustering = if k < 2 { 0.0 } else { links as f64 / (k * (k - 1) / 2) as f64 };
            let total: usize = pt.dist[v].iter().sum();
            let closeness = if n == 1 { 0.0 } else { (n - 1) as f64 / total as f64 };
            let harmonic: f64 = (0..n).filter(|&u| u != v).map(|u| 1.0 / pt.dist[v][u] as f64).sum();
            let ecc = *pt.dist[v].iter().max().unwrap() as f64;
            [deg[v] as f64, closeness, between[v], perron[v], pr[v], clustering, core(v), harmonic, ecc]
        })
        .collect()
}

/// Columns: edge betweenness, Jaccard, Adamic-Adar, preferential attachment.
pub fn edge_measures(g: &AtomGraph) -> Vec<[f64; 4]> {
    let n = g.node_count;
    let a = adjacency_matrix(g);
    let deg = degrees(g);
    let pt = path_table(g);
    let norm = (n * (n - 1)) as f64 / 2.0;
    g.edges
        .iter()
        .map(|&(u, v)| {
            let mut eb = 0.0;
            for s in 0..n {
                for t in s + 1..n {
                    let paths = &pt.shortest[s][t];
                    let through =
                        paths.iter().filter(|p| p.windows(2).any(|w| (w[0] == u && w[1] == v) || (w[0] == v && w[1] == u))).count();
                    eb += through as f64 / paths.len() as f64;
                }
            }
            let gu: Vec<usize> = (0..n).filter(|&w| a[u][w]).collect();
            let gv: Vec<usize> = (0..n).filter(|&w| a[v][w]).collect();
            let inter: Vec<usize> = gu.iter().copied().filter(|w| gv.contains(w)).collect();
            let union = (0..n).filter(|w| gu.contains(w) || gv.contains(w)).count();
            let aa: f64 = inter.iter().map(|&w| 1.0 / (deg[w] as f64).ln()).sum();
            [eb / norm, inter.len() as f64 / union as f64, aa, (deg[u] * deg[v]) as f64]
        })
        .collect()
}
