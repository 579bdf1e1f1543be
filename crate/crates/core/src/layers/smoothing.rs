//! Over-smoothing measurement.

use crate::numerics::Tensor;

/// Mean cosine similarity over all unordered pairs of rows, for each matrix.
/// Pairs involving a zero row count as 0.
pub fn oversmoothing_diagnostic(per_layer: &[Tensor]) -> Vec<f64> {
    per_layer
        .iter()
        .map(|h| {
            let n = h.rows();
            if n < 2 {
                return 0.0;
            }
            let norms: Vec<f64> = (0..n).map(|i| h.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
            let mut total = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    if norms[i] > 0.0 && norms[j] > 0.0 {
                        let dot: f64 = h.row(i).iter().zip(h.row(j)).map(|(a, b)| a * b).sum();
                        total += dot / (norms[i] * norms[j]);
                    }
                }
            }
            total / (n * (n - 1) / 2) as f64
        })
        .collect()
}

/// One unweighted mean over each node's closed neighborhood (itself and its neighbors).
pub fn mean_aggregation_step(adjacency: &[Vec<usize>], h: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(h.rows(), h.cols());
    for (v, nb) in adjacency.iter().enumerate() {
        let k = (nb.len() + 1) as f64;
        let row = out.row_mut(v);
        for &u in nb.iter().chain(std::iter::once(&v)) {
            for (o, x) in row.iter_mut().zip(h.row(u)) {
                *o += x;
            }
        }
        row.iter_mut().for_each(|o| *o /= k);
    }
    out
}
