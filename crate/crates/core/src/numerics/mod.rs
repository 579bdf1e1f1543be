//! Dense tensors, a symmetric eigensolver and reverse-mode differentiation.

mod eigen;
pub mod gradcheck;
mod tape;
mod tensor;

pub use eigen::{sym_eigendecompose, SymEigen};
pub use tape::{Extreme, Gradients, Tape, Var};
pub use tensor::Tensor;

/// Row-wise softmax, stabilized by subtracting each row's maximum.
pub fn softmax_rows(m: &Tensor) -> Tensor {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}

/// Sum of `values` taken in ascending order, so equal multisets give equal bits.
pub(crate) fn canonical_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}
