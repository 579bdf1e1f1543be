//! Column-wise standardization with statistics fitted on the training split.

use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-column mean and population standard deviation (before flooring).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ColumnStats {
    pub fn fit(x: &Tensor) -> Self {
        Self::fit_parts(std::slice::from_ref(&x))
    }

    /// Statistics over the row union of several matrices with equal widths.
    pub fn fit_parts(parts: &[&Tensor]) -> Self {
        let cols = parts.first().map_or(0, |p| p.cols());
        let rows: usize = parts.iter().map(|p| p.rows()).sum();
        let mut mean = vec![0.0; cols];
        let mut var = vec![0.0; cols];
        if rows == 0 {
            return Self { mean, std: vec![1.0; cols] };
        }
        for p in parts {
            for r in 0..p.rows() {
                for (m, v) in mean.iter_mut().zip(p.row(r)) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        for p in parts {
            for r in 0..p.rows() {
                for ((s, v), m) in var.iter_mut().zip(p.row(r)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = var.into_iter().map(|s| (s / rows as f64).sqrt()).collect();
        Self { mean, std }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        debug_assert_eq!(x.cols(), self.width());
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s.max(STD_FLOOR);
            }
        }
        out
    }

    pub fn invert(&self, z: &Tensor) -> Tensor {
        let mut out = z.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s.max(STD_FLOOR) + m;
            }
        }
        out
    }
}

/// Standardizes `x`. Without `train_stats` the input is treated as the training
/// split and its own statistics are fitted and returned.
pub fn standardize(x: &Tensor, train_stats: Option<&ColumnStats>) -> (Tensor, ColumnStats) {
    let stats = train_stats.cloned().unwrap_or_else(|| ColumnStats::fit(x));
    (stats.apply(x), stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn population_convention() {
        let (z, s) = standardize(&Tensor::column(&[1.0, 2.0, 3.0]), None);
        assert_eq!(s.mean, vec![2.0]);
        let c = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((z.get(0, 0) + c).abs() < 1e-15 && z.get(1, 0) == 0.0 && (z.get(2, 0) - c).abs() < 1e-15);
    }

    #[test]
    fn constant_column_is_clamped_to_zero() {
        let (z, _) = standardize(&Tensor::column(&[5.0, 5.0, 5.0]), None);
        assert_eq!(z.data(), &[0.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn test_split_round_trips(train in prop::collection::vec(-50.0f64..50.0, 2..30), test in prop::collection::vec(-50.0f64..50.0, 1..30)) {
            let (_, stats) = standardize(&Tensor::column(&train), None);
            let t = Tensor::column(&test);
            let (z, _) = standardize(&t, Some(&stats));
            prop_assert!(stats.invert(&z).max_abs_diff(&t) <= 1e-12);
        }

        #[test]
        fn train_split_has_zero_mean_unit_std(train in prop::collection::vec(-50.0f64..50.0, 2..60)) {
            prop_assume!(train.iter().any(|&v| (v - train[0]).abs() > 1e-3));
            let (z, _) = standardize(&Tensor::column(&train), None);
            let refit = ColumnStats::fit(&z);
            prop_assert!(refit.mean[0].abs() <= 1e-9);
            prop_assert!((refit.std[0] - 1.0).abs() <= 1e-9);
        }
    }
}
