//! Central finite-difference gradient checks.
//!
//! The reference derivative only ever evaluates the forward pass, so it is
//! independent of the reverse sweep it checks.

use crate::error::Result;
use crate::numerics::{Tape, Tensor, Var};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest `|analytic - fd| / max(1e-8, |fd|)` over all checked entries.
    pub max_relative_error: f64,
    /// `(input, flat index, analytic, finite difference)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_relative_error <= tol
    }
}

/// Compares reverse-mode gradients of the scalar built by `f` with central differences.
/// `f` receives one differentiable leaf per entry of `inputs`.
pub fn check_gradients<F>(inputs: &[Tensor], step: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.variable(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get(&tape, v)).collect();

    let mut report = GradCheckReport { max_relative_error: 0.0, worst: None, checked: 0 };
    let mut work = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for k in 0..input.len() {
            let x0 = input.data()[k];
            work[i].data_mut()[k] = x0 + step;
            let plus = eval(&work)?;
            work[i].data_mut()[k] = x0 - step;
            let minus = eval(&work)?;
            work[i].data_mut()[k] = x0;
            let fd = (plus - minus) / (2.0 * step);
            let an = analytic[i].data()[k];
            let rel = (an - fd).abs() / fd.abs().max(1e-8);
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = Some((i, k, an, fd));
            }
        }
    }
    Ok(report)
}
