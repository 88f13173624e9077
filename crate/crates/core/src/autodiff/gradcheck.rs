//! Central finite-difference verification of tape gradients (64-bit).

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::Result;

/// Largest discrepancy found by [`check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// `(input, element, analytic, numeric)` at the worst element.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Relative error with a small absolute floor so that gradients which are
/// zero in both computations compare equal.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    diff / analytic.abs().max(numeric.abs()).max(1e-7)
}

/// Compares the tape gradient of the scalar `f(inputs)` against
/// `(f(x + eps) - f(x - eps)) / 2eps` for every element of every input.
/// `f` must be deterministic (reseed any dropout rng inside it).
pub fn check<F>(inputs: &[Tensor<f64>], eps: f64, f: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars = xs
            .iter()
            .map(|x| tape.constant(x.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(f(&tape, &vars)?.value().item())
    };
    let tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|x| tape.leaf(x.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;
    let mut report = GradCheck {
        max_rel_err: 0.0,
        checked: 0,
        worst: None,
    };
    let mut xs = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let zero = Tensor::zeros(inputs[k].shape());
        let analytic = grads.wrt(*v).unwrap_or(&zero).clone();
        for e in 0..inputs[k].len() {
            let x0 = inputs[k].data()[e];
            xs[k].data_mut()[e] = x0 + eps;
            let up = eval(&xs)?;
            xs[k].data_mut()[e] = x0 - eps;
            let down = eval(&xs)?;
            xs[k].data_mut()[e] = x0;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.data()[e];
            let r = rel_err(a, numeric);
            report.checked += 1;
            if r > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(r);
                report.worst = Some((k, e, a, numeric));
            }
        }
    }
    Ok(report)
}
