//! Central finite-difference gradient checks.

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Worst per-entry disagreement between analytic and numeric gradients.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub entries: usize,
}

/// Relative error with a floor on the denominator so entries that are
/// numerically zero do not dominate.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `backward` against central differences with step `h`.
///
/// `build` receives a fresh tape and one leaf per input and must return a
/// scalar loss; it is re-run for every perturbation.
pub fn check<F>(inputs: &[Tensor], h: f64, floor: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.param(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        tape.value(loss).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut out = GradCheck { max_rel_err: 0.0, max_abs_err: 0.0, entries: 0 };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .get(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let up = eval(&work)?;
            work[k].data_mut()[i] = orig - h;
            let down = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.data()[i];
            out.max_abs_err = out.max_abs_err.max((a - numeric).abs());
            out.max_rel_err = out.max_rel_err.max(rel_err(a, numeric, floor));
            out.entries += 1;
        }
    }
    Ok(out)
}
