//! Reference estimators of the long-term effect on target units.
//!
//! Every estimator reads through a fresh [`ProtocolView`] and reports the
//! outcome blocks it touched in [`AteEstimate::inputs_used`], which
//! [`audit`] compares with the method's row of the settings matrix:
//!
//! | method       | O_ST | O_LT | E_ST | E_LT |
//! |--------------|------|------|------|------|
//! | sind         | yes  | yes  | yes  | no   |
//! | naive_i      | no   | yes  | no   | no   |
//! | naive_ii/iii | no   | no   | yes  | no   |
//! | tarnet_lite  | yes  | no   | yes  | no   |
//! | inter        | yes  | no   | yes  | no   |
//! | ltee         | yes  | yes  | no   | no   |
//!
//! The arm-mean-difference estimators are antisymmetric: swapping the
//! treatment labels negates them.

mod linear;
mod protocol;
mod tarnet;


use crate::error::{Error, Result};
use crate::ndcore::Tensor;

pub use linear::{hstack, LinearFit, MAX_CONDITION, RIDGE_JITTER};
pub use protocol::{audit, Block, BlockSet, Method, ProtocolView};
pub use tarnet::{tarnet_lite, TarnetConfig, TarnetLite};

/// One estimate with the outcome blocks read to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct AteEstimate {
    pub method: Method,
    pub value: f64,
    pub inputs_used: BlockSet,
}

pub(crate) fn require_arms(w: &[u8], what: &str) -> Result<()> {
    for (arm, name) in [(1u8, "treated"), (0u8, "control")] {
        if !w.contains(&arm) {
            return Err(Error::Estimation(format!("no {name} units among {what}")));
        }
    }
    Ok(())
}

/// Mean of `values` over treated units minus mean over control units.
pub fn arm_mean_difference(values: &[f64], w: &[u8]) -> Result<f64> {
    if values.len() != w.len() {
        return Err(Error::InvalidArgument(format!("{} values for {} treatments", values.len(), w.len())));
    }
    require_arms(w, "the units")?;
    let mut sum = [0.0; 2];
    let mut cnt = [0usize; 2];
    for (&v, &a) in values.iter().zip(w) {
        sum[a as usize] += v;
        cnt[a as usize] += 1;
    }
    Ok(sum[1] / cnt[1] as f64 - sum[0] / cnt[0] as f64)
}

fn estimate(view: &ProtocolView, method: Method, value: f64) -> AteEstimate {
    AteEstimate { method, value, inputs_used: view.reads() }
}

fn column(t: &Tensor, c: usize) -> Vec<f64> {
    (0..t.rows()).map(|i| t.get(i, c)).collect()
}

fn row_means(t: &Tensor) -> Vec<f64> {
    (0..t.rows()).map(|i| t.row_slice(i).iter().sum::<f64>() / t.cols() as f64).collect()
}

/// Source arm difference at the long-term step.
pub fn naive_i(view: &ProtocolView) -> Result<AteEstimate> {
    let y = view.source_long();
    let v = arm_mean_difference(&y, &view.source_treatments())?;
    Ok(estimate(view, Method::NaiveI, v))
}

/// Target arm difference at the last short-term step.
pub fn naive_ii(view: &ProtocolView) -> Result<AteEstimate> {
    let s = view.target_short();
    let v = arm_mean_difference(&column(&s, s.cols() - 1), &view.target_treatments())?;
    Ok(estimate(view, Method::NaiveII, v))
}

/// Target arm difference of the mean short-term outcome.
pub fn naive_iii(view: &ProtocolView) -> Result<AteEstimate> {
    let s = view.target_short();
    let v = arm_mean_difference(&row_means(&s), &view.target_treatments())?;
    Ok(estimate(view, Method::NaiveIII, v))
}

/// Linear surrogate index.
///
/// Regresses the long-term outcome on contexts and short-term outcomes over
/// source units, predicts it for target units and takes the arm difference
/// of the predictions.
pub fn surrogate_index(view: &ProtocolView) -> Result<AteEstimate> {
    let fs = hstack(&view.source_contexts(), &view.source_short())?;
    let fit = LinearFit::fit(&fs, &view.source_long())?;
    let ft = hstack(&view.target_contexts(), &view.target_short())?;
    let index = fit.predict(&ft)?;
    let v = arm_mean_difference(&index, &view.target_treatments())?;
    Ok(estimate(view, Method::SurrogateIndex, v))
}

/// Long-term value of the line through `(1, y_1)` and `(t0, y_t0)`.
pub fn extrapolate_line(first: f64, last: f64, t0: usize, horizon: usize) -> Result<f64> {
    if t0 < 2 {
        return Err(Error::InvalidArgument(format!("a line through the end points needs t0 >= 2, got {t0}")));
    }
    let slope = (last - first) / (t0 - 1) as f64;
    Ok(first + slope * (horizon - 1) as f64)
}

/// Per-unit straight-line extrapolation of the target short-term outcomes
/// to the long-term step.
pub fn interpolate(view: &ProtocolView) -> Result<AteEstimate> {
    let (t0, horizon) = (view.t0(), view.horizon());
    if t0 < 2 {
        return Err(Error::InvalidArgument(format!("a line through the end points needs t0 >= 2, got {t0}")));
    }
    let s = view.target_short();
    let ext = (0..s.rows())
        .map(|i| extrapolate_line(s.get(i, 0), s.get(i, t0 - 1), t0, horizon))
        .collect::<Result<Vec<f64>>>()?;
    let v = arm_mean_difference(&ext, &view.target_treatments())?;
    Ok(estimate(view, Method::Interpolate, v))
}
