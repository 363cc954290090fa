//! Differentiable Wasserstein-1 imbalance between treated and control
//! representation clouds.
//!
//! The distance is the transport cost of an entropically regularized plan
//! between uniform empirical measures under the Euclidean ground cost. The
//! plan comes from log-domain Sinkhorn iterations that are unrolled on the
//! tape, so gradients are exact for the computed quantity rather than the
//! fixed-plan (envelope) approximation.

use crate::error::{invalid, Result};
use crate::ndcore::{Tape, Tensor, Var};

/// Entropic regularization weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Absolute(f64),
    /// Fraction of the mean ground cost, recomputed per problem and kept on
    /// the tape.
    MeanCostFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub epsilon: Epsilon,
    pub iters: usize,
}

impl SinkhornConfig {
    /// Cheap setting used inside the training objective.
    pub const TRAINING: SinkhornConfig =
        SinkhornConfig { epsilon: Epsilon::MeanCostFraction(0.1), iters: 10 };
    /// Setting for reported distances.
    pub const EVALUATION: SinkhornConfig =
        SinkhornConfig { epsilon: Epsilon::MeanCostFraction(0.1), iters: 200 };

    pub fn new(epsilon: Epsilon, iters: usize) -> Self {
        SinkhornConfig { epsilon, iters }
    }

    fn validate(&self) -> Result<()> {
        let e = match self.epsilon {
            Epsilon::Absolute(e) | Epsilon::MeanCostFraction(e) => e,
        };
        if !(e > 0.0 && e.is_finite()) {
            return invalid(format!("epsilon must be positive and finite, got {e}"));
        }
        if self.iters == 0 {
            return invalid("sinkhorn needs at least one iteration");
        }
        Ok(())
    }
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self::TRAINING
    }
}

// Lower bound for the adaptive epsilon when every point coincides.
const EPS_FLOOR: f64 = 1e-9;

/// Tape handles produced by [`sinkhorn_w1`].
#[derive(Debug, Clone, Copy)]
pub struct TransportVars {
    pub distance: Var,
    /// `None` when one side was empty.
    pub plan: Option<Var>,
    /// Set when either point set is empty and the distance is defined as 0.
    pub empty_side: bool,
}

/// Entropic W-1 between the rows of `p` (`[n, D]`) and `q` (`[m, D]`).
///
/// An absolute epsilon is approached by annealing from the cost scale; the
/// adaptive epsilon is used from the first iteration on.
pub fn sinkhorn_w1(tape: &mut Tape, p: Var, q: Var, cfg: SinkhornConfig) -> Result<TransportVars> {
    cfg.validate()?;
    let (ps, qs) = (tape.value(p).shape().to_vec(), tape.value(q).shape().to_vec());
    if ps.len() != 2 || qs.len() != 2 || ps[1] != qs[1] {
        return invalid(format!("sinkhorn_w1: shape mismatch {ps:?} vs {qs:?}"));
    }
    let (n, m) = (ps[0], qs[0]);
    if n == 0 || m == 0 {
        let distance = tape.scalar(0.0);
        return Ok(TransportVars { distance, plan: None, empty_side: true });
    }

    // Truncated Sinkhorn is not symmetric in its arguments, so solve in a
    // canonical orientation and transpose the plan back if needed.
    let swap = m > n
        || (m == n && {
            let (pv, qv) = (tape.value(p).data(), tape.value(q).data());
            qv.iter().zip(pv).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne())
                == Some(std::cmp::Ordering::Less)
        });
    if swap {
        let out = solve_oriented(tape, q, p, m, n, cfg)?;
        let plan = tape.transpose(out.0)?;
        return Ok(TransportVars { distance: out.1, plan: Some(plan), empty_side: false });
    }
    let (plan, distance) = solve_oriented(tape, p, q, n, m, cfg)?;
    Ok(TransportVars { distance, plan: Some(plan), empty_side: false })
}

fn solve_oriented(
    tape: &mut Tape,
    p: Var,
    q: Var,
    n: usize,
    m: usize,
    cfg: SinkhornConfig,
) -> Result<(Var, Var)> {
    let cost = tape.pairwise_dist(p, q)?;
    let cost_t = tape.transpose(cost)?;
    let (eps, schedule) = match cfg.epsilon {
        Epsilon::Absolute(e) => {
            let c_max = tape.value(cost).data().iter().fold(0.0f64, |a, &b| a.max(b));
            (tape.scalar(e), annealing_schedule(e, c_max, cfg.iters))
        }
        Epsilon::MeanCostFraction(frac) => {
            let mean = tape.mean(cost);
            let scaled = tape.scale(mean, frac);
            let floor = tape.scalar(EPS_FLOOR);
            (tape.maximum(scaled, floor)?, Vec::new())
        }
    };
    let one = tape.scalar(1.0);
    let inv_eps = tape.div(one, eps)?;
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();

    // Dual potentials: f is [n, 1], g is [1, m].
    let mut g = tape.constant(Tensor::zeros(&[1, m]));
    let mut f = tape.constant(Tensor::zeros(&[n, 1]));
    for k in 0..cfg.iters {
        let (e, inv) = match schedule.get(k) {
            Some(&v) => (tape.scalar(v), tape.scalar(1.0 / v)),
            None => (eps, inv_eps),
        };
        // f_i = eps * (log a_i - LSE_j((g_j - C_ij) / eps))
        let gr = tape.repeat_rows(g, n)?;
        let arg = tape.sub(gr, cost)?;
        let arg = tape.mul(arg, inv)?;
        let l = tape.logsumexp(arg)?;
        let l = tape.neg(l);
        let l = tape.shift(l, log_a);
        f = tape.mul(l, e)?;

        // g_j = eps * (log b_j - LSE_i((f_i - C_ij) / eps))
        let ft = tape.transpose(f)?;
        let fr = tape.repeat_rows(ft, m)?;
        let arg = tape.sub(fr, cost_t)?;
        let arg = tape.mul(arg, inv)?;
        let l = tape.logsumexp(arg)?;
        let l = tape.neg(l);
        let l = tape.shift(l, log_b);
        let l = tape.mul(l, e)?;
        g = tape.transpose(l)?;
    }

    let fr = tape.repeat_cols(f, m)?;
    let gr = tape.repeat_rows(g, n)?;
    let s = tape.add(fr, gr)?;
    let s = tape.sub(s, cost)?;
    let s = tape.mul(s, inv_eps)?;
    let plan = tape.exp(s);
    let weighted = tape.mul(plan, cost)?;
    let distance = tape.sum(weighted);
    Ok((plan, distance))
}

/// Epsilon per iteration for an absolute target: geometric decay from the
/// largest ground cost down to `target` over the first 60% of the
/// iterations, then `target`. Plain iterations at a small epsilon need far
/// more than a few hundred steps to balance the marginals.
fn annealing_schedule(target: f64, c_max: f64, iters: usize) -> Vec<f64> {
    let ramp = iters * 3 / 5;
    if c_max <= target || ramp == 0 {
        return Vec::new();
    }
    let ratio = (target / c_max).powf(1.0 / ramp as f64);
    (0..ramp).map(|k| (c_max * ratio.powi(k as i32)).max(target)).collect()
}

/// A concrete transport problem between two point sets.
#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub p: Tensor,
    pub q: Tensor,
    pub config: SinkhornConfig,
}

/// Solved transport problem.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub distance: f64,
    /// `[n, m]`; empty when a side had no points.
    pub plan: Tensor,
    pub empty_side: bool,
}

impl TransportProblem {
    pub fn new(p: Tensor, q: Tensor, config: SinkhornConfig) -> Self {
        TransportProblem { p, q, config }
    }

    /// Pairwise Euclidean ground cost `[n, m]`.
    pub fn cost(&self) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = tape.constant(self.p.clone());
        let q = tape.constant(self.q.clone());
        let c = tape.pairwise_dist(p, q)?;
        Ok(tape.value(c).clone())
    }

    pub fn solve(&self) -> Result<TransportSolution> {
        let mut tape = Tape::new();
        let p = tape.constant(self.p.clone());
        let q = tape.constant(self.q.clone());
        let out = sinkhorn_w1(&mut tape, p, q, self.config)?;
        Ok(TransportSolution {
            distance: tape.value(out.distance).item()?,
            plan: out.plan.map_or_else(|| Tensor::zeros(&[0, 0]), |v| tape.value(v).clone()),
            empty_side: out.empty_side,
        })
    }
}

/// Sum over timesteps of the treated-vs-control transport distance.
///
/// `treated[t]` and `control[t]` hold the representations at step `t`; a
/// `None` entry means that arm has no units in the batch and the step adds
/// nothing. Returns the summed distance and the number of degenerate steps.
pub fn imbalance_term(
    tape: &mut Tape,
    treated: &[Option<Var>],
    control: &[Option<Var>],
    cfg: SinkhornConfig,
) -> Result<(Var, usize)> {
    if treated.len() != control.len() {
        return invalid(format!(
            "imbalance_term: {} treated steps vs {} control steps",
            treated.len(),
            control.len()
        ));
    }
    let mut total = tape.scalar(0.0);
    let mut degenerate = 0;
    for (p, q) in treated.iter().zip(control) {
        match (p, q) {
            (Some(p), Some(q)) => {
                let out = sinkhorn_w1(tape, *p, *q, cfg)?;
                if out.empty_side {
                    degenerate += 1;
                }
                total = tape.add(total, out.distance)?;
            }
            _ => degenerate += 1,
        }
    }
    Ok((total, degenerate))
}
