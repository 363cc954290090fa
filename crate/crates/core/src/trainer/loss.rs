use crate::balance::{imbalance_term, SinkhornConfig};
use crate::error::{invalid, Result};
use crate::ndcore::{Tape, Tensor, Var};
use crate::seqmodel::{Arm, Bound, LteeModel};

/// A minibatch in normalized units.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[n, d]` contexts.
    pub x: Tensor,
    pub w: Vec<u8>,
    /// `[n, t0]` factual short-term outcomes.
    pub short: Tensor,
    /// Factual long-term outcome per unit.
    pub long: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Rows `idx` of a larger batch.
    pub fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            x: self.x.select_rows(idx),
            w: idx.iter().map(|&i| self.w[i]).collect(),
            short: self.short.select_rows(idx),
            long: idx.iter().map(|&i| self.long[i]).collect(),
        }
    }

    fn rows_of(&self, arm: Arm) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.w[i] as usize == arm.index()).collect()
    }
}

/// Weights and switches of the training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub gamma: f64,
    pub lambda: f64,
    pub teacher_forcing: bool,
    pub sinkhorn: SinkhornConfig,
}

/// Tape handles of one objective evaluation.
#[derive(Debug, Clone)]
pub struct LossParts {
    pub total: Var,
    /// Mean over units of the per-step short-term squared error.
    pub short: Var,
    /// Mean over units of the long-term squared error.
    pub long: Var,
    /// Unweighted sum over steps of the transport distance; zero when the
    /// balancing term is off.
    pub imbalance: Var,
    /// Unweighted squared norm of the reachable parameters.
    pub norm: Var,
    /// Steps whose transport term was skipped for lack of an arm.
    pub degenerate: usize,
    pub arms: Vec<Arm>,
}

/// Short-term error + long-term error + `gamma` times the summed per-step
/// imbalance + `lambda` times the squared parameter norm.
///
/// Each unit is pushed through its own arm only. With `gamma == 0` the
/// transport solver is never called.
pub fn assemble_loss(
    tape: &mut Tape,
    model: &LteeModel,
    p: &Bound,
    batch: &Batch,
    weights: &LossWeights,
) -> Result<LossParts> {
    let n = batch.len();
    let t0 = model.config().t0;
    if n == 0 {
        return invalid("empty batch");
    }
    if batch.short.shape() != [n, t0] || batch.long.len() != n || batch.x.rows() != n {
        return invalid(format!(
            "batch of {n} units has short {:?}, {} long outcomes and {} contexts",
            batch.short.shape(),
            batch.long.len(),
            batch.x.rows()
        ));
    }

    let mut short_sse: Option<Var> = None;
    let mut long_sse: Option<Var> = None;
    let mut reps: [Option<Vec<Var>>; 2] = [None, None];
    let mut arms = Vec::new();
    for arm in Arm::BOTH {
        let idx = batch.rows_of(arm);
        if idx.is_empty() {
            continue;
        }
        arms.push(arm);
        let x = tape.constant(batch.x.select_rows(&idx));
        let ys = tape.constant(batch.short.select_rows(&idx));
        let yl = tape.constant(Tensor::column(&idx.iter().map(|&i| batch.long[i]).collect::<Vec<_>>()));
        let teacher = weights.teacher_forcing.then_some(ys);
        let path = model.forward_batch(tape, p, x, arm, teacher)?;

        let e = tape.sub(path.short, ys)?;
        let e = tape.square(e);
        let e = tape.sum(e);
        short_sse = Some(match short_sse {
            None => e,
            Some(acc) => tape.add(acc, e)?,
        });
        let e = tape.sub(path.primary, yl)?;
        let e = tape.square(e);
        let e = tape.sum(e);
        long_sse = Some(match long_sse {
            None => e,
            Some(acc) => tape.add(acc, e)?,
        });
        reps[arm.index()] = Some(path.reps);
    }
    let short = tape.scale(short_sse.expect("some arm"), 1.0 / (n * t0) as f64);
    let long = tape.scale(long_sse.expect("some arm"), 1.0 / n as f64);

    let degenerate = if arms.len() < 2 { t0 } else { 0 };
    let imbalance = if weights.gamma > 0.0 {
        let side = |a: Arm| -> Vec<Option<Var>> {
            match &reps[a.index()] {
                Some(r) => r.iter().map(|&v| Some(v)).collect(),
                None => vec![None; t0],
            }
        };
        imbalance_term(tape, &side(Arm::Treated), &side(Arm::Control), weights.sinkhorn)?.0
    } else {
        tape.scalar(0.0)
    };

    let mut norm = tape.scalar(0.0);
    for id in model.reachable_params(&arms) {
        let sq = tape.square(p.var(id));
        let s = tape.sum(sq);
        norm = tape.add(norm, s)?;
    }

    let mut total = tape.add(short, long)?;
    if weights.gamma > 0.0 {
        let w = tape.scale(imbalance, weights.gamma);
        total = tape.add(total, w)?;
    }
    let reg = tape.scale(norm, weights.lambda);
    let total = tape.add(total, reg)?;
    Ok(LossParts { total, short, long, imbalance, norm, degenerate, arms })
}
