//! The double-headed recurrent outcome model.
//!
//! A context encoder maps covariates to the initial GRU state. Each
//! treatment arm owns a GRU that consumes the previous outcome and emits one
//! surrogate representation per short-term step; a short-term head reads
//! each representation, and an attention pool condenses the sequence into
//! one vector that, together with the context code and the arm indicator,
//! feeds the long-term head.
//!
//! GRU update used throughout (`[a, b]` is concatenation, rows are units):
//!
//! ```text
//! z  = sigmoid([h, y] Wz + bz)
//! r  = sigmoid([h, y] Wr + br)
//! h~ = tanh([r * h, y] Wh + bh)
//! h' = (1 - z) * h + z * h~
//! ```
//!
//! Everything on the tape works in normalized units; the per-unit helpers
//! take and return raw values.

mod checkpoint;
mod normalize;
mod params;

#[cfg(test)]
mod tests;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::ndcore::{Tape, Tensor, Var};

pub use normalize::Normalizer;
pub use params::{Bound, ParamId, ParamStore};

/// Treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    pub fn from_indicator(w: u8) -> Result<Arm> {
        match w {
            0 => Ok(Arm::Control),
            1 => Ok(Arm::Treated),
            _ => invalid(format!("treatment indicator must be 0 or 1, got {w}")),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn indicator(self) -> f64 {
        self.index() as f64
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub context_dim: usize,
    /// Representation size.
    pub hidden: usize,
    /// Number of short-term steps.
    pub t0: usize,
    /// One short-term head per arm shared over steps; `false` gives each
    /// step its own head.
    pub tied_short_heads: bool,
    /// Share the GRU and output heads between arms.
    pub single_head: bool,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(context_dim: usize, t0: usize) -> Self {
        ModelConfig { context_dim, hidden: 64, t0, tied_short_heads: true, single_head: false, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_dim == 0 || self.hidden == 0 || self.t0 == 0 {
            return Err(crate::Error::Config(format!(
                "context_dim, hidden and t0 must be positive (got {}, {}, {})",
                self.context_dim, self.hidden, self.t0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GruIds {
    gates_w: ParamId,
    gates_b: ParamId,
    cand_w: ParamId,
    cand_b: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
struct ArmIds {
    gru: GruIds,
    short: Vec<Affine>,
    primary: Affine,
}

impl ArmIds {
    fn all(&self) -> Vec<ParamId> {
        let mut v = vec![self.gru.gates_w, self.gru.gates_b, self.gru.cand_w, self.gru.cand_b];
        for h in &self.short {
            v.extend([h.w, h.b]);
        }
        v.extend([self.primary.w, self.primary.b]);
        v
    }
}

/// Parameters and layout of the LTEE network.
#[derive(Debug, Clone, PartialEq)]
pub struct LteeModel {
    config: ModelConfig,
    store: ParamStore,
    pub normalizer: Normalizer,
    encoder: Affine,
    attn_a: ParamId,
    attn_b: ParamId,
    attn_u: ParamId,
    arms: [ArmIds; 2],
}

/// Tape handles for one arm's forward pass over a batch.
#[derive(Debug, Clone)]
pub struct BatchPath {
    pub arm: Arm,
    /// `[n, D]`.
    pub context: Var,
    /// One `[n, D]` entry per short-term step.
    pub reps: Vec<Var>,
    /// `[n, t0]`.
    pub alphas: Var,
    /// `[n, D]`.
    pub agg: Var,
    /// `[n, t0]`.
    pub short: Var,
    /// `[n, 1]`.
    pub primary: Var,
}

/// Per-unit view of a forward pass, in raw outcome units.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogatePath {
    pub arm: Arm,
    pub reps: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub agg: Vec<f64>,
    pub short_preds: Vec<f64>,
    pub primary_pred: f64,
}

impl LteeModel {
    /// Seeded initialization.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, h) = (config.context_dim, config.hidden);
        let mut store = ParamStore::new();

        let encoder = Affine {
            w: store.push_uniform("encoder.w", &[d, h], d, &mut rng),
            b: store.push_uniform("encoder.b", &[1, h], d, &mut rng),
        };
        let attn_a = store.push_uniform("attention.a", &[h, h], h, &mut rng);
        let attn_b = store.push_uniform("attention.b", &[1, h], h, &mut rng);
        let attn_u = store.push_uniform("attention.u", &[h, 1], h, &mut rng);

        let mut make_arm = |tag: &str, store: &mut ParamStore| {
            let gru = GruIds {
                gates_w: store.push_uniform(format!("{tag}.gru.gates_w"), &[h + 1, 2 * h], h + 1, &mut rng),
                gates_b: store.push_uniform(format!("{tag}.gru.gates_b"), &[1, 2 * h], h + 1, &mut rng),
                cand_w: store.push_uniform(format!("{tag}.gru.cand_w"), &[h + 1, h], h + 1, &mut rng),
                cand_b: store.push_uniform(format!("{tag}.gru.cand_b"), &[1, h], h + 1, &mut rng),
            };
            let n_short = if config.tied_short_heads { 1 } else { config.t0 };
            let short = (0..n_short)
                .map(|t| Affine {
                    w: store.push_uniform(format!("{tag}.short{t}.w"), &[h + 1, 1], h + 1, &mut rng),
                    b: store.push_uniform(format!("{tag}.short{t}.b"), &[1, 1], h + 1, &mut rng),
                })
                .collect();
            let primary = Affine {
                w: store.push_uniform(format!("{tag}.primary.w"), &[2 * h + 1, 1], 2 * h + 1, &mut rng),
                b: store.push_uniform(format!("{tag}.primary.b"), &[1, 1], 2 * h + 1, &mut rng),
            };
            ArmIds { gru, short, primary }
        };
        let arms = if config.single_head {
            let shared = make_arm("shared", &mut store);
            [shared.clone(), shared]
        } else {
            let a0 = make_arm("arm0", &mut store);
            let a1 = make_arm("arm1", &mut store);
            [a0, a1]
        };
        let normalizer = Normalizer::identity(d);
        Ok(LteeModel { config, store, normalizer, encoder, attn_a, attn_b, attn_u, arms })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Encoder and attention parameters.
    pub fn shared_params(&self) -> Vec<ParamId> {
        vec![self.encoder.w, self.encoder.b, self.attn_a, self.attn_b, self.attn_u]
    }

    /// GRU and head parameters used by one arm.
    pub fn arm_params(&self, arm: Arm) -> Vec<ParamId> {
        self.arms[arm.index()].all()
    }

    /// Every parameter a batch touching `arms` can reach, without duplicates.
    pub fn reachable_params(&self, arms: &[Arm]) -> Vec<ParamId> {
        let mut ids = self.shared_params();
        for &a in arms {
            ids.extend(self.arm_params(a));
        }
        ids.sort();
        ids.dedup();
        ids
    }

    /// `tanh(x W + c)` for a normalized `[n, d]` context matrix.
    pub fn encode_on_tape(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let cols = tape.value(x).cols();
        if cols != self.config.context_dim {
            return invalid(format!(
                "context has {cols} columns, model expects {}",
                self.config.context_dim
            ));
        }
        let lin = affine_rows(tape, x, p.var(self.encoder.w), p.var(self.encoder.b))?;
        Ok(tape.tanh(lin))
    }

    /// One GRU update for a batch: `h` is `[n, D]`, `input` is `[n, 1]`.
    pub fn gru_on_tape(&self, tape: &mut Tape, p: &Bound, arm: Arm, h: Var, input: Var) -> Result<Var> {
        let g = self.arms[arm.index()].gru;
        let dim = self.config.hidden;
        let hx = tape.concat(&[h, input])?;
        let gates = affine_rows(tape, hx, p.var(g.gates_w), p.var(g.gates_b))?;
        let gates = tape.sigmoid(gates);
        let z = tape.slice_cols(gates, 0, dim)?;
        let r = tape.slice_cols(gates, dim, 2 * dim)?;
        let rh = tape.mul(r, h)?;
        let rhx = tape.concat(&[rh, input])?;
        let cand = affine_rows(tape, rhx, p.var(g.cand_w), p.var(g.cand_b))?;
        let cand = tape.tanh(cand);
        // h + z * (h~ - h)
        let diff = tape.sub(cand, h)?;
        let step = tape.mul(z, diff)?;
        tape.add(h, step)
    }

    /// Attention pool over `reps` (each `[n, D]`): returns `(agg, alphas)`.
    pub fn attend_on_tape(&self, tape: &mut Tape, p: &Bound, reps: &[Var]) -> Result<(Var, Var)> {
        if reps.is_empty() {
            return invalid("attention over an empty sequence");
        }
        let (a, b, u) = (p.var(self.attn_a), p.var(self.attn_b), p.var(self.attn_u));
        let mut scores = Vec::with_capacity(reps.len());
        for &s in reps {
            let key = affine_rows(tape, s, a, b)?;
            let key = tape.tanh(key);
            scores.push(tape.matmul(key, u)?);
        }
        let scores = tape.concat(&scores)?;
        let alphas = tape.softmax(scores);
        let dim = self.config.hidden;
        let mut agg: Option<Var> = None;
        for (t, &s) in reps.iter().enumerate() {
            let w = tape.slice_cols(alphas, t, t + 1)?;
            let w = tape.repeat_cols(w, dim)?;
            let term = tape.mul(w, s)?;
            agg = Some(match agg {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
        Ok((agg.expect("nonempty"), alphas))
    }

    /// Forward pass of one arm over a batch of normalized contexts.
    ///
    /// With `teacher` (`[n, t0]`, normalized) the observed previous outcome
    /// feeds each step; without it the previous prediction does.
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        p: &Bound,
        x: Var,
        arm: Arm,
        teacher: Option<Var>,
    ) -> Result<BatchPath> {
        let n = tape.value(x).rows();
        let t0 = self.config.t0;
        if let Some(tv) = teacher {
            let s = tape.value(tv).shape();
            if s != [n, t0] {
                return invalid(format!("teacher outcomes have shape {s:?}, expected [{n}, {t0}]"));
            }
        }
        let ids = &self.arms[arm.index()];
        let context = self.encode_on_tape(tape, p, x)?;
        let indicator = tape.constant(Tensor::filled(&[n, 1], arm.indicator()));

        let mut h = context;
        let mut input = tape.constant(Tensor::zeros(&[n, 1]));
        let mut reps = Vec::with_capacity(t0);
        let mut preds = Vec::with_capacity(t0);
        for t in 0..t0 {
            h = self.gru_on_tape(tape, p, arm, h, input)?;
            reps.push(h);
            let head = ids.short[if self.config.tied_short_heads { 0 } else { t }];
            let feat = tape.concat(&[h, indicator])?;
            let y = affine_rows(tape, feat, p.var(head.w), p.var(head.b))?;
            preds.push(y);
            if t + 1 < t0 {
                input = match teacher {
                    Some(tv) => tape.slice_cols(tv, t, t + 1)?,
                    None => y,
                };
            }
        }
        let (agg, alphas) = self.attend_on_tape(tape, p, &reps)?;
        let short = tape.concat(&preds)?;
        let feat = tape.concat(&[context, agg, indicator])?;
        let primary = affine_rows(tape, feat, p.var(ids.primary.w), p.var(ids.primary.b))?;
        Ok(BatchPath { arm, context, reps, alphas, agg, short, primary })
    }

    /// Per-unit paths for raw contexts `x` (`[n, d]`) and optional raw
    /// teacher outcomes (`[n, t0]`).
    pub fn forward_paths(&self, x: &Tensor, arm: Arm, teacher: Option<&Tensor>) -> Result<Vec<SurrogatePath>> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let xv = tape.constant(self.normalizer.contexts(x)?);
        let tv = teacher.map(|t| tape.constant(self.normalizer.outcomes(t)));
        let path = self.forward_batch(&mut tape, &p, xv, arm, tv)?;

        let n = x.rows();
        let alphas = tape.value(path.alphas);
        let agg = tape.value(path.agg);
        let short = tape.value(path.short);
        let primary = tape.value(path.primary);
        Ok((0..n)
            .map(|i| SurrogatePath {
                arm,
                reps: path.reps.iter().map(|&r| tape.value(r).row_slice(i).to_vec()).collect(),
                alphas: alphas.row_slice(i).to_vec(),
                agg: agg.row_slice(i).to_vec(),
                short_preds: short.row_slice(i).iter().map(|&z| self.normalizer.restore_outcome(z)).collect(),
                primary_pred: self.normalizer.restore_outcome(primary.data()[i]),
            })
            .collect())
    }

    pub fn forward_arm(&self, x: &[f64], arm: Arm, teacher: Option<&[f64]>) -> Result<SurrogatePath> {
        let xt = Tensor::row(x);
        let tt = teacher.map(Tensor::row);
        Ok(self.forward_paths(&xt, arm, tt.as_ref())?.remove(0))
    }

    /// Long-term prediction per unit for one arm, autoregressive, raw units.
    pub fn predict_primary(&self, x: &Tensor, arm: Arm) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let xv = tape.constant(self.normalizer.contexts(x)?);
        let path = self.forward_batch(&mut tape, &p, xv, arm, None)?;
        Ok(tape.value(path.primary).data().iter().map(|&z| self.normalizer.restore_outcome(z)).collect())
    }

    /// Treated minus control long-term prediction for each row of `x`.
    pub fn predict_ite_batch(&self, x: &Tensor) -> Result<Vec<f64>> {
        let y1 = self.predict_primary(x, Arm::Treated)?;
        let y0 = self.predict_primary(x, Arm::Control)?;
        Ok(y1.iter().zip(&y0).map(|(a, b)| a - b).collect())
    }

    pub fn predict_ite(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_ite_batch(&Tensor::row(x))?[0])
    }

    /// Context code of one raw covariate vector.
    pub fn encode_context(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.config.context_dim {
            return invalid(format!(
                "context has length {}, model expects {}",
                x.len(),
                self.config.context_dim
            ));
        }
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let xv = tape.constant(self.normalizer.contexts(&Tensor::row(x))?);
        let c = self.encode_on_tape(&mut tape, &p, xv)?;
        Ok(tape.value(c).data().to_vec())
    }

    /// One GRU update on a single latent state.
    pub fn gru_step(&self, h: &[f64], input: f64, arm: Arm) -> Result<Vec<f64>> {
        if h.len() != self.config.hidden {
            return invalid(format!("state has length {}, expected {}", h.len(), self.config.hidden));
        }
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let hv = tape.constant(Tensor::row(h));
        let iv = tape.constant(Tensor::matrix(1, 1, vec![input])?);
        let out = self.gru_on_tape(&mut tape, &p, arm, hv, iv)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Attention pool over a single unit's representation sequence.
    pub fn attention_aggregate(&self, reps: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let mut vars = Vec::with_capacity(reps.len());
        for r in reps {
            if r.len() != self.config.hidden {
                return invalid(format!("representation has length {}, expected {}", r.len(), self.config.hidden));
            }
            vars.push(tape.constant(Tensor::row(r)));
        }
        let (agg, alphas) = self.attend_on_tape(&mut tape, &p, &vars)?;
        Ok((tape.value(agg).data().to_vec(), tape.value(alphas).data().to_vec()))
    }

    /// Sum of squared parameter values over `ids`.
    pub fn squared_norm(&self, ids: &[ParamId]) -> f64 {
        ids.iter().map(|&id| self.store.get(id).sum_squares()).sum()
    }
}

/// `x W + b` with `b` a `[1, k]` row added to every row.
pub(crate) fn affine_rows(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let n = tape.value(x).rows();
    let xw = tape.matmul(x, w)?;
    let bb = tape.repeat_rows(b, n)?;
    tape.add(xw, bb)
}
