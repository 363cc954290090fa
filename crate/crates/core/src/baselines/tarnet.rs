use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::protocol::{Method, ProtocolView};
use super::{require_arms, AteEstimate};
use crate::balance::{sinkhorn_w1, SinkhornConfig};
use crate::datagen::mix_seed;
use crate::error::{Error, Result};
use crate::ndcore::{Tape, Tensor, Var};
use crate::seqmodel::{Arm, Bound, Normalizer, ParamId, ParamStore};
use crate::trainer::{Adam, DIVERGENCE_LIMIT};

const SHUFFLE_TAG: u64 = 0x5441_524E;

#[derive(Debug, Clone, PartialEq)]
pub struct TarnetConfig {
    pub hidden: usize,
    /// 1 for one `tanh` representation layer, 0 to feed contexts straight
    /// to the arm heads.
    pub depth: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub sinkhorn: SinkhornConfig,
}

impl Default for TarnetConfig {
    fn default() -> Self {
        TarnetConfig {
            hidden: 32,
            depth: 1,
            gamma: 1e-6,
            lambda: 1e-6,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 100,
            seed: 0,
            sinkhorn: SinkhornConfig::TRAINING,
        }
    }
}

/// Representation layer plus one linear head per arm.
#[derive(Debug, Clone)]
pub struct TarnetLite {
    pub config: TarnetConfig,
    pub normalizer: Normalizer,
    store: ParamStore,
    rep: Option<(ParamId, ParamId)>,
    heads: [(ParamId, ParamId); 2],
}

impl TarnetLite {
    pub fn new(context_dim: usize, config: TarnetConfig) -> Result<Self> {
        if config.depth > 1 {
            return Err(Error::Config(format!("tarnet depth must be 0 or 1, got {}", config.depth)));
        }
        if config.batch_size < 2 || config.hidden == 0 {
            return Err(Error::Config("tarnet needs batch_size >= 2 and hidden >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let (rep, width) = if config.depth == 1 {
            let h = config.hidden;
            let w = store.push_uniform("rep.w", &[context_dim, h], context_dim, &mut rng);
            let b = store.push_uniform("rep.b", &[1, h], context_dim, &mut rng);
            (Some((w, b)), h)
        } else {
            (None, context_dim)
        };
        let mut head = |tag: &str| {
            (
                store.push_uniform(format!("{tag}.w"), &[width, 1], width, &mut rng),
                store.push_uniform(format!("{tag}.b"), &[1, 1], width, &mut rng),
            )
        };
        let heads = [head("head0"), head("head1")];
        Ok(TarnetLite { config, normalizer: Normalizer::identity(context_dim), store, rep, heads })
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    fn represent(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        match self.rep {
            Some((w, b)) => {
                let lin = crate::seqmodel::affine_rows(tape, x, p.var(w), p.var(b))?;
                Ok(tape.tanh(lin))
            }
            None => Ok(x),
        }
    }

    fn head(&self, tape: &mut Tape, p: &Bound, phi: Var, arm: Arm) -> Result<Var> {
        let (w, b) = self.heads[arm.index()];
        crate::seqmodel::affine_rows(tape, phi, p.var(w), p.var(b))
    }

    /// Squared error + `gamma` W-1 between arm representations + weight
    /// decay, on normalized inputs.
    fn loss(&self, tape: &mut Tape, p: &Bound, x: &Tensor, w: &[u8], y: &[f64]) -> Result<Var> {
        let n = w.len();
        let mut sse: Option<Var> = None;
        let mut reps: [Option<Var>; 2] = [None, None];
        let mut used = self.rep.map(|(a, b)| vec![a, b]).unwrap_or_default();
        for arm in Arm::BOTH {
            let idx: Vec<usize> = (0..n).filter(|&i| w[i] as usize == arm.index()).collect();
            if idx.is_empty() {
                continue;
            }
            let xv = tape.constant(x.select_rows(&idx));
            let phi = self.represent(tape, p, xv)?;
            let pred = self.head(tape, p, phi, arm)?;
            let yv = tape.constant(Tensor::column(&idx.iter().map(|&i| y[i]).collect::<Vec<_>>()));
            let e = tape.sub(pred, yv)?;
            let e = tape.square(e);
            let e = tape.sum(e);
            sse = Some(match sse {
                None => e,
                Some(acc) => tape.add(acc, e)?,
            });
            reps[arm.index()] = Some(phi);
            let (hw, hb) = self.heads[arm.index()];
            used.extend([hw, hb]);
        }
        let mut total = tape.scale(sse.expect("nonempty batch"), 1.0 / n as f64);
        if let ([Some(c), Some(t)], true) = (reps, self.config.gamma > 0.0 && self.rep.is_some()) {
            let w1 = sinkhorn_w1(tape, t, c, self.config.sinkhorn)?.distance;
            let w1 = tape.scale(w1, self.config.gamma);
            total = tape.add(total, w1)?;
        }
        for id in used {
            let sq = tape.square(p.var(id));
            let s = tape.sum(sq);
            let s = tape.scale(s, self.config.lambda);
            total = tape.add(total, s)?;
        }
        Ok(total)
    }

    /// Fits on raw contexts, treatments and scalar outcomes.
    pub fn fit(&mut self, x: &Tensor, w: &[u8], y: &[f64]) -> Result<()> {
        let n = w.len();
        if x.rows() != n || y.len() != n {
            return Err(Error::InvalidArgument(format!("{} contexts, {n} treatments, {} outcomes", x.rows(), y.len())));
        }
        self.normalizer = Normalizer::fit(x, y)?;
        let xn = self.normalizer.contexts(x)?;
        let yn: Vec<f64> = y.iter().map(|&v| self.normalizer.outcome(v)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[self.config.seed, SHUFFLE_TAG]));
        let mut adam = Adam::new(self.config.learning_rate);
        let mut by_arm: Vec<Vec<usize>> =
            Arm::BOTH.iter().map(|a| (0..n).filter(|&i| w[i] as usize == a.index()).collect()).collect();
        let nb = n.div_ceil(self.config.batch_size).max(1);
        for epoch in 0..self.config.epochs {
            for r in &mut by_arm {
                r.shuffle(&mut rng);
            }
            for k in 0..nb {
                let mut rows = Vec::new();
                for r in &by_arm {
                    rows.extend_from_slice(&r[k * r.len() / nb..(k + 1) * r.len() / nb]);
                }
                if rows.is_empty() {
                    continue;
                }
                let bw: Vec<u8> = rows.iter().map(|&i| w[i]).collect();
                let by: Vec<f64> = rows.iter().map(|&i| yn[i]).collect();
                let mut tape = Tape::new();
                let p = self.store.bind(&mut tape);
                let loss = self.loss(&mut tape, &p, &xn.select_rows(&rows), &bw, &by)?;
                let v = tape.value(loss).item()?;
                if !v.is_finite() || v > DIVERGENCE_LIMIT {
                    return Err(Error::Numerical(format!("tarnet_lite loss reached {v} in epoch {}", epoch + 1)));
                }
                let grads = tape.backward(loss)?;
                adam.step(&mut self.store, &p.gradients(&grads))?;
            }
        }
        Ok(())
    }

    /// Per-unit treated-minus-control head difference, raw units.
    pub fn predict_effect(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let xv = tape.constant(self.normalizer.contexts(x)?);
        let phi = self.represent(&mut tape, &p, xv)?;
        let y1 = self.head(&mut tape, &p, phi, Arm::Treated)?;
        let y0 = self.head(&mut tape, &p, phi, Arm::Control)?;
        let (a, b) = (tape.value(y1).data(), tape.value(y0).data());
        Ok(a.iter().zip(b).map(|(u, v)| self.normalizer.restore_difference(u - v)).collect())
    }

    /// Prediction of one arm's head, raw units.
    pub fn predict_arm(&self, x: &Tensor, arm: Arm) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let xv = tape.constant(self.normalizer.contexts(x)?);
        let phi = self.represent(&mut tape, &p, xv)?;
        let y = self.head(&mut tape, &p, phi, arm)?;
        Ok(tape.value(y).data().iter().map(|&z| self.normalizer.restore_outcome(z)).collect())
    }
}

/// Trains on the pooled source and target units with each unit's mean
/// short-term outcome as the label, then averages the head difference
/// over target units.
pub fn tarnet_lite(view: &ProtocolView, config: &TarnetConfig) -> Result<AteEstimate> {
    let xs = view.source_contexts();
    let xt = view.target_contexts();
    let (ws, wt) = (view.source_treatments(), view.target_treatments());
    let row_means = |s: &Tensor| -> Vec<f64> {
        (0..s.rows()).map(|i| s.row_slice(i).iter().sum::<f64>() / s.cols() as f64).collect()
    };
    let mut y = row_means(&view.source_short());
    y.extend(row_means(&view.target_short()));
    let mut rows: Vec<Vec<f64>> = (0..xs.rows()).map(|i| xs.row_slice(i).to_vec()).collect();
    rows.extend((0..xt.rows()).map(|i| xt.row_slice(i).to_vec()));
    let x = Tensor::from_rows(&rows)?;
    let w: Vec<u8> = ws.iter().chain(&wt).copied().collect();
    require_arms(&w, "pooled units")?;
    if xt.rows() == 0 {
        return Err(Error::Estimation("no target units".into()));
    }

    let mut net = TarnetLite::new(view.context_dim(), config.clone())?;
    net.fit(&x, &w, &y)?;
    let effects = net.predict_effect(&xt)?;
    let value = effects.iter().sum::<f64>() / effects.len() as f64;
    Ok(AteEstimate { method: Method::TarnetLite, value, inputs_used: view.reads() })
}
