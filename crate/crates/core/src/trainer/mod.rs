//! Minibatch training of the sequence model on source units.
//!
//! Each batch gets a fresh tape: forward through the unit's own arm, sum
//! the squared errors, add the weighted transport and weight-decay terms,
//! backpropagate and take one Adam step. Batches keep the source arm ratio.
//! After every epoch the full objective is evaluated on a seeded validation
//! slice and the best parameters so far are kept; training stops after
//! `patience` epochs without improvement.
//!
//! Only source blocks are read, through the [`ProtocolView`].

mod adam;
mod loss;

#[cfg(test)]
mod tests;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::balance::SinkhornConfig;
use crate::baselines::ProtocolView;
use crate::datagen::{mix_seed, DatasetKind, PanelDataset};
use crate::error::{Error, Result};
use crate::ndcore::Tape;
use crate::seqmodel::{Arm, LteeModel, ModelConfig, Normalizer, ParamStore};

pub use adam::Adam;
pub use loss::{assemble_loss, Batch, LossParts, LossWeights};

// Sub-stream tag for validation split and batch order.
const SHUFFLE_TAG: u64 = 0x5348_5546;

/// Losses above this count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the summed per-step imbalance.
    pub gamma: f64,
    /// Weight decay on reachable parameters.
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub teacher_forcing: bool,
    pub single_head: bool,
    pub hidden: usize,
    pub tied_short_heads: bool,
    pub validation_fraction: f64,
    pub sinkhorn: SinkhornConfig,
}

impl TrainConfig {
    /// Defaults with the dataset-specific imbalance weight.
    pub fn for_kind(kind: DatasetKind) -> Self {
        TrainConfig {
            gamma: match kind {
                DatasetKind::Ihdp => 1e-8,
                DatasetKind::News => 1e-10,
            },
            lambda: 1e-6,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 300,
            patience: 30,
            seed: 0,
            teacher_forcing: true,
            single_head: false,
            hidden: 64,
            tied_short_heads: true,
            validation_fraction: 0.1,
            sinkhorn: SinkhornConfig::TRAINING,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if self.hidden == 0 {
            return bad("hidden must be positive".into());
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return bad(format!("validation_fraction must be in [0, 0.5), got {}", self.validation_fraction));
        }
        if self.sinkhorn.iters == 0 {
            return bad("sinkhorn_iters must be positive".into());
        }
        Ok(())
    }

    /// Flat `key = value` echo, readable by [`TrainConfig::set`].
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("gamma", self.gamma.to_string()),
            ("lambda", self.lambda.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("train_seed", self.seed.to_string()),
            ("teacher_forcing", self.teacher_forcing.to_string()),
            ("single_head", self.single_head.to_string()),
            ("hidden", self.hidden.to_string()),
            ("tied_short_heads", self.tied_short_heads.to_string()),
            ("validation_fraction", self.validation_fraction.to_string()),
            ("sinkhorn_iters", self.sinkhorn.iters.to_string()),
        ]
    }

    /// Applies one setting; `Ok(false)` when the key is not a training key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
        }
        match key {
            "gamma" => self.gamma = p(key, value)?,
            "lambda" => self.lambda = p(key, value)?,
            "learning_rate" | "lr" => self.learning_rate = p(key, value)?,
            "batch_size" => self.batch_size = p(key, value)?,
            "epochs" => self.epochs = p(key, value)?,
            "patience" => self.patience = p(key, value)?,
            "train_seed" => self.seed = p(key, value)?,
            "teacher_forcing" => self.teacher_forcing = p(key, value)?,
            "single_head" => self.single_head = p(key, value)?,
            "hidden" => self.hidden = p(key, value)?,
            "tied_short_heads" => self.tied_short_heads = p(key, value)?,
            "validation_fraction" => self.validation_fraction = p(key, value)?,
            "sinkhorn_iters" => self.sinkhorn.iters = p(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            gamma: self.gamma,
            lambda: self.lambda,
            teacher_forcing: self.teacher_forcing,
            sinkhorn: self.sinkhorn,
        }
    }
}

/// Epoch averages of the objective terms over training batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l1: f64,
    pub l2: f64,
    pub w1_sum: f64,
    pub total: f64,
    /// Full objective on the validation slice; NaN without one.
    pub val_total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Parameters at the best validation loss.
    pub model: LteeModel,
    pub history: Vec<EpochRecord>,
    /// 0 means the initial parameters were never beaten.
    pub best_epoch: usize,
    pub best_val_total: f64,
    /// Batch steps whose transport term was skipped for lack of an arm.
    pub degenerate_steps: usize,
    /// Set when training stopped on a divergent loss; `model` then holds
    /// the last good checkpoint.
    pub diverged: Option<String>,
}

impl TrainOutput {
    /// `epoch,l1,l2,w1_sum,total,val_total` rows.
    pub fn write_history(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "epoch,l1,l2,w1_sum,total,val_total")?;
        for r in &self.history {
            writeln!(f, "{},{:?},{:?},{:?},{:?},{:?}", r.epoch, r.l1, r.l2, r.w1_sum, r.total, r.val_total)?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Objective values of the whole `batch` at the current parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub l1: f64,
    pub l2: f64,
    pub w1_sum: f64,
    pub norm: f64,
    pub total: f64,
    pub degenerate: usize,
}

/// Evaluates the objective without building gradients.
pub fn evaluate_loss(model: &LteeModel, batch: &Batch, weights: &LossWeights) -> Result<LossValues> {
    let mut tape = Tape::new();
    let p = model.params().bind_frozen(&mut tape);
    let parts = assemble_loss(&mut tape, model, &p, batch, weights)?;
    let v = |x| tape.value(x).item();
    Ok(LossValues {
        l1: v(parts.short)?,
        l2: v(parts.long)?,
        w1_sum: v(parts.imbalance)?,
        norm: v(parts.norm)?,
        total: v(parts.total)?,
        degenerate: parts.degenerate,
    })
}

/// Source training data in normalized units plus the fitted normalizer.
fn source_batch(view: &ProtocolView) -> Result<(Batch, Normalizer)> {
    let x = view.source_contexts();
    let short = view.source_short();
    let long = view.source_long();
    let mut pooled: Vec<f64> = short.data().to_vec();
    pooled.extend_from_slice(&long);
    let norm = Normalizer::fit(&x, &pooled)?;
    let batch = Batch {
        x: norm.contexts(&x)?,
        w: view.source_treatments(),
        short: norm.outcomes(&short),
        long: long.iter().map(|&y| norm.outcome(y)).collect(),
    };
    Ok((batch, norm))
}

/// Per-arm seeded split into (train, validation) row indices.
fn split_validation(w: &[u8], fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for arm in Arm::BOTH {
        let mut rows: Vec<usize> = (0..w.len()).filter(|&i| w[i] as usize == arm.index()).collect();
        rows.shuffle(rng);
        // keep at least one unit of each arm for training
        let k = ((rows.len() as f64 * fraction).round() as usize).min(rows.len().saturating_sub(1));
        val.extend_from_slice(&rows[..k]);
        train.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Arm-stratified batches: both arms are cut into the same number of
/// contiguous chunks after shuffling.
fn stratified_batches(rows: &[usize], w: &[u8], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let nb = rows.len().div_ceil(batch_size).max(1);
    let mut by_arm: Vec<Vec<usize>> = Arm::BOTH
        .iter()
        .map(|a| rows.iter().copied().filter(|&i| w[i] as usize == a.index()).collect())
        .collect();
    for r in &mut by_arm {
        r.shuffle(rng);
    }
    (0..nb)
        .map(|k| {
            let mut b = Vec::new();
            for r in &by_arm {
                b.extend_from_slice(&r[k * r.len() / nb..(k + 1) * r.len() / nb]);
            }
            b
        })
        .filter(|b| !b.is_empty())
        .collect()
}

fn check_finite(v: f64, what: &str) -> std::result::Result<(), String> {
    if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
        Err(format!("{what} reached {v}"))
    } else {
        Ok(())
    }
}

/// Trains a fresh model on the source units of `view`.
///
/// Divergence (a non-finite loss or gradient, or a loss above
/// [`DIVERGENCE_LIMIT`]) stops training and returns the last good
/// checkpoint with `diverged` set.
pub fn train(view: &ProtocolView, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let (all, normalizer) = source_batch(view)?;
    for arm in Arm::BOTH {
        if !all.w.iter().any(|&v| v as usize == arm.index()) {
            return Err(Error::Estimation(format!("source has no {arm:?} units")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, SHUFFLE_TAG]));
    let (train_rows, val_rows) = split_validation(&all.w, config.validation_fraction, &mut rng);
    let val = (!val_rows.is_empty()).then(|| all.select(&val_rows));

    let mut mc = ModelConfig::new(view.context_dim(), view.t0());
    mc.hidden = config.hidden;
    mc.single_head = config.single_head;
    mc.tied_short_heads = config.tied_short_heads;
    mc.seed = config.seed;
    let mut model = LteeModel::new(mc)?;
    model.normalizer = normalizer;

    let weights = config.loss_weights();
    let val_loss = |m: &LteeModel| -> Result<f64> {
        match &val {
            Some(v) => Ok(evaluate_loss(m, v, &weights)?.total),
            None => Ok(f64::NAN),
        }
    };
    let mut best_params: ParamStore = model.params().clone();
    let mut best_val = val_loss(&model)?;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut adam = Adam::new(config.learning_rate);
    let mut history = Vec::new();
    let mut degenerate_steps = 0;
    let mut diverged = None;

    'epochs: for epoch in 1..=config.epochs {
        let batches = stratified_batches(&train_rows, &all.w, config.batch_size, &mut rng);
        let mut acc = [0.0; 4];
        let mut seen = 0usize;
        for rows in &batches {
            let batch = all.select(rows);
            let mut tape = Tape::new();
            let p = model.params().bind(&mut tape);
            let parts = assemble_loss(&mut tape, &model, &p, &batch, &weights)?;
            let total = tape.value(parts.total).item()?;
            if let Err(msg) = check_finite(total, "training loss") {
                diverged = Some(format!("epoch {epoch}: {msg}"));
                break 'epochs;
            }
            degenerate_steps += parts.degenerate;
            let grads = tape.backward(parts.total)?;
            let g = p.gradients(&grads);
            match adam.step(model.params_mut(), &g) {
                Ok(()) => {}
                Err(Error::Numerical(msg)) => {
                    diverged = Some(format!("epoch {epoch}: {msg}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            let nb = batch.len() as f64;
            for (a, x) in acc.iter_mut().zip([parts.short, parts.long, parts.imbalance, parts.total]) {
                *a += nb * tape.value(x).item()?;
            }
            seen += batch.len();
        }
        let [l1, l2, w1_sum, total] = acc.map(|a| a / seen.max(1) as f64);
        let val_total = val_loss(&model)?;
        history.push(EpochRecord { epoch, l1, l2, w1_sum, total, val_total });
        if val.is_some() {
            if let Err(msg) = check_finite(val_total, "validation loss") {
                diverged = Some(format!("epoch {epoch}: {msg}"));
                break;
            }
        }
        // Without a validation slice the latest parameters are kept.
        if val.is_none() || val_total < best_val {
            best_val = val_total;
            best_params = model.params().clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    *model.params_mut() = best_params;
    Ok(TrainOutput { model, history, best_epoch, best_val_total: best_val, degenerate_steps, diverged })
}

/// [`train`] over a whole panel, reading source blocks only.
pub fn train_on(ds: &PanelDataset, config: &TrainConfig) -> Result<TrainOutput> {
    train(&ProtocolView::new(ds), config)
}

/// All source units as one normalized [`Batch`], with the normalizer
/// fitted on them.
pub fn normalized_source(view: &ProtocolView) -> Result<(Batch, Normalizer)> {
    source_batch(view)
}
