use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::seed::{self, stream};
use super::{roll_sequence, SimConfig};
use crate::error::{Error, Result};
use crate::ndcore::{sigmoid, Tensor};

// Coefficient support and weights for the outcome surface.
const BETA_VALUES: [f64; 5] = [0.0, 1.0, 2.0, 3.0, 4.0];
const BETA_PROBS: [f64; 5] = [0.5, 0.2, 0.15, 0.1, 0.05];

// Nonzero entries in the propensity coefficient vector.
const PROPENSITY_SUPPORT: usize = 5;

// Draw budget per requested unit when filling arm quotas.
const MAX_DRAWS_PER_UNIT: usize = 1000;

/// IHDP-style covariates and assignments.
#[derive(Debug, Clone)]
pub struct IhdpCovariates {
    pub x: Tensor,
    pub w: Vec<u8>,
    /// Per binary column success probability.
    pub binary_probs: Vec<f64>,
    /// Propensity logit coefficients (already scaled).
    pub propensity_coef: Vec<f64>,
}

/// Covariates with a sparse logistic propensity, thinned to the configured
/// treated share.
///
/// Units are drawn one at a time; a draw is kept only while its arm still
/// has room, which drops surplus treated units the way the original study
/// was made unbalanced.
pub fn gen_ihdp_covariates(config: &SimConfig) -> Result<IhdpCovariates> {
    let mut rng = stream(config.seed, config.replication, seed::COVARIATES);
    let d = config.context_dim;
    let n_cont = config.n_continuous;
    let binary_probs: Vec<f64> = (n_cont..d)
        .map(|_| config.binary_prob.unwrap_or_else(|| rng.random_range(0.1..=0.9)))
        .collect();

    let coef = propensity_coefficients(&mut rng, d, config.propensity_scale);

    let n = config.n_units;
    let quota = config.treated_fraction.map(|f| {
        let nt = (n as f64 * f).round() as usize;
        (nt, n - nt)
    });
    if let Some((nt, nc)) = quota {
        if nt < 2 || nc < 2 {
            return Err(Error::Config(format!(
                "{n} units with treated_fraction {:?} leave {nt} treated and {nc} control; overlap needs at least 2 of each",
                config.treated_fraction
            )));
        }
    }

    let draw_unit = |rng: &mut rand_chacha::ChaCha8Rng| -> (Vec<f64>, u8) {
        let mut row = Vec::with_capacity(d);
        for _ in 0..n_cont {
            row.push(rng.sample::<f64, _>(StandardNormal));
        }
        for &p in &binary_probs {
            row.push(if rng.random_bool(p) { 1.0 } else { 0.0 });
        }
        let mut logit = 0.0;
        for (j, (&c, &v)) in coef.iter().zip(&row).enumerate() {
            // centre binaries so the logit has mean near zero
            let centred = if j < n_cont { v } else { v - binary_probs[j - n_cont] };
            logit += c * centred;
        }
        let w = u8::from(rng.random_bool(sigmoid(logit)));
        (row, w)
    };

    let mut data = Vec::with_capacity(n * d);
    let mut w = Vec::with_capacity(n);
    match quota {
        None => {
            for _ in 0..n {
                let (row, wi) = draw_unit(&mut rng);
                data.extend(row);
                w.push(wi);
            }
            let nt = w.iter().filter(|&&v| v == 1).count();
            if nt < 2 || n - nt < 2 {
                return Err(Error::Config(format!("draw produced {nt} treated of {n}; overlap needs both arms")));
            }
        }
        Some((nt, nc)) => {
            let (mut kt, mut kc) = (0, 0);
            let mut draws = 0;
            while kt < nt || kc < nc {
                draws += 1;
                if draws > MAX_DRAWS_PER_UNIT * n {
                    return Err(Error::Config(format!(
                        "could not fill {nt} treated / {nc} control quotas; propensity too extreme"
                    )));
                }
                let (row, wi) = draw_unit(&mut rng);
                let room = if wi == 1 { kt < nt } else { kc < nc };
                if room {
                    if wi == 1 {
                        kt += 1;
                    } else {
                        kc += 1;
                    }
                    data.extend(row);
                    w.push(wi);
                }
            }
        }
    }
    Ok(IhdpCovariates { x: Tensor::matrix(n, d, data)?, w, binary_probs, propensity_coef: coef })
}

fn propensity_coefficients<R: Rng>(rng: &mut R, d: usize, scale: f64) -> Vec<f64> {
    let mut coef = vec![0.0; d];
    let mut picked = 0;
    while picked < PROPENSITY_SUPPORT.min(d) {
        let j = rng.random_range(0..d);
        if coef[j] == 0.0 {
            let g: f64 = rng.sample(StandardNormal);
            coef[j] = if g == 0.0 { 1.0 } else { g };
            picked += 1;
        }
    }
    coef.iter_mut().for_each(|c| *c *= scale);
    coef
}

/// Treatment for user-supplied covariates.
///
/// Assignment uses the same sparse logistic propensity on column-centred
/// covariates. With a treated share configured, a random subset of the
/// treated units is dropped until the share is met. Returns the kept row
/// indices and their treatments.
pub fn assign_ihdp_treatment(x: &Tensor, config: &SimConfig) -> Result<(Vec<usize>, Vec<u8>)> {
    let mut rng = stream(config.seed, config.replication, seed::COVARIATES);
    let (n, d) = (x.rows(), x.cols());
    let coef = propensity_coefficients(&mut rng, d, config.propensity_scale);
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row_slice(i)) {
            *m += v / n as f64;
        }
    }
    let w: Vec<u8> = (0..n)
        .map(|i| {
            let logit: f64 = x.row_slice(i).iter().zip(&mean).zip(&coef).map(|((v, m), c)| c * (v - m)).sum();
            u8::from(rng.random_bool(sigmoid(logit)))
        })
        .collect();
    let mut treated: Vec<usize> = (0..n).filter(|&i| w[i] == 1).collect();
    let controls = n - treated.len();
    if let Some(f) = config.treated_fraction {
        let keep = ((f / (1.0 - f)) * controls as f64).round() as usize;
        if keep < treated.len() {
            treated.shuffle(&mut rng);
            treated.truncate(keep);
        }
    }
    let mut kept: Vec<usize> = (0..n).filter(|&i| w[i] == 0).chain(treated).collect();
    kept.sort_unstable();
    let wk: Vec<u8> = kept.iter().map(|&i| w[i]).collect();
    let nt = wk.iter().filter(|&&v| v == 1).count();
    if nt < 2 || wk.len() - nt < 2 {
        return Err(Error::Config(format!(
            "assignment left {nt} treated of {}; overlap needs at least 2 of each",
            wk.len()
        )));
    }
    Ok((kept, wk))
}

/// Outcome coefficients drawn from {0, 1, 2, 3, 4}.
pub fn sample_beta(seed: u64, replication: u64, dim: usize) -> Vec<f64> {
    let mut rng = stream(seed, replication, seed::BETA);
    (0..dim)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (v, p) in BETA_VALUES.iter().zip(BETA_PROBS) {
                acc += p;
                if u < acc {
                    return *v;
                }
            }
            BETA_VALUES[4]
        })
        .collect()
}

/// Both potential sequences: `N(x.beta + 4 w, sd)` plus the history term.
pub fn simulate_ihdp_outcomes<R: Rng>(
    x: &Tensor,
    beta: &[f64],
    config: &SimConfig,
    rng: &mut R,
) -> Result<[Tensor; 2]> {
    if beta.len() != x.cols() {
        return Err(Error::InvalidArgument(format!(
            "beta has {} entries for {} covariates",
            beta.len(),
            x.cols()
        )));
    }
    let (n, width) = (x.rows(), config.t0 + 1);
    let mut out = [Vec::with_capacity(n * width), Vec::with_capacity(n * width)];
    for i in 0..n {
        let mu: f64 = x.row_slice(i).iter().zip(beta).map(|(a, b)| a * b).sum();
        for (arm, buf) in out.iter_mut().enumerate() {
            let base = mu + 4.0 * arm as f64;
            let seq = roll_sequence(config.t0, config.horizon, config.c1, config.horizon_history, || {
                base + config.noise_sd * rng.sample::<f64, _>(StandardNormal)
            });
            buf.extend(seq);
        }
    }
    let [a, b] = out;
    Ok([Tensor::matrix(n, width, a)?, Tensor::matrix(n, width, b)?])
}
