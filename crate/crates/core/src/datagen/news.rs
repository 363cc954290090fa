use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::seed::{self, mix_seed, stream};
use super::{roll_sequence, SimConfig};
use crate::error::{Error, Result};
use crate::ndcore::Tensor;

// Dirichlet concentrations: topic-word rows and sparse document mixtures.
const WORD_CONCENTRATION: f64 = 0.1;
const DOC_CONCENTRATION: f64 = 0.1;

// Centroid regeneration budget.
const MAX_CENTROID_ATTEMPTS: u64 = 100;

/// Sampled corpus with its generating topic mixtures.
#[derive(Debug, Clone)]
pub struct NewsCorpus {
    /// Word counts, `[n, vocab]`.
    pub x: Tensor,
    /// Topic mixture per document, `[n, k]`; rows sum to 1.
    pub z: Tensor,
    /// Corpus mean mixture (desktop centroid).
    pub z0c: Vec<f64>,
    /// Mixture of one random document (mobile centroid).
    pub z1c: Vec<f64>,
    pub w: Vec<u8>,
    pub propensity: Vec<f64>,
}

fn dirichlet<R: Rng>(rng: &mut R, alpha: f64, k: usize) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).expect("positive shape");
    let mut v: Vec<f64> = (0..k).map(|_| g.sample(rng)).collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        // every gamma draw underflowed; put the mass on one coordinate
        v.iter_mut().for_each(|x| *x = 0.0);
        v[rng.random_range(0..k)] = 1.0;
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Probability of the mobile device:
/// `kappa s1 / (kappa s1 + s0)` with `s_k = z . z_k`.
pub fn news_propensity(z: &[f64], z0c: &[f64], z1c: &[f64], kappa: f64) -> f64 {
    let s1 = kappa * dot(z, z1c);
    let s0 = dot(z, z0c);
    if s1 + s0 > 0.0 {
        s1 / (s1 + s0)
    } else {
        0.5
    }
}

/// Topic-model corpus, centroids and device assignment.
pub fn gen_news(config: &SimConfig) -> Result<NewsCorpus> {
    let mut rng = stream(config.seed, config.replication, seed::TOPICS);
    let (k, v, n) = (config.k_topics, config.vocab, config.n_units);

    let topic_words: Vec<Vec<f64>> = (0..k).map(|_| dirichlet(&mut rng, WORD_CONCENTRATION, v)).collect();
    let word_pickers = topic_words
        .iter()
        .map(|row| WeightedIndex::new(row.iter().copied()))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Numerical(format!("topic-word row: {e}")))?;

    let mut z = Vec::with_capacity(n * k);
    let mut counts = vec![0.0; n * v];
    for i in 0..n {
        let mix = dirichlet(&mut rng, DOC_CONCENTRATION, k);
        let topic_picker =
            WeightedIndex::new(mix.iter().copied()).map_err(|e| Error::Numerical(format!("topic mixture: {e}")))?;
        let len = rng.random_range(config.doc_len_min..=config.doc_len_max);
        for _ in 0..len {
            let topic = topic_picker.sample(&mut rng);
            let word = word_pickers[topic].sample(&mut rng);
            counts[i * v + word] += 1.0;
        }
        z.extend(mix);
    }
    let z = Tensor::matrix(n, k, z)?;
    let mut z0c = vec![0.0; k];
    for i in 0..n {
        for (c, zi) in z0c.iter_mut().zip(z.row_slice(i)) {
            *c += zi / n as f64;
        }
    }

    // The mobile centroid must be similar to at least one document.
    let mut z1c = None;
    for attempt in 0..MAX_CENTROID_ATTEMPTS {
        let mut crng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, config.replication, seed::TOPICS, attempt]));
        let pick = crng.random_range(0..n);
        let cand = z.row_slice(pick).to_vec();
        if (0..n).any(|i| dot(z.row_slice(i), &cand) > 1e-12) {
            z1c = Some(cand);
            break;
        }
    }
    let z1c = z1c.ok_or_else(|| Error::Numerical("no usable mobile centroid".into()))?;

    let mut w = Vec::with_capacity(n);
    let mut propensity = Vec::with_capacity(n);
    for i in 0..n {
        let p = news_propensity(z.row_slice(i), &z0c, &z1c, config.kappa);
        propensity.push(p);
        w.push(u8::from(rng.random_bool(p)));
    }
    let nt = w.iter().filter(|&&b| b == 1).count();
    if nt < 2 || n - nt < 2 {
        return Err(Error::Config(format!("news assignment gave {nt} treated of {n}; overlap needs both arms")));
    }
    Ok(NewsCorpus { x: Tensor::matrix(n, v, counts)?, z, z0c, z1c, w, propensity })
}

/// Both potential sequences:
/// `C (z . z0c + w z . z1c)` plus the history term plus noise.
pub fn simulate_news_outcomes<R: Rng>(
    z: &Tensor,
    z0c: &[f64],
    z1c: &[f64],
    config: &SimConfig,
    rng: &mut R,
) -> Result<[Tensor; 2]> {
    if z0c.len() != z.cols() || z1c.len() != z.cols() {
        return Err(Error::InvalidArgument(format!(
            "centroids of length {} and {} for {} topics",
            z0c.len(),
            z1c.len(),
            z.cols()
        )));
    }
    let (n, width) = (z.rows(), config.t0 + 1);
    let mut out = [Vec::with_capacity(n * width), Vec::with_capacity(n * width)];
    for i in 0..n {
        let s0 = dot(z.row_slice(i), z0c);
        let s1 = dot(z.row_slice(i), z1c);
        for (arm, buf) in out.iter_mut().enumerate() {
            let base = config.c_news * (s0 + arm as f64 * s1);
            let seq = roll_sequence(config.t0, config.horizon, config.c2, config.horizon_history, || {
                base + config.noise_sd * rng.sample::<f64, _>(StandardNormal)
            });
            buf.extend(seq);
        }
    }
    let [a, b] = out;
    Ok([Tensor::matrix(n, width, a)?, Tensor::matrix(n, width, b)?])
}
