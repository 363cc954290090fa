//! Semi-synthetic panels with sequential potential outcomes.
//!
//! Two generators are provided. The IHDP-style one draws mixed
//! continuous/binary covariates, assigns treatment through a sparse logistic
//! propensity and then thins the treated group to the classic 139:608
//! ratio. The News-style one samples a topic-model corpus and biases the
//! device choice toward the item's preferred centroid.
//!
//! Outcomes at step `t` add `c / (t - 1)` times the sum of the earlier
//! outcomes of the same arm to a per-step draw. At the long-term step the
//! default averages over the `t0` realized short-term outcomes; the
//! alternative keeps simulating the latent path up to `T`.

mod ihdp;
mod io;
mod news;
mod seed;
mod split;


use crate::error::{Error, Result};
use crate::ndcore::Tensor;
use crate::seqmodel::Arm;

pub use ihdp::{assign_ihdp_treatment, gen_ihdp_covariates, sample_beta, simulate_ihdp_outcomes, IhdpCovariates};
pub use io::{load_covariates, read_dataset, write_dataset};
pub use news::{gen_news, news_propensity, simulate_news_outcomes, NewsCorpus};
pub use seed::{mix_seed, stream};
pub use split::split_source_target;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Ihdp,
    News,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Ihdp => "ihdp",
            DatasetKind::News => "news",
        }
    }

    pub fn tag(self) -> u64 {
        match self {
            DatasetKind::Ihdp => 1,
            DatasetKind::News => 2,
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ihdp" => Ok(DatasetKind::Ihdp),
            "news" => Ok(DatasetKind::News),
            _ => Err(Error::Config(format!("unknown dataset {s:?} (expected ihdp or news)"))),
        }
    }
}

/// History term used at the long-term step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonHistory {
    /// `c / t0` times the sum of the realized short-term outcomes.
    Realized,
    /// Keep simulating steps `t0 + 1 .. T` and report step `T`.
    Latent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub kind: DatasetKind,
    pub n_units: usize,
    pub t0: usize,
    /// Long-term step, strictly after `t0`.
    pub horizon: usize,
    /// News effect scale.
    pub c_news: f64,
    /// IHDP history scale.
    pub c1: f64,
    /// News history scale.
    pub c2: f64,
    pub noise_sd: f64,
    pub k_topics: usize,
    pub vocab: usize,
    /// IHDP covariate count.
    pub context_dim: usize,
    /// IHDP continuous covariates; the rest are binary.
    pub n_continuous: usize,
    /// Success probability shared by every binary covariate; `None` draws
    /// one per column from `[0.1, 0.9]`.
    pub binary_prob: Option<f64>,
    pub seed: u64,
    pub replication: u64,
    pub source_fraction: f64,
    /// Multiplies the IHDP propensity logits; 0 randomizes treatment.
    pub propensity_scale: f64,
    /// IHDP treated share after thinning; `None` keeps every draw.
    pub treated_fraction: Option<f64>,
    /// News document length range, inclusive.
    pub doc_len_min: usize,
    pub doc_len_max: usize,
    /// News preference for the item's preferred device.
    pub kappa: f64,
    pub horizon_history: HorizonHistory,
}

impl SimConfig {
    pub fn ihdp(t0: usize, horizon: usize) -> Self {
        SimConfig {
            kind: DatasetKind::Ihdp,
            n_units: 747,
            t0,
            horizon,
            c_news: 50.0,
            c1: 0.02,
            c2: 0.03,
            noise_sd: 1.0,
            k_topics: 50,
            vocab: 3477,
            context_dim: 25,
            n_continuous: 6,
            binary_prob: None,
            seed: 0,
            replication: 0,
            source_fraction: 0.8,
            propensity_scale: 1.0,
            treated_fraction: Some(139.0 / 747.0),
            doc_len_min: 50,
            doc_len_max: 500,
            kappa: 10.0,
            horizon_history: HorizonHistory::Realized,
        }
    }

    pub fn news(t0: usize, horizon: usize) -> Self {
        SimConfig { kind: DatasetKind::News, n_units: 5000, ..Self::ihdp(t0, horizon) }
    }

    pub fn for_kind(kind: DatasetKind, t0: usize, horizon: usize) -> Self {
        match kind {
            DatasetKind::Ihdp => Self::ihdp(t0, horizon),
            DatasetKind::News => Self::news(t0, horizon),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.t0 < 1 || self.horizon <= self.t0 {
            return bad(format!("need T > t0 >= 1, got t0 = {}, T = {}", self.t0, self.horizon));
        }
        if !(self.source_fraction > 0.0 && self.source_fraction < 1.0) {
            return bad(format!("source_fraction must be in (0, 1), got {}", self.source_fraction));
        }
        if self.n_units < 10 {
            return bad(format!("need at least 10 units, got {}", self.n_units));
        }
        let scales = [self.c_news, self.c1, self.c2, self.noise_sd, self.propensity_scale, self.kappa];
        if scales.iter().any(|v| !v.is_finite()) || self.noise_sd < 0.0 || self.kappa <= 0.0 {
            return bad("scales must be finite, noise_sd >= 0 and kappa > 0".into());
        }
        if let Some(f) = self.treated_fraction {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("treated_fraction must be in (0, 1), got {f}"));
            }
        }
        if let Some(p) = self.binary_prob {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("binary_prob must be in [0, 1], got {p}"));
            }
        }
        match self.kind {
            DatasetKind::Ihdp if self.n_continuous > self.context_dim || self.context_dim == 0 => {
                bad(format!("n_continuous {} exceeds context_dim {}", self.n_continuous, self.context_dim))
            }
            DatasetKind::News
                if self.k_topics < 2 || self.vocab < 2 || self.doc_len_min == 0 || self.doc_len_max < self.doc_len_min =>
            {
                bad("news needs k_topics >= 2, vocab >= 2 and 1 <= doc_len_min <= doc_len_max".into())
            }
            _ => Ok(()),
        }
    }

    /// Flat `key = value` echo, readable by [`SimConfig::set`].
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dataset", self.kind.name().to_string()),
            ("n_units", self.n_units.to_string()),
            ("t0", self.t0.to_string()),
            ("horizon", self.horizon.to_string()),
            ("c_news", self.c_news.to_string()),
            ("c1", self.c1.to_string()),
            ("c2", self.c2.to_string()),
            ("noise_sd", self.noise_sd.to_string()),
            ("k_topics", self.k_topics.to_string()),
            ("vocab", self.vocab.to_string()),
            ("context_dim", self.context_dim.to_string()),
            ("n_continuous", self.n_continuous.to_string()),
            ("binary_prob", self.binary_prob.map_or("none".into(), |f| f.to_string())),
            ("seed", self.seed.to_string()),
            ("replication", self.replication.to_string()),
            ("source_fraction", self.source_fraction.to_string()),
            ("propensity_scale", self.propensity_scale.to_string()),
            ("treated_fraction", self.treated_fraction.map_or("none".into(), |f| f.to_string())),
            ("doc_len_min", self.doc_len_min.to_string()),
            ("doc_len_max", self.doc_len_max.to_string()),
            ("kappa", self.kappa.to_string()),
            (
                "horizon_history",
                match self.horizon_history {
                    HorizonHistory::Realized => "realized".into(),
                    HorizonHistory::Latent => "latent".into(),
                },
            ),
        ]
    }

    /// Applies one setting; `Ok(false)` when the key is not a simulator key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
        }
        match key {
            "dataset" => self.kind = value.parse()?,
            "n_units" => self.n_units = p(key, value)?,
            "t0" => self.t0 = p(key, value)?,
            "horizon" | "T" => self.horizon = p(key, value)?,
            "c_news" | "C" => self.c_news = p(key, value)?,
            "c1" | "C1" => self.c1 = p(key, value)?,
            "c2" | "C2" => self.c2 = p(key, value)?,
            "noise_sd" => self.noise_sd = p(key, value)?,
            "k_topics" => self.k_topics = p(key, value)?,
            "vocab" => self.vocab = p(key, value)?,
            "context_dim" => self.context_dim = p(key, value)?,
            "n_continuous" => self.n_continuous = p(key, value)?,
            "binary_prob" => self.binary_prob = if value == "none" { None } else { Some(p(key, value)?) },
            "seed" => self.seed = p(key, value)?,
            "replication" => self.replication = p(key, value)?,
            "source_fraction" => self.source_fraction = p(key, value)?,
            "propensity_scale" => self.propensity_scale = p(key, value)?,
            "treated_fraction" => {
                self.treated_fraction = if value == "none" { None } else { Some(p(key, value)?) }
            }
            "doc_len_min" => self.doc_len_min = p(key, value)?,
            "doc_len_max" => self.doc_len_max = p(key, value)?,
            "kappa" => self.kappa = p(key, value)?,
            "horizon_history" => {
                self.horizon_history = match value {
                    "realized" => HorizonHistory::Realized,
                    "latent" => HorizonHistory::Latent,
                    _ => return Err(Error::Config(format!("bad value {value:?} for {key}"))),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Units with contexts, treatments, roles and both potential sequences.
///
/// Outcome matrices are `[n, t0 + 1]`: columns `0..t0` hold steps `1..=t0`
/// and the last column holds step `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub config: SimConfig,
    pub x: Tensor,
    pub w: Vec<u8>,
    pub role: Vec<Role>,
    /// Indexed by arm.
    pub y_pot: [Tensor; 2],
    /// Factual sequences, `y_pot[w_i]` row by row.
    pub y_obs: Tensor,
}

impl PanelDataset {
    /// Assembles a dataset; `y_obs` is derived from `w`.
    pub fn new(config: SimConfig, x: Tensor, w: Vec<u8>, role: Vec<Role>, y_pot: [Tensor; 2]) -> Result<Self> {
        let n = x.rows();
        let width = config.t0 + 1;
        if w.len() != n || role.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{n} contexts but {} treatments and {} roles",
                w.len(),
                role.len()
            )));
        }
        for y in &y_pot {
            if y.shape() != [n, width] {
                return Err(Error::InvalidArgument(format!(
                    "outcome matrix {:?}, expected [{n}, {width}]",
                    y.shape()
                )));
            }
        }
        let mut obs = Vec::with_capacity(n * width);
        for (i, &wi) in w.iter().enumerate() {
            let arm = Arm::from_indicator(wi)?;
            obs.extend_from_slice(y_pot[arm.index()].row_slice(i));
        }
        let y_obs = Tensor::matrix(n, width, obs)?;
        Ok(PanelDataset { config, x, w, role, y_pot, y_obs })
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn t0(&self) -> usize {
        self.config.t0
    }

    pub fn context_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn arm(&self, i: usize) -> Arm {
        if self.w[i] == 1 {
            Arm::Treated
        } else {
            Arm::Control
        }
    }

    pub fn indices(&self, role: Role) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.role[i] == role).collect()
    }

    pub fn count(&self, role: Role, arm: Arm) -> usize {
        (0..self.n()).filter(|&i| self.role[i] == role && self.arm(i) == arm).count()
    }

    /// Mean of `y1 - y0` at outcome column `col` over units with `role`.
    pub fn true_ate_at(&self, role: Role, col: usize) -> f64 {
        let idx = self.indices(role);
        let s: f64 = idx.iter().map(|&i| self.y_pot[1].get(i, col) - self.y_pot[0].get(i, col)).sum();
        s / idx.len() as f64
    }

    /// Long-term effect on the target units.
    pub fn true_ate_target(&self) -> f64 {
        self.true_ate_at(Role::Target, self.t0())
    }

    /// Contexts of the given units, `[len, d]`.
    pub fn contexts(&self, idx: &[usize]) -> Tensor {
        self.x.select_rows(idx)
    }

    /// Factual short-term outcomes of the given units, `[len, t0]`.
    pub fn short_outcomes(&self, idx: &[usize]) -> Tensor {
        let t0 = self.t0();
        let mut data = Vec::with_capacity(idx.len() * t0);
        for &i in idx {
            data.extend_from_slice(&self.y_obs.row_slice(i)[..t0]);
        }
        Tensor::matrix(idx.len(), t0, data).expect("sizes agree")
    }

    /// Factual long-term outcomes of the given units.
    pub fn long_outcomes(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.y_obs.get(i, self.t0())).collect()
    }

    /// Copy with treatment labels and potential outcomes swapped.
    pub fn swap_arms(&self) -> Self {
        let w = self.w.iter().map(|&v| 1 - v).collect();
        let y_pot = [self.y_pot[1].clone(), self.y_pot[0].clone()];
        PanelDataset::new(self.config.clone(), self.x.clone(), w, self.role.clone(), y_pot)
            .expect("swap keeps shapes")
    }
}

/// Generates a full panel for `config` and splits it.
pub fn generate(config: &SimConfig) -> Result<PanelDataset> {
    config.validate()?;
    let (x, w, y_pot) = match config.kind {
        DatasetKind::Ihdp => {
            let cov = gen_ihdp_covariates(config)?;
            let beta = sample_beta(config.seed, config.replication, config.context_dim);
            let mut rng = stream(config.seed, config.replication, seed::OUTCOMES);
            let y = simulate_ihdp_outcomes(&cov.x, &beta, config, &mut rng)?;
            (cov.x, cov.w, y)
        }
        DatasetKind::News => {
            let corpus = gen_news(config)?;
            let mut rng = stream(config.seed, config.replication, seed::OUTCOMES);
            let y = simulate_news_outcomes(&corpus.z, &corpus.z0c, &corpus.z1c, config, &mut rng)?;
            (corpus.x, corpus.w, y)
        }
    };
    let n = w.len();
    let ds = PanelDataset::new(config.clone(), x, w, vec![Role::Source; n], y_pot)?;
    split_source_target(ds)
}

/// IHDP-style panel on user-supplied covariates (one row per unit).
///
/// `n_units` and `context_dim` are taken from the matrix; every column is
/// used as given.
pub fn generate_with_covariates(config: &SimConfig, x: &Tensor) -> Result<PanelDataset> {
    let mut config = SimConfig { kind: DatasetKind::Ihdp, n_units: x.rows(), context_dim: x.cols(), ..config.clone() };
    config.n_continuous = config.n_continuous.min(config.context_dim);
    config.validate()?;
    let (kept, w) = assign_ihdp_treatment(x, &config)?;
    let x = x.select_rows(&kept);
    config.n_units = kept.len();
    let beta = sample_beta(config.seed, config.replication, config.context_dim);
    let mut rng = stream(config.seed, config.replication, seed::OUTCOMES);
    let y = simulate_ihdp_outcomes(&x, &beta, &config, &mut rng)?;
    let n = w.len();
    let ds = PanelDataset::new(config, x, w, vec![Role::Source; n], y)?;
    split_source_target(ds)
}

/// Shared outcome recursion for one unit and one arm.
///
/// `draw` returns the step-`t` base plus noise; the history term is added
/// here. Output has `t0 + 1` entries.
pub(crate) fn roll_sequence(
    t0: usize,
    horizon: usize,
    history_scale: f64,
    mode: HorizonHistory,
    mut draw: impl FnMut() -> f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(t0 + 1);
    let mut sum = 0.0;
    for t in 1..=t0 {
        let hist = if t == 1 { 0.0 } else { history_scale / (t - 1) as f64 * sum };
        let y = draw() + hist;
        sum += y;
        out.push(y);
    }
    let last = match mode {
        HorizonHistory::Realized => draw() + history_scale / t0 as f64 * sum,
        HorizonHistory::Latent => {
            let mut y = 0.0;
            for t in (t0 + 1)..=horizon {
                y = draw() + history_scale / (t - 1) as f64 * sum;
                sum += y;
            }
            y
        }
    };
    out.push(last);
    out
}
