use crate::baselines::{Method, TarnetConfig};
use crate::datagen::{DatasetKind, SimConfig};
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

use super::{ExperimentPlan, SweepKind};

/// Splits `key = value` lines. Blank lines and `#` comments are skipped;
/// anything else is a config error naming the line.
pub fn parse_flat_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`, got {raw:?}", no + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::Config(format!("line {}: empty key or value in {raw:?}", no + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Everything a command-line run can set.
///
/// Harness keys: `reps`, `seed`, `jobs`, `methods` (comma list), `grid`
/// (comma list along the sweep axis), `tarnet_hidden`, `tarnet_depth`,
/// `tarnet_epochs`, `tarnet_lr`, `tarnet_gamma`, `tarnet_lambda`,
/// `tarnet_batch_size`. Other keys go to [`SimConfig::set`] and then
/// [`TrainConfig::set`]; a key nobody knows is an error.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub dataset: DatasetKind,
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub tarnet: TarnetConfig,
    pub reps: u64,
    pub seed: u64,
    pub jobs: usize,
    pub methods: Option<Vec<Method>>,
    pub grid: Option<Vec<f64>>,
}

impl RunSettings {
    pub fn new(dataset: DatasetKind) -> Self {
        RunSettings {
            dataset,
            sim: SimConfig::for_kind(dataset, 50, 100),
            train: TrainConfig::for_kind(dataset),
            tarnet: TarnetConfig::default(),
            reps: 10,
            seed: 0,
            jobs: 1,
            methods: None,
            grid: None,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
        }
        match key {
            "reps" => self.reps = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "jobs" => self.jobs = p(key, value)?,
            "methods" => {
                self.methods = Some(value.split(',').map(|m| m.trim().parse()).collect::<Result<_>>()?);
            }
            "grid" => {
                self.grid = Some(value.split(',').map(|g| p(key, g.trim())).collect::<Result<_>>()?);
            }
            "tarnet_hidden" => self.tarnet.hidden = p(key, value)?,
            "tarnet_depth" => self.tarnet.depth = p(key, value)?,
            "tarnet_epochs" => self.tarnet.epochs = p(key, value)?,
            "tarnet_lr" => self.tarnet.learning_rate = p(key, value)?,
            "tarnet_gamma" => self.tarnet.gamma = p(key, value)?,
            "tarnet_lambda" => self.tarnet.lambda = p(key, value)?,
            "tarnet_batch_size" => self.tarnet.batch_size = p(key, value)?,
            "dataset" => {
                let kind: DatasetKind = value.parse()?;
                if kind != self.dataset {
                    *self = RunSettings { seed: self.seed, reps: self.reps, jobs: self.jobs, ..RunSettings::new(kind) };
                }
            }
            _ => {
                if !self.sim.set(key, value)? && !self.train.set(key, value)? {
                    return Err(Error::Config(format!("unknown config key {key:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    /// Flat echo of every setting, readable by [`parse_flat_config`].
    pub fn to_config_text(&self) -> String {
        let mut s = format!("dataset = {}\nreps = {}\nseed = {}\njobs = {}\n", self.dataset.name(), self.reps, self.seed, self.jobs);
        if let Some(m) = &self.methods {
            s += &format!("methods = {}\n", m.iter().map(|m| m.name()).collect::<Vec<_>>().join(","));
        }
        if let Some(g) = &self.grid {
            s += &format!("grid = {}\n", g.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","));
        }
        let t = &self.tarnet;
        s += &format!(
            "tarnet_hidden = {}\ntarnet_depth = {}\ntarnet_epochs = {}\ntarnet_lr = {:?}\ntarnet_gamma = {:?}\ntarnet_lambda = {:?}\ntarnet_batch_size = {}\n",
            t.hidden, t.depth, t.epochs, t.learning_rate, t.gamma, t.lambda, t.batch_size
        );
        for (k, v) in self.sim.to_pairs().into_iter().chain(self.train.to_pairs()) {
            if !matches!(k, "dataset" | "seed" | "replication") {
                s += &format!("{k} = {v}\n");
            }
        }
        s
    }

    /// Plan for `kind` with these settings applied.
    pub fn plan(&self, kind: SweepKind) -> Result<ExperimentPlan> {
        let mut plan = ExperimentPlan::new(kind, self.dataset);
        if let Some(g) = &self.grid {
            plan = plan.with_grid(g)?;
        }
        if let Some(m) = &self.methods {
            plan.methods = m.clone();
        }
        plan.replications = self.reps;
        plan.base_seed = self.seed;
        plan.jobs = self.jobs;
        plan.sim = self.sim.clone();
        plan.train = self.train.clone();
        plan.tarnet = self.tarnet.clone();
        plan.validate()?;
        Ok(plan)
    }
}
