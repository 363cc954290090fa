//! Experiment grids, per-cell execution and result files.
//!
//! A plan expands into cells `(grid point, replication, method)`. All
//! methods of one `(grid point, replication)` pair share one generated
//! panel. A failing cell becomes an error row and the sweep goes on. Every
//! cell reads data through its own [`ProtocolView`], and the recorded reads
//! are audited against the settings matrix before the row is accepted.
//!
//! Data seeds depend only on `(base seed, dataset, t0, T, replication)`, so
//! growing a grid leaves existing rows untouched and the points of a `gamma`
//! sweep share their panels.

mod config;
mod output;

#[cfg(test)]
mod tests;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::baselines::{
    audit, interpolate, naive_i, naive_ii, naive_iii, surrogate_index, tarnet_lite, AteEstimate, Method,
    ProtocolView, TarnetConfig,
};
use crate::datagen::{generate, mix_seed, DatasetKind, PanelDataset, SimConfig};
use crate::error::{Error, Result};
use crate::seqmodel::LteeModel;
use crate::trainer::{train, TrainConfig};

pub use config::{parse_flat_config, RunSettings};
pub use output::{emit_outputs, read_sweep_csv, summarize, write_sweep_csv, OutputFiles, SummaryRow};

const TRAIN_TAG: u64 = 0x7472_6169;
const TARNET_TAG: u64 = 0x7461_726e;

/// Default t0 grid at `T = 100`.
pub const T0_GRID: [usize; 5] = [10, 30, 50, 70, 90];
/// Default T grid at `t0 = 50`.
pub const HORIZON_GRID: [usize; 10] = [55, 60, 65, 70, 75, 80, 85, 90, 95, 100];
pub const GAMMA_GRID: [f64; 6] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SweepKind {
    T0,
    Horizon,
    Gamma,
    AblateHeads,
    AblateRnn,
    Single,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::T0 => "t0",
            SweepKind::Horizon => "T",
            SweepKind::Gamma => "gamma",
            SweepKind::AblateHeads => "ablate-heads",
            SweepKind::AblateRnn => "ablate-rnn",
            SweepKind::Single => "single",
        }
    }
}

impl std::str::FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepKind::T0, SweepKind::Horizon, SweepKind::Gamma, SweepKind::AblateHeads, SweepKind::AblateRnn, SweepKind::Single]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep kind {s:?} (t0, T, gamma, ablate-heads, ablate-rnn)")))
    }
}

/// Which quantity a grid point varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    T0,
    Horizon,
    Gamma,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::T0 => "t0",
            Axis::Horizon => "T",
            Axis::Gamma => "gamma",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t0" => Ok(Axis::T0),
            "T" => Ok(Axis::Horizon),
            "gamma" => Ok(Axis::Gamma),
            _ => Err(Error::Parse(format!("unknown axis {s:?}"))),
        }
    }
}

/// One point of a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub axis: Axis,
    pub t0: usize,
    pub horizon: usize,
    /// Imbalance weight for LTEE; `None` keeps the training default.
    pub gamma: Option<f64>,
}

impl GridPoint {
    pub fn value(&self) -> f64 {
        match self.axis {
            Axis::T0 => self.t0 as f64,
            Axis::Horizon => self.horizon as f64,
            Axis::Gamma => self.gamma.unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub kind: SweepKind,
    pub dataset: DatasetKind,
    pub points: Vec<GridPoint>,
    pub replications: u64,
    pub methods: Vec<Method>,
    pub base_seed: u64,
    /// Simulator settings; `t0`, `horizon`, `seed` and `replication` are
    /// overwritten per cell.
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub tarnet: TarnetConfig,
    /// Worker threads; each runs whole `(point, replication)` groups.
    pub jobs: usize,
    /// Print one line per finished cell to stderr.
    pub verbose: bool,
}

/// Every method compared in the t0 and T sweeps.
pub const COMPARISON_METHODS: [Method; 7] = [
    Method::Ltee,
    Method::SurrogateIndex,
    Method::NaiveI,
    Method::NaiveII,
    Method::NaiveIII,
    Method::TarnetLite,
    Method::Interpolate,
];

fn t0_points() -> Vec<GridPoint> {
    T0_GRID.iter().map(|&t0| GridPoint { axis: Axis::T0, t0, horizon: 100, gamma: None }).collect()
}

fn horizon_points() -> Vec<GridPoint> {
    HORIZON_GRID.iter().map(|&h| GridPoint { axis: Axis::Horizon, t0: 50, horizon: h, gamma: None }).collect()
}

impl ExperimentPlan {
    /// Default grid and methods for `kind`.
    pub fn new(kind: SweepKind, dataset: DatasetKind) -> Self {
        let (points, methods) = match kind {
            SweepKind::T0 => (t0_points(), COMPARISON_METHODS.to_vec()),
            SweepKind::Horizon => (horizon_points(), COMPARISON_METHODS.to_vec()),
            SweepKind::Gamma => (
                GAMMA_GRID
                    .iter()
                    .map(|&g| GridPoint { axis: Axis::Gamma, t0: 50, horizon: 100, gamma: Some(g) })
                    .collect(),
                vec![Method::Ltee],
            ),
            SweepKind::AblateHeads => {
                ([t0_points(), horizon_points()].concat(), vec![Method::Ltee, Method::SingleHeadLtee])
            }
            SweepKind::AblateRnn => ([t0_points(), horizon_points()].concat(), vec![Method::Rnn, Method::SurrogateIndex]),
            SweepKind::Single => (
                vec![GridPoint { axis: Axis::Horizon, t0: 50, horizon: 100, gamma: None }],
                COMPARISON_METHODS.to_vec(),
            ),
        };
        ExperimentPlan {
            kind,
            dataset,
            points,
            replications: 10,
            methods,
            base_seed: 0,
            sim: SimConfig::for_kind(dataset, 50, 100),
            train: TrainConfig::for_kind(dataset),
            tarnet: TarnetConfig::default(),
            jobs: 1,
            verbose: false,
        }
    }

    /// Replaces the grid with `values` along the plan's axis.
    ///
    /// For the ablation plans the values are read as T at `t0 = 50`.
    pub fn with_grid(mut self, values: &[f64]) -> Result<Self> {
        let int = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("grid value {v} is not a positive integer step")))
            }
        };
        self.points = values
            .iter()
            .map(|&v| {
                Ok(match self.kind {
                    SweepKind::T0 => GridPoint { axis: Axis::T0, t0: int(v)?, horizon: 100, gamma: None },
                    SweepKind::Gamma => GridPoint { axis: Axis::Gamma, t0: 50, horizon: 100, gamma: Some(v) },
                    _ => GridPoint { axis: Axis::Horizon, t0: 50, horizon: int(v)?, gamma: None },
                })
            })
            .collect::<Result<_>>()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        for p in &self.points {
            if p.t0 < 1 || p.horizon <= p.t0 {
                return Err(Error::Config(format!("grid point needs T > t0 >= 1, got t0 = {}, T = {}", p.t0, p.horizon)));
            }
            if let Some(g) = p.gamma {
                if !(g >= 0.0 && g.is_finite()) {
                    return Err(Error::Config(format!("gamma grid value {g} must be finite and >= 0")));
                }
            }
        }
        let mut sim = self.sim.clone();
        sim.kind = self.dataset;
        sim.validate()?;
        self.train.validate()
    }

    /// Simulator settings of one cell group.
    pub fn sim_config(&self, point: &GridPoint, replication: u64) -> SimConfig {
        let seed = mix_seed(&[self.base_seed, self.dataset.tag(), point.t0 as u64, point.horizon as u64]);
        SimConfig {
            kind: self.dataset,
            t0: point.t0,
            horizon: point.horizon,
            seed,
            replication,
            ..self.sim.clone()
        }
    }

    /// Training settings for a sequence-model cell.
    pub fn train_config(&self, point: &GridPoint, replication: u64, method: Method) -> TrainConfig {
        let sim = self.sim_config(point, replication);
        let mut cfg = self.train.clone();
        cfg.seed = mix_seed(&[sim.seed, replication, TRAIN_TAG]);
        if let Some(g) = point.gamma {
            cfg.gamma = g;
        }
        match method {
            Method::Rnn => cfg.gamma = 0.0,
            Method::SingleHeadLtee => cfg.single_head = true,
            _ => {}
        }
        cfg
    }

    pub fn cell_count(&self) -> usize {
        self.points.len() * self.replications as usize * self.methods.len()
    }
}

/// One finished cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub axis: Axis,
    pub grid_value: f64,
    pub t0: usize,
    pub horizon: usize,
    /// Imbalance weight used by a sequence model; NaN for other methods.
    pub gamma: f64,
    pub replication: u64,
    pub eps_ate: f64,
    pub true_ate: f64,
    pub est_ate: f64,
    /// Seconds.
    pub wall_time: f64,
}

/// A cell that produced no row.
#[derive(Debug, Clone, PartialEq)]
pub struct CellError {
    pub method: Method,
    pub axis: Axis,
    pub grid_value: f64,
    pub replication: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub errors: Vec<CellError>,
}

impl SweepResult {
    /// Deterministic order: axis, grid value, method, replication.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.axis
                .cmp(&b.axis)
                .then(a.grid_value.total_cmp(&b.grid_value))
                .then((a.method, a.replication).cmp(&(b.method, b.replication)))
        });
        self.errors.sort_by(|a, b| {
            a.axis
                .cmp(&b.axis)
                .then(a.grid_value.total_cmp(&b.grid_value))
                .then((a.method, a.replication).cmp(&(b.method, b.replication)))
        });
    }

    /// Mean `eps_ate` of `method` at `grid_value`, with the row count.
    pub fn mean_eps(&self, method: Method, grid_value: f64) -> Option<(f64, usize)> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.grid_value == grid_value)
            .map(|r| r.eps_ate)
            .collect();
        (!v.is_empty()).then(|| (v.iter().sum::<f64>() / v.len() as f64, v.len()))
    }
}

/// Absolute error of an effect estimate.
pub fn eps_ate(true_ate: f64, est_ate: f64) -> f64 {
    (true_ate - est_ate).abs()
}

/// Mean predicted long-term effect over the target units of `view`.
///
/// Reads target contexts only.
pub fn estimate_ate_target(model: &LteeModel, view: &ProtocolView) -> Result<f64> {
    let x = view.target_contexts();
    if x.rows() == 0 {
        return Err(Error::Estimation("no target units".into()));
    }
    let ite = model.predict_ite_batch(&x)?;
    Ok(ite.iter().sum::<f64>() / ite.len() as f64)
}

/// Runs one method on one panel and audits its reads.
pub fn run_method(
    method: Method,
    ds: &PanelDataset,
    train_cfg: &TrainConfig,
    tarnet_cfg: &TarnetConfig,
) -> Result<AteEstimate> {
    let view = ProtocolView::new(ds);
    let est = match method {
        Method::Ltee | Method::SingleHeadLtee | Method::Rnn => {
            let out = train(&view, train_cfg)?;
            if let Some(msg) = out.diverged {
                return Err(Error::Numerical(format!("training diverged: {msg}")));
            }
            let value = estimate_ate_target(&out.model, &view)?;
            AteEstimate { method, value, inputs_used: view.reads() }
        }
        Method::SurrogateIndex => surrogate_index(&view)?,
        Method::NaiveI => naive_i(&view)?,
        Method::NaiveII => naive_ii(&view)?,
        Method::NaiveIII => naive_iii(&view)?,
        Method::TarnetLite => tarnet_lite(&view, tarnet_cfg)?,
        Method::Interpolate => interpolate(&view)?,
    };
    if !est.value.is_finite() {
        return Err(Error::Numerical(format!("{method} produced {}", est.value)));
    }
    audit(method, view.reads())?;
    Ok(est)
}

fn run_group(plan: &ExperimentPlan, point: &GridPoint, rep: u64) -> SweepResult {
    let mut out = SweepResult::default();
    let fail = |out: &mut SweepResult, method: Method, message: String| {
        if plan.verbose {
            eprintln!("{} {}={} rep {rep}: error: {message}", method, point.axis.name(), point.value());
        }
        out.errors.push(CellError { method, axis: point.axis, grid_value: point.value(), replication: rep, message });
    };
    let ds = match generate(&plan.sim_config(point, rep)) {
        Ok(ds) => ds,
        Err(e) => {
            for &m in &plan.methods {
                fail(&mut out, m, format!("data generation: {e}"));
            }
            return out;
        }
    };
    let true_ate = ds.true_ate_target();
    for &method in &plan.methods {
        let start = Instant::now();
        let tcfg = plan.train_config(point, rep, method);
        let tarnet = TarnetConfig { seed: mix_seed(&[tcfg.seed, TARNET_TAG]), ..plan.tarnet.clone() };
        match run_method(method, &ds, &tcfg, &tarnet) {
            Ok(est) => {
                let row = SweepRow {
                    method,
                    axis: point.axis,
                    grid_value: point.value(),
                    t0: point.t0,
                    horizon: point.horizon,
                    gamma: if method.is_sequence_model() { tcfg.gamma } else { f64::NAN },
                    replication: rep,
                    eps_ate: eps_ate(true_ate, est.value),
                    true_ate,
                    est_ate: est.value,
                    wall_time: start.elapsed().as_secs_f64(),
                };
                if plan.verbose {
                    eprintln!(
                        "{} {}={} rep {rep}: est {:.4} true {:.4} eps {:.4} ({:.1}s)",
                        method,
                        point.axis.name(),
                        point.value(),
                        row.est_ate,
                        row.true_ate,
                        row.eps_ate,
                        row.wall_time
                    );
                }
                out.rows.push(row);
            }
            Err(e) => fail(&mut out, method, e.to_string()),
        }
    }
    out
}

/// Runs every cell of `plan`. Cell failures are collected, not raised.
pub fn run_plan(plan: &ExperimentPlan) -> Result<SweepResult> {
    plan.validate()?;
    let groups: Vec<(GridPoint, u64)> =
        plan.points.iter().flat_map(|p| (0..plan.replications).map(move |r| (*p, r))).collect();
    let next = AtomicUsize::new(0);
    let merged = Mutex::new(SweepResult::default());
    let worker = || loop {
        let k = next.fetch_add(1, Ordering::Relaxed);
        let Some((point, rep)) = groups.get(k) else { break };
        let part = run_group(plan, point, *rep);
        let mut m = merged.lock().expect("no worker panics while holding the lock");
        m.rows.extend(part.rows);
        m.errors.extend(part.errors);
    };
    std::thread::scope(|s| {
        for _ in 1..plan.jobs.min(groups.len().max(1)) {
            s.spawn(worker);
        }
        worker();
    });
    let mut res = merged.into_inner().expect("workers finished");
    res.sort();
    Ok(res)
}

pub fn run_sweep_t0(plan: &ExperimentPlan) -> Result<SweepResult> {
    expect_kind(plan, &[SweepKind::T0])?;
    run_plan(plan)
}

pub fn run_sweep_horizon(plan: &ExperimentPlan) -> Result<SweepResult> {
    expect_kind(plan, &[SweepKind::Horizon])?;
    run_plan(plan)
}

pub fn run_sweep_gamma(plan: &ExperimentPlan) -> Result<SweepResult> {
    expect_kind(plan, &[SweepKind::Gamma])?;
    run_plan(plan)
}

pub fn run_ablations(plan: &ExperimentPlan) -> Result<SweepResult> {
    expect_kind(plan, &[SweepKind::AblateHeads, SweepKind::AblateRnn])?;
    run_plan(plan)
}

fn expect_kind(plan: &ExperimentPlan, kinds: &[SweepKind]) -> Result<()> {
    if kinds.contains(&plan.kind) {
        Ok(())
    } else {
        Err(Error::Config(format!("plan of kind {} passed to a {} runner", plan.kind.name(), kinds[0].name())))
    }
}
