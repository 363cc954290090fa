//! Command-line front end: simulate panels, train LTEE, compare estimators
//! and run the experiment sweeps.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ltee::baselines::Method;
use ltee::datagen::{generate, write_dataset, DatasetKind};
use ltee::harness::{
    emit_outputs, estimate_ate_target, parse_flat_config, read_sweep_csv, run_plan, summarize, Axis, GridPoint,
    RunSettings, SweepKind,
};
use ltee::trainer::train;
use ltee::{Error, Result};

#[derive(Parser)]
#[command(name = "ltee", version, about = "Long-term treatment effects from short-term surrogate sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one panel and write it as CSV.
    Simulate(Common),
    /// Train LTEE on one panel and report its target estimate.
    Train(Common),
    /// Run every estimator on `--reps` panels and print the comparison.
    Estimate(Common),
    /// Run an experiment grid and write CSV, summary and plot script.
    Sweep {
        #[arg(long, value_parser = parse_kind)]
        kind: SweepKind,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize the sweep CSVs found in `--out`.
    Report(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value = "ihdp", value_parser = parse_dataset)]
    dataset: DatasetKind,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<u64>,
    /// Imbalance weight for LTEE training.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    t0: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Flat `key = value` file applied before the other flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-cell progress on stderr.
    #[arg(long, short)]
    verbose: bool,
}

fn parse_dataset(s: &str) -> std::result::Result<DatasetKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<SweepKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn settings(&self) -> Result<RunSettings> {
        let mut s = RunSettings::new(self.dataset);
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            s.apply(&parse_flat_config(&text)?)?;
            if s.dataset != self.dataset {
                return Err(Error::Config(format!(
                    "config file sets dataset {} but --dataset is {}",
                    s.dataset.name(),
                    self.dataset.name()
                )));
            }
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.reps {
            s.reps = v;
        }
        if let Some(v) = self.jobs {
            s.jobs = v;
        }
        if let Some(v) = self.gamma {
            s.train.gamma = v;
        }
        if let Some(v) = self.t0 {
            s.sim.t0 = v;
        }
        if let Some(v) = self.horizon {
            s.sim.horizon = v;
        }
        Ok(s)
    }

    fn point(&self, s: &RunSettings) -> GridPoint {
        GridPoint { axis: Axis::Horizon, t0: s.sim.t0, horizon: s.sim.horizon, gamma: None }
    }
}

fn write_echo(dir: &Path, s: &RunSettings) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config_echo.txt"), s.to_config_text())?;
    Ok(())
}

fn simulate(c: &Common) -> Result<()> {
    let s = c.settings()?;
    let plan = s.plan(SweepKind::Single)?;
    std::fs::create_dir_all(&c.out)?;
    for rep in 0..s.reps {
        let ds = generate(&plan.sim_config(&c.point(&s), rep))?;
        let path = c.out.join(format!("{}_t0-{}_T-{}_rep{rep}.csv", s.dataset.name(), s.sim.t0, s.sim.horizon));
        write_dataset(&path, &ds)?;
        println!("{}  n = {}  true target ATE = {:.6}", path.display(), ds.n(), ds.true_ate_target());
    }
    write_echo(&c.out, &s)
}

fn train_one(c: &Common) -> Result<()> {
    let s = c.settings()?;
    let plan = s.plan(SweepKind::Single)?;
    let point = c.point(&s);
    let ds = generate(&plan.sim_config(&point, 0))?;
    let cfg = plan.train_config(&point, 0, Method::Ltee);
    let view = ltee::baselines::ProtocolView::new(&ds);
    let out = train(&view, &cfg)?;
    std::fs::create_dir_all(&c.out)?;
    out.write_history(&c.out.join("history.csv"))?;
    out.model.save(&c.out.join("model.ckpt"))?;
    write_echo(&c.out, &s)?;
    if let Some(msg) = &out.diverged {
        return Err(Error::Numerical(format!("training diverged ({msg}); best checkpoint saved")));
    }
    let est = estimate_ate_target(&out.model, &view)?;
    let truth = ds.true_ate_target();
    println!("epochs run      {}", out.history.len());
    println!("best epoch      {}", out.best_epoch);
    println!("estimated ATE   {est:.6}");
    println!("true ATE        {truth:.6}");
    println!("abs error       {:.6}", (est - truth).abs());
    Ok(())
}

fn estimate(c: &Common) -> Result<()> {
    let s = c.settings()?;
    let mut plan = s.plan(SweepKind::Single)?;
    plan.points = vec![c.point(&s)];
    plan.verbose = c.verbose;
    let res = run_plan(&plan)?;
    println!("{:<12} {:>4} {:>12} {:>12} {:>12}", "method", "n", "mean est", "mean true", "mean eps");
    for r in summarize(&res.rows) {
        println!("{:<12} {:>4} {:>12.5} {:>12.5} {:>12.5}", r.method.name(), r.count, r.mean_est, r.mean_true, r.mean_eps);
    }
    for e in &res.errors {
        eprintln!("{} rep {}: {}", e.method, e.replication, e.message);
    }
    Ok(())
}

fn sweep(kind: SweepKind, c: &Common) -> Result<()> {
    let s = c.settings()?;
    let mut plan = s.plan(kind)?;
    plan.verbose = c.verbose;
    let res = run_plan(&plan)?;
    let files = emit_outputs(&res, &plan, &c.out)?;
    write_echo(&c.out, &s)?;
    println!("{} rows, {} failed cells", res.rows.len(), res.errors.len());
    println!("{}", files.sweep.display());
    println!("{}", files.summary.display());
    println!("{}", files.plot.display());
    Ok(())
}

fn report(c: &Common) -> Result<()> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&c.out)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("sweep_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no sweep_*.csv files in {}", c.out.display())));
    }
    for p in paths {
        println!("== {}", p.display());
        println!("{:<12} {:>6} {:>14} {:>4} {:>12} {:>12}", "method", "axis", "value", "n", "mean eps", "sd eps");
        for r in summarize(&read_sweep_csv(&p)?) {
            println!(
                "{:<12} {:>6} {:>14} {:>4} {:>12.5} {:>12.5}",
                r.method.name(),
                r.axis.name(),
                r.grid_value,
                r.count,
                r.mean_eps,
                r.std_eps
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Train(c) => train_one(c),
        Command::Estimate(c) => estimate(c),
        Command::Sweep { kind, common } => sweep(*kind, common),
        Command::Report(c) => report(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::Numerical(_) => 3,
                _ => 1,
            })
        }
    }
}
