use std::path::{Path, PathBuf};

use crate::baselines::Method;
use crate::error::{Error, Result};

use super::{Axis, ExperimentPlan, SweepResult, SweepRow};

const SWEEP_HEADER: [&str; 11] = [
    "method", "axis", "grid_value", "t0", "horizon", "gamma", "replication", "eps_ate", "true_ate", "est_ate", "wall_time",
];

/// 17 significant digits; parses back to the same bits.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse<T: std::str::FromStr>(field: &str, what: &str, line: usize) -> Result<T> {
    field.parse().map_err(|_| Error::Parse(format!("record {line}: bad {what} {field:?}")))
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.axis.name().to_string(),
            fmt(r.grid_value),
            r.t0.to_string(),
            r.horizon.to_string(),
            fmt(r.gamma),
            r.replication.to_string(),
            fmt(r.eps_ate),
            fmt(r.true_ate),
            fmt(r.est_ate),
            fmt(r.wall_time),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != SWEEP_HEADER {
        return Err(Error::Parse(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        let f = |k: usize| rec.get(k).unwrap_or("");
        rows.push(SweepRow {
            method: f(0).parse::<Method>().map_err(|e| Error::Parse(format!("record {line}: {e}")))?,
            axis: f(1).parse::<Axis>()?,
            grid_value: parse(f(2), "grid_value", line)?,
            t0: parse(f(3), "t0", line)?,
            horizon: parse(f(4), "horizon", line)?,
            gamma: parse(f(5), "gamma", line)?,
            replication: parse(f(6), "replication", line)?,
            eps_ate: parse(f(7), "eps_ate", line)?,
            true_ate: parse(f(8), "true_ate", line)?,
            est_ate: parse(f(9), "est_ate", line)?,
            wall_time: parse(f(10), "wall_time", line)?,
        });
    }
    Ok(rows)
}

/// Mean and sample standard deviation of `eps_ate` per method and grid value.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub axis: Axis,
    pub grid_value: f64,
    pub count: usize,
    pub mean_eps: f64,
    /// NaN for a single replication.
    pub std_eps: f64,
    pub mean_est: f64,
    pub mean_true: f64,
}

pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Axis, f64, Method)> = Vec::new();
    for r in rows {
        let k = (r.axis, r.grid_value, r.method);
        if !keys.iter().any(|q| q.0 == k.0 && q.1.total_cmp(&k.1).is_eq() && q.2 == k.2) {
            keys.push(k);
        }
    }
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    keys.into_iter()
        .map(|(axis, g, method)| {
            let sel: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.axis == axis && r.grid_value.total_cmp(&g).is_eq() && r.method == method)
                .collect();
            let n = sel.len() as f64;
            let mean = |f: fn(&SweepRow) -> f64| sel.iter().map(|r| f(r)).sum::<f64>() / n;
            let mean_eps = mean(|r| r.eps_ate);
            let std_eps = if sel.len() > 1 {
                (sel.iter().map(|r| (r.eps_ate - mean_eps).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                f64::NAN
            };
            SummaryRow {
                method,
                axis,
                grid_value: g,
                count: sel.len(),
                mean_eps,
                std_eps,
                mean_est: mean(|r| r.est_ate),
                mean_true: mean(|r| r.true_ate),
            }
        })
        .collect()
}

fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "axis", "grid_value", "count", "mean_eps", "std_eps", "mean_est", "mean_true"])?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.axis.name().to_string(),
            fmt(r.grid_value),
            r.count.to_string(),
            fmt(r.mean_eps),
            fmt(r.std_eps),
            fmt(r.mean_est),
            fmt(r.mean_true),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_errors_csv(res: &SweepResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "axis", "grid_value", "replication", "message"])?;
    for e in &res.errors {
        w.write_record([e.method.name(), e.axis.name(), &fmt(e.grid_value), &e.replication.to_string(), &e.message])?;
    }
    w.flush()?;
    Ok(())
}

fn plot_script(summary_name: &str, title: &str, log_x: bool) -> String {
    format!(
        r#"# Plots mean absolute ATE error per method with one-sd bars.
import csv
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

src = sys.argv[1] if len(sys.argv) > 1 else "{summary_name}"
series = defaultdict(list)
axis = "value"
with open(src) as f:
    for row in csv.DictReader(f):
        axis = row["axis"]
        series[row["method"]].append((float(row["grid_value"]), float(row["mean_eps"]), float(row["std_eps"])))

fig, ax = plt.subplots(figsize=(6, 4))
for method, pts in sorted(series.items()):
    pts.sort()
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    es = [0.0 if p[2] != p[2] else p[2] for p in pts]
    ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3, label=method)
if {log_x}:
    ax.set_xscale("symlog", linthresh=1e-10)
ax.set_xlabel(axis)
ax.set_ylabel("eps_ATE")
ax.set_title("{title}")
ax.legend()
fig.tight_layout()
fig.savefig(src.rsplit(".", 1)[0] + ".png", dpi=150)
"#,
        log_x = if log_x { "True" } else { "False" },
    )
}

/// Paths written by [`emit_outputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFiles {
    pub sweep: PathBuf,
    pub summary: PathBuf,
    pub errors: PathBuf,
    pub plot: PathBuf,
}

/// Writes the per-cell CSV, the summary CSV, the error list and a plotting
/// script into `dir`, named after the plan's kind and dataset.
pub fn emit_outputs(result: &SweepResult, plan: &ExperimentPlan, dir: &Path) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir)?;
    let stem = format!("{}_{}", plan.kind.name(), plan.dataset.name());
    let files = OutputFiles {
        sweep: dir.join(format!("sweep_{stem}.csv")),
        summary: dir.join(format!("summary_{stem}.csv")),
        errors: dir.join(format!("errors_{stem}.csv")),
        plot: dir.join(format!("plot_{stem}.py")),
    };
    write_sweep_csv(&result.rows, &files.sweep)?;
    write_summary_csv(&summarize(&result.rows), &files.summary)?;
    write_errors_csv(result, &files.errors)?;
    let summary_name = files.summary.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let title = format!("{} sweep, {}", plan.kind.name(), plan.dataset.name());
    std::fs::write(&files.plot, plot_script(&summary_name, &title, plan.kind == super::SweepKind::Gamma))?;
    Ok(files)
}
