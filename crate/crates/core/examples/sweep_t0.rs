//! A reduced t0 sweep with CSV, summary and plot-script output.
//!
//! `cargo run --release --example sweep_t0 -- /tmp/ltee_sweep`

use ltee::baselines::Method;
use ltee::datagen::DatasetKind;
use ltee::harness::{emit_outputs, run_sweep_t0, summarize, ExperimentPlan, SweepKind};

fn main() -> ltee::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("ltee_sweep"), Into::into);
    let mut plan = ExperimentPlan::new(SweepKind::T0, DatasetKind::Ihdp);
    plan.replications = 3;
    plan.methods = vec![Method::NaiveI, Method::NaiveIII, Method::SurrogateIndex, Method::Interpolate];
    plan.verbose = false;
    let res = run_sweep_t0(&plan)?;
    for s in summarize(&res.rows) {
        println!("{:<10} t0 = {:>3}: eps {:.4} +- {:.4}", s.method.name(), s.grid_value, s.mean_eps, s.std_eps);
    }
    let files = emit_outputs(&res, &plan, &out)?;
    println!("rows: {}  failed cells: {}", res.rows.len(), res.errors.len());
    println!("plot with: python3 {} {}", files.plot.display(), files.summary.display());
    Ok(())
}
