//! Imbalance-weight sweep for LTEE on a small panel. The panels and the
//! initialization are shared across gamma values, so the rows differ only
//! through the weight.
//!
//! `cargo run --release --example gamma_sweep`

use ltee::datagen::DatasetKind;
use ltee::harness::{run_sweep_gamma, ExperimentPlan, SweepKind};

fn main() -> ltee::Result<()> {
    let mut plan = ExperimentPlan::new(SweepKind::Gamma, DatasetKind::Ihdp).with_grid(&[0.0, 1e-8, 1e-2])?;
    plan.replications = 2;
    plan.sim.n_units = 300;
    plan.train.hidden = 8;
    plan.train.epochs = 15;
    plan.train.learning_rate = 5e-3;
    plan.train.teacher_forcing = false;
    let res = run_sweep_gamma(&plan)?;
    for r in &res.rows {
        println!("gamma {:>7.0e} rep {}: est {:.4} true {:.4} eps {:.4}", r.gamma, r.replication, r.est_ate, r.true_ate, r.eps_ate);
    }
    Ok(())
}
