//! Entropic Wasserstein-1 between two point clouds and its transport plan.
//!
//! `cargo run --example sinkhorn_transport`

use ltee::balance::{Epsilon, SinkhornConfig, TransportProblem};
use ltee::ndcore::Tensor;

fn main() -> ltee::Result<()> {
    let treated = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]])?;
    let control = Tensor::from_rows(&[vec![0.1, 0.1], vec![1.2, 0.1], vec![0.1, 1.1], vec![2.0, 2.0]])?;

    for (label, cfg) in [
        ("training setting", SinkhornConfig::TRAINING),
        ("evaluation setting", SinkhornConfig::EVALUATION),
        ("sharp, eps = 1e-3", SinkhornConfig::new(Epsilon::Absolute(1e-3), 500)),
    ] {
        let sol = TransportProblem::new(treated.clone(), control.clone(), cfg).solve()?;
        println!("{label:>20}: W1 = {:.5}", sol.distance);
    }

    let sol = TransportProblem::new(treated, control, SinkhornConfig::EVALUATION).solve()?;
    println!("plan (rows sum to 1/3, columns to 1/4):");
    for i in 0..sol.plan.rows() {
        let row: Vec<String> = sol.plan.row_slice(i).iter().map(|v| format!("{v:.3}")).collect();
        println!("  {}", row.join("  "));
    }
    Ok(())
}
