//! Generate one IHDP-style and one News-style panel and inspect them.
//!
//! `cargo run --example simulate_panels`

use ltee::datagen::{generate, write_dataset, DatasetKind, Role, SimConfig};
use ltee::Arm;

fn main() -> ltee::Result<()> {
    let ihdp = SimConfig { seed: 7, ..SimConfig::ihdp(10, 30) };
    let news = SimConfig { seed: 7, n_units: 600, vocab: 400, ..SimConfig::news(10, 30) };
    for cfg in [ihdp, news] {
        let ds = generate(&cfg)?;
        println!("{} panel: {} units, {} covariates, t0 = {}, T = {}", cfg.kind.name(), ds.n(), ds.context_dim(), cfg.t0, cfg.horizon);
        for role in [Role::Source, Role::Target] {
            println!(
                "  {role:?}: {} treated, {} control",
                ds.count(role, Arm::Treated),
                ds.count(role, Arm::Control)
            );
        }
        println!("  true effect at step 1:   {:.4}", ds.true_ate_at(Role::Target, 0));
        println!("  true effect at step t0:  {:.4}", ds.true_ate_at(Role::Target, cfg.t0 - 1));
        println!("  true long-term effect:   {:.4}", ds.true_ate_target());
        if cfg.kind == DatasetKind::Ihdp {
            let path = std::env::temp_dir().join("ltee_example_ihdp.csv");
            write_dataset(&path, &ds)?;
            println!("  written to {}", path.display());
        }
    }
    Ok(())
}
