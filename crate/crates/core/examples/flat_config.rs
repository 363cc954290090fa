//! Flat `key = value` configuration: parse, apply, echo and turn into a plan.
//!
//! `cargo run --example flat_config`

use ltee::datagen::DatasetKind;
use ltee::harness::{parse_flat_config, RunSettings, SweepKind};

const TEXT: &str = "
# desk-scale News run
reps = 3
seed = 17
methods = ltee, sind, naive_iii
grid = 60, 80, 100
n_units = 1000
vocab = 300
hidden = 16
epochs = 60
lr = 5e-3
teacher_forcing = false
";

fn main() -> ltee::Result<()> {
    let mut settings = RunSettings::new(DatasetKind::News);
    settings.apply(&parse_flat_config(TEXT)?)?;
    let plan = settings.plan(SweepKind::Horizon)?;
    println!("{} cells over T = {:?}", plan.cell_count(), plan.points.iter().map(|p| p.horizon).collect::<Vec<_>>());
    println!("--- echo ---\n{}", settings.to_config_text());
    match settings.set("learning_rate", "fast") {
        Err(e) => println!("rejected: {e}"),
        Ok(()) => unreachable!(),
    }
    Ok(())
}
