//! Forward passes of an untrained LTEE network: surrogate states, attention
//! weights, short-term and long-term predictions for both arms.
//!
//! `cargo run --example model_forward`

use ltee::seqmodel::{LteeModel, ModelConfig};
use ltee::Arm;

fn main() -> ltee::Result<()> {
    let model = LteeModel::new(ModelConfig { hidden: 8, seed: 1, ..ModelConfig::new(4, 5) })?;
    let x = [0.3, -1.2, 0.8, 0.0];
    for arm in Arm::BOTH {
        let path = model.forward_arm(&x, arm, None)?;
        println!("{arm:?}");
        println!("  attention  {:?}", path.alphas.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>());
        println!("  short-term {:?}", path.short_preds.iter().map(|y| format!("{y:.3}")).collect::<Vec<_>>());
        println!("  long-term  {:.4}", path.primary_pred);
    }
    // teacher forcing feeds observed outcomes instead of predictions
    let observed = [1.0, 1.5, 2.0, 2.5, 3.0];
    let forced = model.forward_arm(&x, Arm::Treated, Some(&observed))?;
    println!("treated, teacher-forced long-term {:.4}", forced.primary_pred);
    println!("predicted ITE {:.4}", model.predict_ite(&x)?);
    println!("{} parameter values", model.params().total_values());
    Ok(())
}
