//! Train LTEE on source units, then estimate the long-term effect on
//! target units from their contexts alone.
//!
//! `cargo run --release --example train_ltee`

use ltee::baselines::ProtocolView;
use ltee::datagen::{generate, DatasetKind, SimConfig};
use ltee::harness::estimate_ate_target;
use ltee::trainer::{train, TrainConfig};

fn main() -> ltee::Result<()> {
    let ds = generate(&SimConfig { seed: 11, ..SimConfig::ihdp(20, 40) })?;
    let cfg = TrainConfig {
        hidden: 16,
        epochs: 40,
        patience: 10,
        learning_rate: 5e-3,
        teacher_forcing: false,
        ..TrainConfig::for_kind(DatasetKind::Ihdp)
    };
    let view = ProtocolView::new(&ds);
    let out = train(&view, &cfg)?;
    println!("epoch      l1        l2    w1_sum  val_total");
    for r in out.history.iter().step_by(5) {
        println!("{:>5} {:>9.4} {:>9.4} {:>9.3} {:>10.4}", r.epoch, r.l1, r.l2, r.w1_sum, r.val_total);
    }
    println!("best epoch {} (validation objective {:.4})", out.best_epoch, out.best_val_total);
    println!("blocks read during training: {}", view.reads());
    let est = estimate_ate_target(&out.model, &view)?;
    let truth = ds.true_ate_target();
    println!("target effect: estimated {est:.4}, true {truth:.4}, error {:.4}", (est - truth).abs());

    let path = std::env::temp_dir().join("ltee_example.ckpt");
    out.model.save(&path)?;
    let back = ltee::seqmodel::LteeModel::load(&path)?;
    assert_eq!(back, out.model);
    println!("checkpoint round trip ok: {}", path.display());
    Ok(())
}
