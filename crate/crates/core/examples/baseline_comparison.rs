//! Every reference estimator on one panel, with the outcome blocks each one
//! read and the audit verdict against the settings matrix.
//!
//! `cargo run --release --example baseline_comparison`

use ltee::baselines::{
    audit, interpolate, naive_i, naive_ii, naive_iii, surrogate_index, tarnet_lite, AteEstimate, ProtocolView,
    TarnetConfig,
};
use ltee::datagen::{generate, SimConfig};

fn main() -> ltee::Result<()> {
    let ds = generate(&SimConfig { seed: 3, ..SimConfig::ihdp(50, 100) })?;
    let truth = ds.true_ate_target();
    println!("true long-term effect on target units: {truth:.4}");
    let runs: Vec<fn(&ProtocolView) -> ltee::Result<AteEstimate>> =
        vec![naive_i, naive_ii, naive_iii, surrogate_index, interpolate, |v| tarnet_lite(v, &TarnetConfig::default())];
    println!("{:<12} {:>9} {:>9}  {:<16} audit", "method", "estimate", "error", "reads");
    for run in runs {
        let view = ProtocolView::new(&ds);
        let est = run(&view)?;
        let verdict = match audit(est.method, est.inputs_used) {
            Ok(()) => "ok".to_string(),
            Err(e) => e.to_string(),
        };
        println!(
            "{:<12} {:>9.4} {:>9.4}  {:<16} {verdict}",
            est.method.name(),
            est.value,
            (est.value - truth).abs(),
            est.inputs_used.to_string()
        );
    }
    // touching the target long-term block is always refused
    let view = ProtocolView::new(&ds);
    let _ = view.target_long();
    println!("reading target long-term outcomes: {}", audit(ltee::baselines::Method::SurrogateIndex, view.reads()).unwrap_err());
    Ok(())
}
