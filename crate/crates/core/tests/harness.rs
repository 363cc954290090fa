//! Sweep plumbing and the command-line front end.

use std::process::Command;

use ltee::baselines::{Method, ProtocolView};
use ltee::datagen::{generate, DatasetKind, Role, SimConfig};
use ltee::harness::{
    estimate_ate_target, read_sweep_csv, run_plan, run_sweep_t0, summarize, ExperimentPlan, SweepKind,
};
use ltee::seqmodel::{LteeModel, ModelConfig};

#[test]
fn one_cell_plan_gives_one_row() {
    let mut plan = ExperimentPlan::new(SweepKind::T0, DatasetKind::Ihdp).with_grid(&[10.0]).unwrap();
    plan.replications = 1;
    plan.methods = vec![Method::NaiveI];
    let res = run_sweep_t0(&plan).unwrap();
    assert_eq!(res.rows.len(), 1);
    assert!(res.errors.is_empty());
    let r = &res.rows[0];
    assert_eq!((r.t0, r.horizon, r.replication), (10, 100, 0));
    assert_eq!(r.eps_ate, (r.true_ate - r.est_ate).abs());
}

#[test]
fn news_sweep_counts_follow_the_grid() {
    let mut plan = ExperimentPlan::new(SweepKind::Horizon, DatasetKind::News).with_grid(&[55.0, 75.0, 100.0]).unwrap();
    plan.replications = 2;
    plan.methods = vec![Method::NaiveII, Method::SurrogateIndex, Method::Interpolate];
    plan.sim = SimConfig { n_units: 150, vocab: 120, k_topics: 8, doc_len_min: 20, doc_len_max: 40, ..plan.sim };
    let res = run_plan(&plan).unwrap();
    assert!(res.errors.is_empty(), "{:?}", res.errors);
    assert_eq!(res.rows.len(), 3 * 2 * 3);
    let summary = summarize(&res.rows);
    assert_eq!(summary.len(), 9);
    assert!(summary.iter().all(|s| s.count == 2));
}

#[test]
fn target_estimate_is_the_mean_unit_effect() {
    let mut ds = generate(&SimConfig { n_units: 60, seed: 5, ..SimConfig::ihdp(4, 8) }).unwrap();
    let model = LteeModel::new(ModelConfig { hidden: 5, seed: 3, ..ModelConfig::new(ds.context_dim(), 4) }).unwrap();

    let view = ProtocolView::new(&ds);
    let x = view.target_contexts();
    let per_unit: Vec<f64> = (0..x.rows()).map(|i| model.predict_ite(x.row_slice(i)).unwrap()).collect();
    let mean = per_unit.iter().sum::<f64>() / per_unit.len() as f64;
    let est = estimate_ate_target(&model, &view).unwrap();
    assert!((est - mean).abs() <= 1e-12 * mean.abs().max(1.0), "{est} vs {mean}");

    // a single target unit
    let keep = ds.indices(Role::Target)[0];
    for (i, r) in ds.role.iter_mut().enumerate() {
        if i != keep {
            *r = Role::Source;
        }
    }
    let view = ProtocolView::new(&ds);
    let one = estimate_ate_target(&model, &view).unwrap();
    assert_eq!(one, model.predict_ite(ds.x.row_slice(keep)).unwrap());
}

fn ltee_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ltee"))
}

#[test]
fn cli_sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.txt");
    std::fs::write(&cfg, "# tiny run\nmethods = naive_i, naive_iii\nn_units = 120\ngrid = 10, 30\n").unwrap();
    let out = ltee_bin()
        .args(["sweep", "--kind", "t0", "--reps", "2", "--seed", "4", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_sweep_csv(&dir.path().join("sweep_t0_ihdp.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2);
    let echo = std::fs::read_to_string(dir.path().join("config_echo.txt")).unwrap();
    assert!(echo.contains("seed = 4") && echo.contains("n_units = 120"));

    let report = ltee_bin().arg("report").arg("--out").arg(dir.path()).output().unwrap();
    assert!(report.status.success());
    let text = String::from_utf8_lossy(&report.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("naive_iii")).count(), 2);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.txt");
    std::fs::write(&cfg, "no_such_setting = 1\n").unwrap();
    let bad_key = ltee_bin().args(["estimate", "--config"]).arg(&cfg).output().unwrap().status;
    assert_eq!(bad_key.code(), Some(2));

    std::fs::write(&cfg, "this line has no equals sign\n").unwrap();
    let malformed = ltee_bin().args(["simulate", "--config"]).arg(&cfg).output().unwrap().status;
    assert_eq!(malformed.code(), Some(2));

    let bad_value = ltee_bin().args(["estimate", "--reps", "0"]).output().unwrap().status;
    assert_eq!(bad_value.code(), Some(2));

    // a learning rate this large blows the loss past the divergence limit
    std::fs::write(&cfg, "n_units = 120\nt0 = 3\nhorizon = 6\nhidden = 4\nepochs = 30\nlr = 1e6\n").unwrap();
    let diverged = ltee_bin().args(["train", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap().status;
    assert_eq!(diverged.code(), Some(3));
}

#[test]
fn cli_simulate_writes_panels() {
    let dir = tempfile::tempdir().unwrap();
    let status = ltee_bin()
        .args(["simulate", "--dataset", "ihdp", "--reps", "2", "--t0", "5", "--horizon", "9", "--out"])
        .arg(dir.path())
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let files: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("ihdp_t0-5_T-9_rep"))
        .collect();
    assert_eq!(files.len(), 2);
    let ds = ltee::datagen::read_dataset(&files[0].path()).unwrap();
    assert_eq!((ds.t0(), ds.config.horizon), (5, 9));
}
