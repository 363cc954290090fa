use super::*;
use crate::ndcore::Tensor;
use crate::seqmodel::ModelConfig;

fn tiny_plan(kind: SweepKind, methods: Vec<Method>) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(kind, DatasetKind::Ihdp);
    plan.replications = 2;
    plan.methods = methods;
    plan.sim.n_units = 200;
    plan.train.hidden = 4;
    plan.train.epochs = 2;
    plan.train.batch_size = 32;
    plan.tarnet.epochs = 3;
    plan.tarnet.hidden = 4;
    plan
}

fn baseline_methods() -> Vec<Method> {
    vec![Method::NaiveI, Method::NaiveII, Method::NaiveIII, Method::SurrogateIndex, Method::Interpolate]
}

#[test]
fn default_grids_have_the_documented_sizes() {
    let t0 = ExperimentPlan::new(SweepKind::T0, DatasetKind::Ihdp);
    assert_eq!(t0.points.iter().map(|p| p.t0).collect::<Vec<_>>(), vec![10, 30, 50, 70, 90]);
    assert!(t0.points.iter().all(|p| p.horizon == 100));
    assert_eq!(t0.cell_count(), 5 * 10 * 7);
    let h = ExperimentPlan::new(SweepKind::Horizon, DatasetKind::News);
    assert_eq!(h.points.len(), 10);
    assert!(h.points.iter().all(|p| p.t0 == 50));
    let g = ExperimentPlan::new(SweepKind::Gamma, DatasetKind::Ihdp);
    assert_eq!(g.points.iter().map(|p| p.value()).collect::<Vec<_>>(), GAMMA_GRID.to_vec());
    let a = ExperimentPlan::new(SweepKind::AblateRnn, DatasetKind::Ihdp);
    assert_eq!(a.points.len(), 15);
    assert_eq!(a.methods, vec![Method::Rnn, Method::SurrogateIndex]);
}

#[test]
fn seeds_ignore_the_rest_of_the_grid() {
    let small = ExperimentPlan::new(SweepKind::T0, DatasetKind::Ihdp).with_grid(&[30.0]).unwrap();
    let big = ExperimentPlan::new(SweepKind::T0, DatasetKind::Ihdp).with_grid(&[10.0, 30.0, 50.0]).unwrap();
    assert_eq!(small.sim_config(&small.points[0], 3), big.sim_config(&big.points[1], 3));
    assert_ne!(big.sim_config(&big.points[0], 3).seed, big.sim_config(&big.points[1], 3).seed);
    // gamma points share data and initialization
    let g = ExperimentPlan::new(SweepKind::Gamma, DatasetKind::Ihdp);
    let (a, b) = (&g.points[0], &g.points[4]);
    assert_eq!(g.sim_config(a, 1), g.sim_config(b, 1));
    assert_eq!(g.train_config(a, 1, Method::Ltee).seed, g.train_config(b, 1, Method::Ltee).seed);
    assert_eq!(g.train_config(b, 1, Method::Ltee).gamma, 1e-4);
    assert_eq!(g.train_config(b, 1, Method::Rnn).gamma, 0.0);
    assert!(g.train_config(b, 1, Method::SingleHeadLtee).single_head);
}

#[test]
fn sweep_rows_cover_every_cell_in_sorted_order() {
    let plan = tiny_plan(SweepKind::T0, baseline_methods()).with_grid(&[30.0, 10.0]).unwrap();
    let res = run_sweep_t0(&plan).unwrap();
    assert!(res.errors.is_empty(), "{:?}", res.errors);
    assert_eq!(res.rows.len(), plan.cell_count());
    let keys: Vec<_> = res.rows.iter().map(|r| (r.grid_value as u64, r.method, r.replication)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    for r in &res.rows {
        assert_eq!(r.eps_ate, eps_ate(r.true_ate, r.est_ate));
        assert!(r.gamma.is_nan());
        assert_eq!(r.t0 as f64, r.grid_value);
    }
}

#[test]
fn sweeps_are_deterministic_across_worker_counts() {
    let mut plan = tiny_plan(SweepKind::Horizon, vec![Method::NaiveIII, Method::Ltee])
        .with_grid(&[60.0, 80.0])
        .unwrap();
    let a = run_plan(&plan).unwrap();
    plan.jobs = 3;
    let b = run_plan(&plan).unwrap();
    assert_eq!(a.rows.len(), 8);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!((x.method, x.replication, x.grid_value), (y.method, y.replication, y.grid_value));
        assert_eq!(x.est_ate.to_bits(), y.est_ate.to_bits());
        assert_eq!(x.true_ate.to_bits(), y.true_ate.to_bits());
    }
}

#[test]
fn failing_cells_become_error_rows() {
    let mut plan = tiny_plan(SweepKind::T0, vec![Method::NaiveIII, Method::Interpolate]);
    plan.points = vec![GridPoint { axis: Axis::T0, t0: 1, horizon: 100, gamma: None }];
    let res = run_plan(&plan).unwrap();
    assert_eq!(res.rows.len(), 2);
    assert!(res.rows.iter().all(|r| r.method == Method::NaiveIII));
    assert_eq!(res.errors.len(), 2);
    assert!(res.errors.iter().all(|e| e.method == Method::Interpolate && e.message.contains("t0 >= 2")));
}

#[test]
fn panels_without_treated_units_fail_every_method() {
    let mut plan = tiny_plan(SweepKind::T0, vec![Method::NaiveI, Method::NaiveII, Method::Ltee]).with_grid(&[10.0]).unwrap();
    plan.replications = 1;
    plan.sim.treated_fraction = Some(1e-4);
    let res = run_plan(&plan).unwrap();
    assert!(res.rows.is_empty());
    assert_eq!(res.errors.len(), 3, "{:?}", res.errors);
}

#[test]
fn bad_plans_are_config_errors() {
    let mut plan = tiny_plan(SweepKind::T0, baseline_methods());
    plan.replications = 0;
    assert!(matches!(run_plan(&plan), Err(Error::Config(_))));
    let plan = tiny_plan(SweepKind::T0, baseline_methods());
    assert!(matches!(run_sweep_gamma(&plan), Err(Error::Config(_))));
    assert!(ExperimentPlan::new(SweepKind::T0, DatasetKind::Ihdp).with_grid(&[2.5]).is_err());
    let mut bad = ExperimentPlan::new(SweepKind::Gamma, DatasetKind::Ihdp);
    bad.points[0].gamma = Some(-1.0);
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
}

#[test]
fn sequence_cells_record_their_gamma() {
    let mut plan = tiny_plan(SweepKind::Gamma, vec![Method::Ltee]).with_grid(&[0.0, 1e-2]).unwrap();
    plan.replications = 1;
    let res = run_sweep_gamma(&plan).unwrap();
    assert!(res.errors.is_empty(), "{:?}", res.errors);
    assert_eq!(res.rows.iter().map(|r| r.gamma).collect::<Vec<_>>(), vec![0.0, 1e-2]);
    assert_eq!(res.rows[0].true_ate, res.rows[1].true_ate);
}

#[test]
fn zero_model_estimates_zero_effect() {
    let ds = generate(&SimConfig { n_units: 100, ..SimConfig::ihdp(5, 10) }).unwrap();
    let mut model = LteeModel::new(ModelConfig { hidden: 3, ..ModelConfig::new(ds.context_dim(), 5) }).unwrap();
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let shape = model.params().get(id).shape().to_vec();
        model.params_mut().set(id, Tensor::zeros(&shape)).unwrap();
    }
    let view = ProtocolView::new(&ds);
    assert_eq!(estimate_ate_target(&model, &view).unwrap(), 0.0);
    assert!(view.reads().is_empty());
    assert_eq!(eps_ate(0.0, 0.0), 0.0);
    assert_eq!(eps_ate(1.5, -0.5), 2.0);
}

#[test]
fn csv_round_trips_every_value() {
    let plan = tiny_plan(SweepKind::T0, baseline_methods()).with_grid(&[10.0]).unwrap();
    let mut res = run_plan(&plan).unwrap();
    res.rows[0].est_ate = 0.1 + 0.2;
    res.rows[1].true_ate = -1.0 / 3.0;
    let dir = tempfile::tempdir().unwrap();
    let files = emit_outputs(&res, &plan, dir.path()).unwrap();
    let back = read_sweep_csv(&files.sweep).unwrap();
    assert_eq!(back.len(), res.rows.len());
    for (a, b) in res.rows.iter().zip(&back) {
        assert_eq!((a.method, a.axis, a.t0, a.horizon, a.replication), (b.method, b.axis, b.t0, b.horizon, b.replication));
        for (x, y) in [(a.grid_value, b.grid_value), (a.eps_ate, b.eps_ate), (a.true_ate, b.true_ate), (a.est_ate, b.est_ate), (a.wall_time, b.wall_time)] {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert!(b.gamma.is_nan());
    }
    let summary = std::fs::read_to_string(&files.summary).unwrap();
    assert_eq!(summary.lines().count(), 1 + baseline_methods().len());
    assert!(std::fs::read_to_string(&files.plot).unwrap().contains("summary_t0_ihdp.csv"));
}

#[test]
fn empty_plan_writes_header_only() {
    let mut plan = tiny_plan(SweepKind::T0, baseline_methods());
    plan.points.clear();
    let res = run_plan(&plan).unwrap();
    assert!(res.rows.is_empty() && res.errors.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let files = emit_outputs(&res, &plan, dir.path()).unwrap();
    let text = std::fs::read_to_string(&files.sweep).unwrap();
    assert_eq!(text.lines().collect::<Vec<_>>(), vec![SWEEP_HEADER_LINE]);
    assert!(read_sweep_csv(&files.sweep).unwrap().is_empty());
}

const SWEEP_HEADER_LINE: &str = "method,axis,grid_value,t0,horizon,gamma,replication,eps_ate,true_ate,est_ate,wall_time";

#[test]
fn summary_reports_mean_and_sample_sd() {
    let row = |rep, eps| SweepRow {
        method: Method::NaiveI,
        axis: Axis::T0,
        grid_value: 10.0,
        t0: 10,
        horizon: 100,
        gamma: f64::NAN,
        replication: rep,
        eps_ate: eps,
        true_ate: 1.0,
        est_ate: 1.0 + eps,
        wall_time: 0.0,
    };
    let s = summarize(&[row(0, 1.0), row(1, 3.0), row(2, 2.0)]);
    assert_eq!(s.len(), 1);
    assert_eq!((s[0].count, s[0].mean_eps, s[0].std_eps), (3, 2.0, 1.0));
    assert!(summarize(&[row(0, 1.0)])[0].std_eps.is_nan());
}

#[test]
fn flat_config_parses_and_rejects() {
    let pairs = parse_flat_config("# comment\n\nreps = 3\nlr = 0.005  # trailing\nC1 = 0\n").unwrap();
    assert_eq!(pairs.len(), 3);
    let mut s = RunSettings::new(DatasetKind::Ihdp);
    s.apply(&pairs).unwrap();
    assert_eq!((s.reps, s.train.learning_rate, s.sim.c1), (3, 0.005, 0.0));
    let err = parse_flat_config("reps = 3\njust words\n").unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("line 2")));
    assert!(matches!(s.set("no_such_key", "1"), Err(Error::Config(_))));
    assert!(matches!(s.set("epochs", "many"), Err(Error::Config(_))));
    assert!(matches!(s.set("methods", "ltee,magic"), Err(Error::Config(_))));
}

#[test]
fn settings_echo_round_trips() {
    let mut s = RunSettings::new(DatasetKind::News);
    s.apply(&parse_flat_config("reps = 4\nseed = 9\nmethods = ltee,sind\ngrid = 60,70\nhidden = 12\ngamma = 1e-9\nvocab = 300\ntarnet_epochs = 7").unwrap())
        .unwrap();
    let mut back = RunSettings::new(DatasetKind::Ihdp);
    back.apply(&parse_flat_config(&s.to_config_text()).unwrap()).unwrap();
    assert_eq!(back, s);
    let plan = s.plan(SweepKind::Horizon).unwrap();
    assert_eq!(plan.methods, vec![Method::Ltee, Method::SurrogateIndex]);
    assert_eq!(plan.points.iter().map(|p| p.horizon).collect::<Vec<_>>(), vec![60, 70]);
    assert_eq!((plan.replications, plan.base_seed, plan.train.hidden, plan.sim.vocab), (4, 9, 12, 300));
}
