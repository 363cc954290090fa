use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::baselines::{Block, BlockSet};
use crate::datagen::{generate, SimConfig};
use crate::ndcore::{gradcheck, Tensor};
use crate::seqmodel::{Bound, ParamStore};

fn quadratic_store(start: &[f64]) -> ParamStore {
    let mut s = ParamStore::new();
    s.push("theta", Tensor::row(start));
    s
}

fn small_model(d: usize, h: usize, t0: usize, seed: u64) -> LteeModel {
    LteeModel::new(ModelConfig { hidden: h, seed, ..ModelConfig::new(d, t0) }).unwrap()
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize, t0: usize, w: &[u8]) -> Batch {
    let mut r = |k: usize| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    Batch {
        x: Tensor::matrix(n, d, r(n * d)).unwrap(),
        w: w.to_vec(),
        short: Tensor::matrix(n, t0, r(n * t0)).unwrap(),
        long: r(n),
    }
}

fn weights(gamma: f64, lambda: f64) -> LossWeights {
    LossWeights { gamma, lambda, teacher_forcing: true, sinkhorn: SinkhornConfig::TRAINING }
}

fn tiny_ihdp(n: usize, t0: usize, horizon: usize, seed: u64) -> PanelDataset {
    generate(&SimConfig { n_units: n, seed, context_dim: 6, n_continuous: 3, ..SimConfig::ihdp(t0, horizon) }).unwrap()
}

fn quick_config(kind: DatasetKind) -> TrainConfig {
    TrainConfig { hidden: 6, epochs: 4, batch_size: 32, ..TrainConfig::for_kind(kind) }
}

#[test]
fn zero_gradient_leaves_fresh_parameters_alone() {
    let mut s = quadratic_store(&[1.0, -2.0]);
    let mut adam = Adam::new(0.1);
    let g = Tensor::zeros(&[1, 2]);
    adam.step(&mut s, &[Some(&g)]).unwrap();
    let id = s.ids().next().unwrap();
    assert_eq!(s.get(id).data(), &[1.0, -2.0]);
}

#[test]
fn zero_gradient_decays_moments() {
    let mut s = quadratic_store(&[0.0]);
    let mut adam = Adam::new(0.1);
    adam.step(&mut s, &[Some(&Tensor::row(&[2.0]))]).unwrap();
    let (m1, v1) = (adam.first_moment(0).unwrap().data()[0], adam.second_moment(0).unwrap().data()[0]);
    adam.step(&mut s, &[Some(&Tensor::row(&[0.0]))]).unwrap();
    let (m2, v2) = (adam.first_moment(0).unwrap().data()[0], adam.second_moment(0).unwrap().data()[0]);
    assert!((m2 - 0.9 * m1).abs() < 1e-15);
    assert!((v2 - 0.999 * v1).abs() < 1e-15);
}

#[test]
fn first_step_moves_by_learning_rate_times_sign() {
    let mut s = quadratic_store(&[0.5, 0.5, 0.5]);
    let mut adam = Adam::new(1e-3);
    adam.step(&mut s, &[Some(&Tensor::row(&[3.0, -0.01, 200.0]))]).unwrap();
    let id = s.ids().next().unwrap();
    let moved: Vec<f64> = s.get(id).data().iter().map(|v| v - 0.5).collect();
    for (m, sign) in moved.iter().zip([-1.0, 1.0, -1.0]) {
        assert!((m - sign * 1e-3).abs() < 1e-8, "{moved:?}");
    }
}

#[test]
fn adam_solves_a_convex_quadratic() {
    // f = sum a_k (theta_k - c_k)^2, minimizer c
    let a = [1.0, 3.0, 0.5];
    let c = [0.3, -0.2, 0.1];
    let mut s = quadratic_store(&[0.0, 0.0, 0.0]);
    let id = s.ids().next().unwrap();
    let mut adam = Adam::new(0.03);
    for _ in 0..100 {
        let th = s.get(id).data().to_vec();
        let g: Vec<f64> = (0..3).map(|k| 2.0 * a[k] * (th[k] - c[k])).collect();
        adam.step(&mut s, &[Some(&Tensor::row(&g))]).unwrap();
    }
    let err: f64 = s.get(id).data().iter().zip(c).map(|(t, c)| (t - c).powi(2)).sum::<f64>().sqrt();
    assert!(err < 1e-3, "distance {err}");
}

#[test]
fn non_finite_gradient_names_the_parameter() {
    let mut s = ParamStore::new();
    s.push("encoder.w", Tensor::row(&[1.0]));
    s.push("head.b", Tensor::row(&[1.0]));
    let before = s.clone();
    let mut adam = Adam::new(0.1);
    let good = Tensor::row(&[1.0]);
    let bad = Tensor::row(&[f64::NAN]);
    let err = adam.step(&mut s, &[Some(&good), Some(&bad)]).unwrap_err();
    assert!(matches!(&err, Error::Numerical(m) if m.contains("head.b")), "{err}");
    assert_eq!(s, before);
}

#[test]
fn unreached_parameters_keep_their_step_count() {
    let mut s = ParamStore::new();
    s.push("a", Tensor::row(&[0.0]));
    s.push("b", Tensor::row(&[0.0]));
    let mut adam = Adam::new(1e-3);
    let g = Tensor::row(&[1.0]);
    for _ in 0..5 {
        adam.step(&mut s, &[Some(&g), None]).unwrap();
    }
    let ids: Vec<_> = s.ids().collect();
    assert_eq!(s.get(ids[1]).data(), &[0.0]);
    assert!(adam.first_moment(1).is_none());
    // first step on `b` is still a full bias-corrected step
    adam.step(&mut s, &[None, Some(&g)]).unwrap();
    assert!((s.get(ids[1]).data()[0] + 1e-3).abs() < 1e-9);
}

#[test]
fn perfect_predictions_give_zero_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = small_model(3, 4, 3, 2);
    let w = [0, 1, 1, 0, 1];
    let mut batch = random_batch(&mut rng, 5, 3, 3, &w);
    // autoregressive targets equal the model's own predictions
    for (i, &wi) in w.iter().enumerate() {
        let path = model.forward_arm(batch.x.row_slice(i), Arm::from_indicator(wi).unwrap(), None).unwrap();
        for t in 0..3 {
            batch.short.set(i, t, path.short_preds[t]);
        }
        batch.long[i] = path.primary_pred;
    }
    let lw = LossWeights { teacher_forcing: false, ..weights(0.0, 0.0) };
    let v = evaluate_loss(&model, &batch, &lw).unwrap();
    assert!(v.total.abs() < 1e-24, "{v:?}");
}

#[test]
fn loss_matches_per_unit_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (d, t0) = (4, 3);
    let model = small_model(d, 5, t0, 4);
    let w = [1, 0, 0, 1, 0, 1, 1];
    let batch = random_batch(&mut rng, w.len(), d, t0, &w);
    let v = evaluate_loss(&model, &batch, &weights(0.0, 0.0)).unwrap();

    let mut acc = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        let path = model
            .forward_arm(batch.x.row_slice(i), Arm::from_indicator(wi).unwrap(), Some(batch.short.row_slice(i)))
            .unwrap();
        let short: f64 = (0..t0).map(|t| (path.short_preds[t] - batch.short.get(i, t)).powi(2)).sum::<f64>() / t0 as f64;
        acc += short + (path.primary_pred - batch.long[i]).powi(2);
    }
    let reference = acc / w.len() as f64;
    assert!((v.total - reference).abs() < 1e-12, "{} vs {reference}", v.total);
    assert!((v.l1 + v.l2 - reference).abs() < 1e-12);
}

#[test]
fn weight_decay_is_linear_in_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = small_model(3, 4, 2, 6);
    let batch = random_batch(&mut rng, 6, 3, 2, &[0, 1, 0, 1, 1, 0]);
    let lambda = 0.37;
    let a = evaluate_loss(&model, &batch, &weights(1e-3, lambda)).unwrap();
    let b = evaluate_loss(&model, &batch, &weights(1e-3, 2.0 * lambda)).unwrap();
    let all: Vec<_> = model.params().ids().collect();
    let norm = model.squared_norm(&all);
    assert!((b.total - a.total - lambda * norm).abs() < 1e-12);
    assert!((a.norm - norm).abs() < 1e-12);
}

#[test]
fn penalty_covers_only_reachable_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = small_model(3, 4, 2, 8);
    let batch = random_batch(&mut rng, 4, 3, 2, &[1, 1, 1, 1]);
    let v = evaluate_loss(&model, &batch, &weights(0.0, 1.0)).unwrap();
    let reach = model.reachable_params(&[Arm::Treated]);
    assert!((v.norm - model.squared_norm(&reach)).abs() < 1e-12);
    assert!(v.norm < model.squared_norm(&model.params().ids().collect::<Vec<_>>()));
}

#[test]
fn one_arm_batch_has_zero_imbalance_and_counts_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = small_model(3, 4, 3, 10);
    let batch = random_batch(&mut rng, 4, 3, 3, &[0, 0, 0, 0]);
    let v = evaluate_loss(&model, &batch, &weights(1.0, 0.0)).unwrap();
    assert_eq!(v.w1_sum, 0.0);
    assert_eq!(v.degenerate, 3);
    let base = evaluate_loss(&model, &batch, &weights(0.0, 0.0)).unwrap();
    assert_eq!(v.total, base.total);
}

#[test]
fn zero_gamma_never_builds_the_transport_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = small_model(3, 4, 3, 12);
    let batch = random_batch(&mut rng, 6, 3, 3, &[0, 1, 0, 1, 0, 1]);
    let nodes = |gamma: f64| {
        let mut tape = Tape::new();
        let p = model.params().bind(&mut tape);
        assemble_loss(&mut tape, &model, &p, &batch, &weights(gamma, 0.0)).unwrap();
        tape.len()
    };
    assert!(nodes(0.0) + 100 < nodes(1e-12));
    let off = evaluate_loss(&model, &batch, &weights(0.0, 0.0)).unwrap();
    assert_eq!(off.w1_sum, 0.0);
    let tiny = evaluate_loss(&model, &batch, &weights(1e-300, 0.0)).unwrap();
    assert!(tiny.w1_sum > 0.0);
    assert_eq!(tiny.total, off.total);
}

#[test]
fn full_objective_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (d, t0) = (3, 2);
    let model = small_model(d, 3, t0, 14);
    let batch = random_batch(&mut rng, 5, d, t0, &[0, 1, 1, 0, 1]);
    let lw = weights(0.5, 0.01);
    let inputs: Vec<Tensor> = model.params().ids().map(|id| model.params().get(id).clone()).collect();
    let res = gradcheck::check(&inputs, 1e-6, 1e-6, |tape, vars| {
        let p = Bound::from_vars(vars.to_vec());
        Ok(assemble_loss(tape, &model, &p, &batch, &lw)?.total)
    })
    .unwrap();
    assert!(res.max_rel_err < 1e-4, "{res:?}");
}

#[test]
fn config_validation_and_echo() {
    let mut c = TrainConfig::for_kind(DatasetKind::News);
    assert_eq!(c.gamma, 1e-10);
    assert_eq!(TrainConfig::for_kind(DatasetKind::Ihdp).gamma, 1e-8);
    c.batch_size = 1;
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    c.batch_size = 64;
    c.gamma = -1.0;
    assert!(matches!(c.validate(), Err(Error::Config(_))));

    let mut d = TrainConfig::for_kind(DatasetKind::Ihdp);
    d.gamma = 0.25;
    d.teacher_forcing = false;
    d.sinkhorn.iters = 7;
    let mut e = TrainConfig::for_kind(DatasetKind::Ihdp);
    for (k, v) in d.to_pairs() {
        assert!(e.set(k, &v).unwrap(), "{k}");
    }
    assert_eq!(d, e);
    assert!(!e.set("vocab", "3").unwrap());
    assert!(e.set("gamma", "x").is_err());
}

#[test]
fn training_reads_only_source_blocks() {
    let ds = tiny_ihdp(120, 3, 6, 1);
    let view = ProtocolView::new(&ds);
    train(&view, &quick_config(DatasetKind::Ihdp)).unwrap();
    assert_eq!(view.reads(), BlockSet::of(&[Block::SourceShort, Block::SourceLong]));
}

#[test]
fn training_is_bit_deterministic() {
    let ds = tiny_ihdp(120, 3, 6, 2);
    let cfg = quick_config(DatasetKind::Ihdp);
    let a = train_on(&ds, &cfg).unwrap();
    let b = train_on(&ds, &cfg).unwrap();
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(a.history, b.history);
    let c = train_on(&ds, &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.model.params(), c.model.params());
}

#[test]
fn checkpoint_holds_the_best_validation_loss() {
    let ds = tiny_ihdp(150, 3, 6, 3);
    let cfg = TrainConfig { epochs: 12, learning_rate: 0.05, ..quick_config(DatasetKind::Ihdp) };
    let out = train_on(&ds, &cfg).unwrap();
    let last = out.history.last().unwrap().val_total;
    assert!(out.best_val_total <= last);
    let min = out.history.iter().map(|r| r.val_total).fold(f64::INFINITY, f64::min);
    if out.best_epoch > 0 {
        assert_eq!(out.best_val_total, min);
        assert_eq!(out.history[out.best_epoch - 1].val_total, min);
    }
}

#[test]
fn patience_stops_early() {
    let ds = tiny_ihdp(120, 2, 4, 4);
    // a huge step size makes validation stall almost at once
    let cfg = TrainConfig { epochs: 200, patience: 3, learning_rate: 0.5, ..quick_config(DatasetKind::Ihdp) };
    let out = train_on(&ds, &cfg).unwrap();
    assert!(out.history.len() < 200);
    assert!(out.history.len() >= out.best_epoch + 3 || out.diverged.is_some());
}

#[test]
fn divergence_returns_last_good_parameters() {
    let mut ds = tiny_ihdp(120, 2, 4, 5);
    // outcomes so large that one step overflows the loss
    for y in &mut ds.y_pot {
        *y = y.map(|v| v * 1e200);
    }
    let ds = crate::datagen::PanelDataset::new(ds.config.clone(), ds.x.clone(), ds.w.clone(), ds.role.clone(), ds.y_pot.clone())
        .unwrap();
    let out = train_on(&ds, &quick_config(DatasetKind::Ihdp));
    match out {
        Ok(o) => {
            assert!(o.diverged.is_some());
            assert!(o.model.params().ids().all(|id| o.model.params().get(id).all_finite()));
        }
        Err(e) => assert!(matches!(e, Error::Numerical(_)), "{e}"),
    }
}

#[test]
fn history_file_has_one_row_per_epoch() {
    let ds = tiny_ihdp(100, 2, 4, 6);
    let out = train_on(&ds, &quick_config(DatasetKind::Ihdp)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.csv");
    out.write_history(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,l1,l2,w1_sum,total,val_total");
    assert_eq!(lines.len(), out.history.len() + 1);
    let row: Vec<f64> = lines[1].split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(row[4], out.history[0].total);
}

#[test]
fn batches_follow_the_arm_ratio() {
    let w: Vec<u8> = (0..100).map(|i| u8::from(i % 5 == 0)).collect();
    let rows: Vec<usize> = (0..100).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batches = stratified_batches(&rows, &w, 16, &mut rng);
    assert_eq!(batches.len(), 7);
    let mut seen: Vec<usize> = batches.concat();
    seen.sort_unstable();
    assert_eq!(seen, rows);
    for b in &batches {
        let t = b.iter().filter(|&&i| w[i] == 1).count();
        assert!((2..=3).contains(&t), "{t} treated of {}", b.len());
    }
}
