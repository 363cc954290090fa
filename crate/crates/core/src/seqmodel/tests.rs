use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn set(m: &mut LteeModel, name: &str, vals: &[f64]) {
    let id = m.params().find(name).unwrap_or_else(|| panic!("no param {name}"));
    let shape = m.params().get(id).shape().to_vec();
    m.params_mut().set(id, Tensor::new(shape, vals.to_vec()).unwrap()).unwrap();
}

fn get(m: &LteeModel, name: &str) -> Vec<f64> {
    m.params().get(m.params().find(name).unwrap()).data().to_vec()
}

fn zero_all(m: &mut LteeModel) {
    let ids: Vec<_> = m.params().ids().collect();
    for id in ids {
        let z = Tensor::zeros(m.params().get(id).shape());
        m.params_mut().set(id, z).unwrap();
    }
}

fn model(d: usize, h: usize, t0: usize, seed: u64) -> LteeModel {
    LteeModel::new(ModelConfig { hidden: h, seed, ..ModelConfig::new(d, t0) }).unwrap()
}

// Straight-line reference implementation, row-major `[in, out]` weights.
fn lin(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let out = b.len();
    (0..out).map(|j| b[j] + x.iter().enumerate().map(|(i, xi)| xi * w[i * out + j]).sum::<f64>()).collect()
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn ref_gru(m: &LteeModel, tag: &str, h: &[f64], y: f64) -> Vec<f64> {
    let d = h.len();
    let mut hx = h.to_vec();
    hx.push(y);
    let g = lin(&hx, &get(m, &format!("{tag}.gru.gates_w")), &get(m, &format!("{tag}.gru.gates_b")));
    let z: Vec<f64> = g[..d].iter().map(|&v| sig(v)).collect();
    let r: Vec<f64> = g[d..].iter().map(|&v| sig(v)).collect();
    let mut rhx: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    rhx.push(y);
    let c: Vec<f64> = lin(&rhx, &get(m, &format!("{tag}.gru.cand_w")), &get(m, &format!("{tag}.gru.cand_b")))
        .into_iter()
        .map(f64::tanh)
        .collect();
    (0..d).map(|k| (1.0 - z[k]) * h[k] + z[k] * c[k]).collect()
}

fn ref_attention(m: &LteeModel, reps: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let (a, b, u) = (get(m, "attention.a"), get(m, "attention.b"), get(m, "attention.u"));
    let scores: Vec<f64> = reps
        .iter()
        .map(|s| lin(s, &a, &b).iter().zip(&u).map(|(k, uu)| k.tanh() * uu).sum())
        .collect();
    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    let alphas: Vec<f64> = e.iter().map(|v| v / z).collect();
    let d = reps[0].len();
    let agg = (0..d).map(|k| reps.iter().zip(&alphas).map(|(s, a)| a * s[k]).sum()).collect();
    (agg, alphas)
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn encoder_zero_weights_give_zero_code() {
    let mut m = model(3, 4, 2, 1);
    zero_all(&mut m);
    assert_eq!(m.encode_context(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0; 4]);
}

#[test]
fn encoder_zero_input_gives_tanh_of_bias() {
    let m = model(3, 4, 2, 2);
    let b = get(&m, "encoder.b");
    let code = m.encode_context(&[0.0; 3]).unwrap();
    close(&code, &b.iter().map(|v| v.tanh()).collect::<Vec<_>>(), 0.0);
}

#[test]
fn encoder_matches_direct_evaluation() {
    let m = model(5, 3, 2, 3);
    let x = [0.3, -1.2, 2.0, 0.0, 0.7];
    let expect: Vec<f64> = lin(&x, &get(&m, "encoder.w"), &get(&m, "encoder.b")).into_iter().map(f64::tanh).collect();
    close(&m.encode_context(&x).unwrap(), &expect, 1e-15);
    assert!(m.encode_context(&[1.0]).is_err());
}

#[test]
fn gru_zero_parameters_fix_zero() {
    let mut m = model(2, 3, 2, 4);
    zero_all(&mut m);
    assert_eq!(m.gru_step(&[0.0; 3], 0.0, Arm::Treated).unwrap(), vec![0.0; 3]);
}

#[test]
fn gru_saturated_update_gate_keeps_state() {
    let mut m = model(2, 3, 2, 5);
    let mut b = get(&m, "arm0.gru.gates_b");
    b[..3].iter_mut().for_each(|v| *v = -50.0);
    set(&mut m, "arm0.gru.gates_b", &b);
    // keep the pre-activation dominated by the bias
    let w = get(&m, "arm0.gru.gates_w").iter().map(|v| v * 0.1).collect::<Vec<_>>();
    set(&mut m, "arm0.gru.gates_w", &w);
    let h = [0.4, -0.3, 0.9];
    close(&m.gru_step(&h, 1.5, Arm::Control).unwrap(), &h, 1e-15);
}

#[test]
fn scalar_gru_matches_hand_evaluation() {
    let mut m = model(1, 1, 2, 6);
    // rows: [h, y]; gate columns: [z, r]
    set(&mut m, "arm1.gru.gates_w", &[0.5, -0.25, 1.5, 0.75]);
    set(&mut m, "arm1.gru.gates_b", &[0.1, -0.2]);
    set(&mut m, "arm1.gru.cand_w", &[-0.8, 0.6]);
    set(&mut m, "arm1.gru.cand_b", &[0.05]);
    let (h, y) = (0.3_f64, -0.7_f64);
    let z = 1.0 / (1.0 + (-(0.5 * h + 1.5 * y + 0.1)).exp());
    let r = 1.0 / (1.0 + (-(-0.25 * h + 0.75 * y - 0.2)).exp());
    let c = (-0.8 * r * h + 0.6 * y + 0.05).tanh();
    let expect = (1.0 - z) * h + z * c;
    let got = m.gru_step(&[h], y, Arm::Treated).unwrap()[0];
    assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
}

#[test]
fn attention_singleton_and_uniform_cases() {
    let m = model(2, 3, 3, 7);
    let s = vec![0.2, -0.5, 0.9];
    let (agg, a) = m.attention_aggregate(std::slice::from_ref(&s)).unwrap();
    assert_eq!(a, vec![1.0]);
    close(&agg, &s, 1e-15);

    let (agg, a) = m.attention_aggregate(&[s.clone(), s.clone(), s.clone()]).unwrap();
    close(&a, &[1.0 / 3.0; 3], 1e-15);
    close(&agg, &s, 1e-15);
    assert!(m.attention_aggregate(&[]).is_err());
}

#[test]
fn attention_matches_reference() {
    let m = model(2, 4, 3, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let reps: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let (agg, a) = m.attention_aggregate(&reps).unwrap();
    let (ragg, ra) = ref_attention(&m, &reps);
    close(&a, &ra, 1e-12);
    close(&agg, &ragg, 1e-12);
}

#[test]
fn zero_network_path() {
    let mut m = model(3, 2, 4, 9);
    zero_all(&mut m);
    let p = m.forward_arm(&[1.0, 2.0, 3.0], Arm::Treated, None).unwrap();
    assert!(p.reps.iter().flatten().all(|&v| v == 0.0));
    close(&p.alphas, &[0.25; 4], 1e-15);
    assert!(p.short_preds.iter().all(|&v| v == 0.0));
    assert_eq!(p.primary_pred, 0.0);
    assert_eq!(m.predict_ite(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
}

#[test]
fn teacher_forcing_with_own_predictions_matches_free_run() {
    let m = model(3, 4, 5, 10);
    let x = [0.5, -1.0, 0.25];
    let free = m.forward_arm(&x, Arm::Control, None).unwrap();
    let forced = m.forward_arm(&x, Arm::Control, Some(&free.short_preds)).unwrap();
    assert_eq!(free, forced);
}

#[test]
fn reference_trace_two_dims_two_steps() {
    let mut m = model(2, 2, 2, 11);
    set(&mut m, "encoder.w", &[0.3, -0.2, 0.1, 0.4]);
    set(&mut m, "encoder.b", &[0.05, -0.1]);
    set(&mut m, "attention.a", &[0.7, -0.3, 0.2, 0.5]);
    set(&mut m, "attention.b", &[0.0, 0.1]);
    set(&mut m, "attention.u", &[1.2, -0.8]);
    set(&mut m, "arm1.gru.gates_w", &[0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7, 0.8, -0.9, 0.15, 0.25, -0.35]);
    set(&mut m, "arm1.gru.gates_b", &[0.01, -0.02, 0.03, -0.04]);
    set(&mut m, "arm1.gru.cand_w", &[0.6, -0.1, 0.2, 0.3, -0.5, 0.45]);
    set(&mut m, "arm1.gru.cand_b", &[-0.05, 0.07]);
    set(&mut m, "arm1.short0.w", &[0.9, -0.4, 0.3]);
    set(&mut m, "arm1.short0.b", &[0.2]);
    set(&mut m, "arm1.primary.w", &[0.5, -0.6, 0.7, 0.8, -0.25]);
    set(&mut m, "arm1.primary.b", &[0.1]);

    let x = [1.5, -0.5];
    let teacher = [0.8, 1.1];

    // step-by-step trace
    let h0: Vec<f64> = lin(&x, &[0.3, -0.2, 0.1, 0.4], &[0.05, -0.1]).into_iter().map(f64::tanh).collect();
    let head = |s: &[f64]| 0.9 * s[0] - 0.4 * s[1] + 0.3 * 1.0 + 0.2;
    let s1 = ref_gru(&m, "arm1", &h0, 0.0);
    let y1 = head(&s1);
    let s2 = ref_gru(&m, "arm1", &s1, teacher[0]);
    let y2 = head(&s2);
    let (agg, alphas) = ref_attention(&m, &[s1.clone(), s2.clone()]);
    let yt = 0.5 * h0[0] - 0.6 * h0[1] + 0.7 * agg[0] + 0.8 * agg[1] - 0.25 + 0.1;

    let p = m.forward_arm(&x, Arm::Treated, Some(&teacher)).unwrap();
    close(&p.reps[0], &s1, 1e-12);
    close(&p.reps[1], &s2, 1e-12);
    close(&p.alphas, &alphas, 1e-12);
    close(&p.agg, &agg, 1e-12);
    close(&p.short_preds, &[y1, y2], 1e-12);
    assert!((p.primary_pred - yt).abs() < 1e-12);

    // free run feeds y1 instead of the teacher value
    let s2f = ref_gru(&m, "arm1", &s1, y1);
    let free = m.forward_arm(&x, Arm::Treated, None).unwrap();
    close(&free.reps[1], &s2f, 1e-12);
}

#[test]
fn teacher_length_is_checked() {
    let m = model(2, 2, 3, 12);
    assert!(m.forward_arm(&[0.0, 0.0], Arm::Control, Some(&[1.0, 2.0])).is_err());
}

#[test]
fn ite_is_difference_of_arm_predictions() {
    let m = model(3, 4, 3, 13);
    let x = [0.2, 0.4, -0.6];
    let y1 = m.forward_arm(&x, Arm::Treated, None).unwrap().primary_pred;
    let y0 = m.forward_arm(&x, Arm::Control, None).unwrap().primary_pred;
    assert_eq!(m.predict_ite(&x).unwrap(), y1 - y0);
}

#[test]
fn single_head_shares_representations() {
    let cfg = ModelConfig { hidden: 3, single_head: true, seed: 14, ..ModelConfig::new(2, 4) };
    let m = LteeModel::new(cfg).unwrap();
    let teacher = [0.1, 0.2, 0.3, 0.4];
    let a = m.forward_arm(&[1.0, -1.0], Arm::Treated, Some(&teacher)).unwrap();
    let b = m.forward_arm(&[1.0, -1.0], Arm::Control, Some(&teacher)).unwrap();
    assert_eq!(a.reps, b.reps);
    assert_eq!(m.arm_params(Arm::Treated), m.arm_params(Arm::Control));
}

#[test]
fn single_head_ite_comes_from_indicator_weights() {
    let cfg = ModelConfig { hidden: 3, single_head: true, seed: 15, ..ModelConfig::new(2, 3) };
    let mut m = LteeModel::new(cfg).unwrap();
    // silence the indicator in the short head so both arms share the free run
    let mut w = get(&m, "shared.short0.w");
    *w.last_mut().unwrap() = 0.0;
    set(&mut m, "shared.short0.w", &w);
    let pw = get(&m, "shared.primary.w");
    let ite = m.predict_ite(&[0.3, 0.9]).unwrap();
    assert!((ite - pw.last().unwrap()).abs() < 1e-14, "{ite} vs {:?}", pw.last());
}

#[test]
fn arm_parameter_sets_are_disjoint() {
    let m = model(3, 4, 3, 16);
    let a0 = m.arm_params(Arm::Control);
    let a1 = m.arm_params(Arm::Treated);
    assert!(a0.iter().all(|id| !a1.contains(id)));
    assert_eq!(m.reachable_params(&Arm::BOTH).len(), m.params().len());
}

#[test]
fn untied_heads_have_one_head_per_step() {
    let cfg = ModelConfig { hidden: 2, tied_short_heads: false, seed: 17, ..ModelConfig::new(2, 3) };
    let m = LteeModel::new(cfg).unwrap();
    assert!(m.params().find("arm0.short2.w").is_some());
    assert!(m.params().find("arm0.short3.w").is_none());
    let p = m.forward_arm(&[0.1, 0.2], Arm::Control, None).unwrap();
    assert_eq!(p.short_preds.len(), 3);
}

#[test]
fn treated_only_batch_leaves_control_head_untouched() {
    let m = model(3, 4, 3, 18);
    let mut tape = Tape::new();
    let p = m.params().bind(&mut tape);
    let x = tape.constant(Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6]).unwrap());
    let y = tape.constant(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 0.5, 0.5, 0.5]).unwrap());
    let path = m.forward_batch(&mut tape, &p, x, Arm::Treated, Some(y)).unwrap();
    let s = tape.sum(path.short);
    let q = tape.sum(path.primary);
    let loss = tape.add(s, q).unwrap();
    let grads = tape.backward(loss).unwrap();
    let g = p.gradients(&grads);
    for id in m.arm_params(Arm::Control) {
        assert!(g[id.index()].is_none(), "{} got a gradient", m.params().name(id));
    }
    for id in m.arm_params(Arm::Treated) {
        assert!(g[id.index()].is_some(), "{} has no gradient", m.params().name(id));
    }
}

#[test]
fn permuting_units_keeps_paths() {
    let m = model(3, 4, 3, 19);
    let mut rng = ChaCha8Rng::seed_from_u64(190);
    let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let x = Tensor::from_rows(&rows).unwrap();
    let perm = [3, 0, 4, 1, 2];
    let xp = x.select_rows(&perm);
    let a = m.forward_paths(&x, Arm::Treated, None).unwrap();
    let b = m.forward_paths(&xp, Arm::Treated, None).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(b[k], a[i]);
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let cfg = ModelConfig { hidden: 3, tied_short_heads: false, seed: 20, ..ModelConfig::new(4, 2) };
    let mut m = LteeModel::new(cfg).unwrap();
    m.normalizer = Normalizer {
        x_mean: vec![0.1, 1.0 / 3.0, -2.5, 1e-300],
        x_scale: vec![1.0, 2.0, 0.7, 3.3],
        y_mean: std::f64::consts::PI,
        y_scale: 1e10,
    };
    let text = m.to_checkpoint();
    let back = LteeModel::from_checkpoint(&text).unwrap();
    assert_eq!(back, m);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    m.save(&path).unwrap();
    assert_eq!(LteeModel::load(&path).unwrap(), m);
    assert!(LteeModel::from_checkpoint("nope").is_err());
    assert!(LteeModel::from_checkpoint(&text[..text.len() / 2]).is_err());
}

#[test]
fn normalized_predictions_are_restored() {
    let mut m = model(2, 3, 2, 21);
    let x = [0.5, 1.5];
    let base = m.forward_arm(&x, Arm::Treated, None).unwrap();
    let ite = m.predict_ite(&x).unwrap();
    m.normalizer = Normalizer { x_mean: vec![0.0, 0.0], x_scale: vec![1.0, 1.0], y_mean: 10.0, y_scale: 2.0 };
    let scaled = m.forward_arm(&x, Arm::Treated, None).unwrap();
    assert!((scaled.primary_pred - (2.0 * base.primary_pred + 10.0)).abs() < 1e-12);
    assert!((m.predict_ite(&x).unwrap() - 2.0 * ite).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn attention_weights_sum_to_one(seed in 0u64..1000, t0 in 1usize..8, scale in 0.1f64..20.0) {
        let m = model(2, 3, t0, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reps: Vec<Vec<f64>> = (0..t0).map(|_| (0..3).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).collect();
        let (agg, a) = m.attention_aggregate(&reps).unwrap();
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(a.iter().all(|&v| (0.0..=1.0).contains(&v)));
        for k in 0..3 {
            let direct: f64 = reps.iter().zip(&a).map(|(s, w)| w * s[k]).sum();
            prop_assert!((agg[k] - direct).abs() < 1e-9);
        }
    }
}
