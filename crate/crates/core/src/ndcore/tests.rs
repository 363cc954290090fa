use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::check;
use super::*;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

// Taylor series for e^x, independent of libm.
fn exp_series(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= x / k as f64;
        sum += term;
    }
    sum
}

#[test]
fn matmul_identity_on_tape() {
    let mut tape = Tape::new();
    let m = Tensor::matrix(3, 3, vec![1.5, -2.0, 0.25, 3.0, 0.0, -1.0, 7.0, 8.0, 9.0]).unwrap();
    let i = tape.constant(Tensor::identity(3));
    let mv = tape.constant(m.clone());
    let out = tape.matmul(i, mv).unwrap();
    assert_eq!(tape.value(out), &m);
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::row(&[0.0, 0.0, 0.0]));
    let s = tape.softmax(z);
    for &v in tape.value(s).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn tanh_matches_series_reference() {
    let e2x = exp_series(1.0);
    let reference = (e2x - 1.0) / (e2x + 1.0);
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::scalar(0.5));
    let y = tape.tanh(x);
    let got = tape.value(y).item().unwrap();
    assert!((got - reference).abs() < 1e-15);
    assert!((got - 0.46211715726).abs() < 1e-11);
}

#[test]
fn square_gradient() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::scalar(3.0));
    let y = tape.mul(x, x).unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap().item().unwrap(), 6.0);
}

#[test]
fn linear_map_gradient_is_column_sums() {
    let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -4.0, 5.0, 0.5]).unwrap();
    let mut tape = Tape::new();
    let av = tape.constant(a.clone());
    let x = tape.param(Tensor::column(&[0.3, -0.7, 1.1]));
    let ax = tape.matmul(av, x).unwrap();
    let loss = tape.sum(ax);
    let g = tape.backward(loss).unwrap();
    let gx = g.get(x).unwrap();
    for j in 0..3 {
        let colsum = a.get(0, j) + a.get(1, j);
        assert_eq!(gx.data()[j], colsum);
    }
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::row(&[1.0, 2.0]));
    let y = tape.tanh(x);
    assert!(tape.backward(y).is_err());
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[3, 2]));
    let msg = tape.add(a, b).unwrap_err().to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
}

#[test]
fn scalar_broadcast_gradient_sums() {
    let mut tape = Tape::new();
    let s = tape.param(Tensor::scalar(2.0));
    let m = tape.constant(Tensor::row(&[1.0, 2.0, 3.0]));
    let p = tape.mul(s, m).unwrap();
    let loss = tape.sum(p);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(s).unwrap().item().unwrap(), 6.0);
}

#[test]
fn unreached_leaf_has_no_gradient() {
    let mut tape = Tape::new();
    let a = tape.param(Tensor::scalar(1.0));
    let b = tape.param(Tensor::scalar(1.0));
    let loss = tape.square(a);
    let g = tape.backward(loss).unwrap();
    assert!(g.get(a).is_some());
    assert!(g.get(b).is_none());
}

#[test]
fn three_layer_tanh_network_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs = vec![
        rand_tensor(&mut rng, &[4, 3]),
        rand_tensor(&mut rng, &[3, 5]),
        rand_tensor(&mut rng, &[1, 5]),
        rand_tensor(&mut rng, &[5, 4]),
        rand_tensor(&mut rng, &[4, 1]),
    ];
    let res = check(&inputs, 1e-5, 1e-6, |t, v| {
        let h1 = t.matmul(v[0], v[1])?;
        let b = t.repeat_rows(v[2], 4)?;
        let h1 = t.add(h1, b)?;
        let h1 = t.tanh(h1);
        let h2 = t.matmul(h1, v[3])?;
        let h2 = t.tanh(h2);
        let h3 = t.matmul(h2, v[4])?;
        let h3 = t.tanh(h3);
        Ok(t.sum(h3))
    })
    .unwrap();
    assert!(res.max_rel_err < 1e-4, "{res:?}");
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let a = tape.param(rand_tensor(&mut rng, &[5, 4]));
        let b = tape.param(rand_tensor(&mut rng, &[4, 5]));
        let c = tape.matmul(a, b).unwrap();
        let s = tape.softmax(c);
        let l = tape.logsumexp(s).unwrap();
        let loss = tape.sum(l);
        let g = tape.backward(loss).unwrap();
        (tape.value(loss).clone(), g.get(a).unwrap().clone())
    };
    assert_eq!(run(), run());
}

// Composite built from every registered primitive; inputs are drawn in [-2, 2].
fn composite(t: &mut Tape, v: &[Var]) -> crate::error::Result<Var> {
    let (p, q, s) = (v[0], v[1], v[2]);
    let pq = t.matmul(p, q)?; // [3,3]
    let th = t.tanh(pq);
    let sg = t.sigmoid(pq);
    let mx = t.maximum(th, sg)?;
    let sm = t.softmax(mx);
    let lse = t.logsumexp(pq)?; // [3,1]
    let rep = t.repeat_cols(lse, 3)?;
    let mixed = t.mul(sm, rep)?;
    let sl = t.slice_cols(mixed, 1, 3)?; // [3,2]
    let qt = t.transpose(q)?; // [3,2]
    let cat = t.concat(&[sl, qt])?; // [3,4]
    let sel = t.select_rows(cat, &[2, 0, 2])?;
    let sq = t.square(sel);
    let damp = t.scale(sq, -0.3);
    let ex = t.exp(damp);
    let shifted = t.shift(ex, 1.0);
    let lg = t.log(shifted);
    let rt = t.sqrt(shifted);
    let d = t.div(lg, rt)?;
    let scaled = t.mul(s, d)?;
    let rows = t.row_sums(scaled)?;
    let rr = t.transpose(rows)?;
    let rrep = t.repeat_rows(rr, 2)?;
    let dist = t.pairwise_dist(p, qt)?;
    let n = t.l2_norm(dist);
    let m = t.mean(rrep);
    let neg = t.neg(m);
    let a = t.sub(n, neg)?;
    let b = t.add(a, s)?;
    Ok(t.sum(b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn composite_gradients_match_finite_differences(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![
            rand_tensor(&mut rng, &[3, 2]),
            rand_tensor(&mut rng, &[2, 3]),
            rand_tensor(&mut rng, &[]),
        ];
        let res = check(&inputs, 1e-5, 1e-6, composite).unwrap();
        prop_assert!(res.max_rel_err < 1e-4, "{:?}", res);
    }
}
