//! Reverse-mode gradients on the tape, checked against central differences.
//!
//! `cargo run --example autodiff_gradcheck`

use ltee::ndcore::{gradcheck, Tape, Tensor};

fn main() -> ltee::Result<()> {
    // loss = sum(tanh(x W + b)^2)
    let x = Tensor::matrix(3, 2, vec![0.5, -1.0, 1.5, 0.2, -0.3, 0.8])?;
    let w = Tensor::matrix(2, 4, vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8])?;
    let b = Tensor::row(&[0.01, 0.02, -0.03, 0.04]);

    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let wv = tape.param(w.clone());
    let bv = tape.param(b.clone());
    let z = tape.matmul(xv, wv)?;
    let bias = tape.repeat_rows(bv, 3)?;
    let z = tape.add(z, bias)?;
    let h = tape.tanh(z);
    let sq = tape.square(h);
    let loss = tape.sum(sq);
    let grads = tape.backward(loss)?;
    println!("loss = {:.6}", tape.value(loss).item()?);
    println!("dloss/dW = {:?}", grads.get(wv).map(|g| g.data().to_vec()));

    let report = gradcheck::check(&[w, b], 1e-6, 1e-8, |tape, vars| {
        let xv = tape.constant(x.clone());
        let z = tape.matmul(xv, vars[0])?;
        let bias = tape.repeat_rows(vars[1], 3)?;
        let z = tape.add(z, bias)?;
        let h = tape.tanh(z);
        let sq = tape.square(h);
        Ok(tape.sum(sq))
    })?;
    println!("{} entries, max relative error {:.2e}", report.entries, report.max_rel_err);
    Ok(())
}
