//! Tensors, the gradient tape, and a finite-difference cross-check.
//!
//! Run with: `cargo run -p driftcast --example autodiff_basics`

use driftcast::numerics::{finite_difference_gradient, max_relative_error, Tape, Tensor};

fn main() -> driftcast::Result<()> {
    // forward: loss = mean(relu(x W) + b)
    let x0 = Tensor::from_vec(vec![2, 3], vec![0.5, -1.2, 2.0, 1.5, 0.3, -0.7])?;
    let w0 = Tensor::from_vec(vec![3, 2], vec![0.1, -0.4, 0.8, 0.2, -0.3, 0.6])?;
    let b0 = Tensor::from_vec(vec![2], vec![0.05, -0.1])?;

    let mut tape = Tape::new();
    let x = tape.input(x0.clone());
    let w = tape.input(w0.clone());
    let b = tape.input(b0.clone());
    let product = tape.matmul(x, w)?;
    let activated = tape.relu(product);
    let biased = tape.add_bias(activated, b)?;
    let loss = tape.mean_all(biased);
    println!("loss = {:.6}", tape.value(loss).item()?);

    // reverse pass: gradients for every input
    tape.backward(loss)?;
    println!("dloss/dw = {:?}", tape.grad(w).unwrap().data());

    // the independent oracle: central finite differences
    let oracle = finite_difference_gradient(
        |probe| {
            let mut t = Tape::new();
            let x = t.input(x0.clone());
            let w = t.input(probe.clone());
            let b = t.input(b0.clone());
            let p = t.matmul(x, w)?;
            let a = t.relu(p);
            let out = t.add_bias(a, b)?;
            let l = t.mean_all(out);
            t.value(l).item()
        },
        &w0,
        1e-5,
    )?;
    let err = max_relative_error(tape.grad(w).unwrap(), &oracle, 1e-5);
    println!("max relative error vs finite differences: {err:.3e}");
    assert!(err < 1e-6);
    Ok(())
}
