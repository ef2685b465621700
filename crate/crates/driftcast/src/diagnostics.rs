//! Finite-difference validation suites behind the `gradcheck` command.

use crate::error::Result;
use crate::model::{AdaptiveSTNetwork, AdjacencyMatrix, ModelConfig};
use crate::numerics::{
    finite_difference_gradient, max_relative_error, ParamId, ReduceOp, Tape, Tensor,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub parameters_checked: usize,
    pub coordinates_checked: usize,
}

/// The small configuration used for exhaustive per-parameter checks.
pub fn gradcheck_config() -> ModelConfig {
    ModelConfig {
        n_locations: 3,
        look_back: 4,
        horizon: 2,
        n_features: 1,
        embed_dim: 4,
        st_output_dim: 6,
        adapter_dim: 2,
        st_blocks: 1,
        diffusion_steps: 2,
        kernel_size: 2,
        adapter_shared: false,
    }
}

fn rand_tensor(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(lo..hi)).collect())
        .expect("random tensor")
}

/// Check every parameter of the full network against central differences of
/// a squared-error loss. Returns the largest relative error seen.
pub fn network_gradient_check(seed: u64) -> Result<GradCheckReport> {
    let cfg = gradcheck_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = AdaptiveSTNetwork::new(cfg.clone(), seed)?;
    // randomize the adapter up-projections so the adapter gradient path is live
    let adapter_ids = net.params_adapter();
    for id in adapter_ids {
        let shape = net.store().get(id).value.shape().to_vec();
        net.store_mut().get_mut(id).value = rand_tensor(shape, -0.5, 0.5, &mut rng);
    }
    net.store_mut().set_all_trainable();

    let mut ring = Tensor::zeros(vec![3, 3]);
    for i in 0..3 {
        let j = (i + 1) % 3;
        ring.data_mut()[i * 3 + j] = 1.0;
        ring.data_mut()[j * 3 + i] = 1.0;
    }
    let adj = AdjacencyMatrix::new(ring)?;
    let x = rand_tensor(vec![3, 4, 1], -1.5, 1.5, &mut rng);
    let target = rand_tensor(vec![3, 2, 1], -1.0, 1.0, &mut rng);

    let loss_of = |net: &AdaptiveSTNetwork| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let input = tape.constant(x.clone());
        let pred = net.forward(&mut tape, &bound, input, &adj, true)?;
        let tv = tape.constant(target.clone());
        let diff = tape.sub(pred, tv)?;
        let sq = tape.mul(diff, diff)?;
        let loss = tape.mean_all(sq);
        tape.value(loss).item()
    };

    // autodiff gradients in one pass
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let input = tape.constant(x.clone());
    let pred = net.forward(&mut tape, &bound, input, &adj, true)?;
    let tv = tape.constant(target.clone());
    let diff = tape.sub(pred, tv)?;
    let sq = tape.mul(diff, diff)?;
    let loss = tape.mean_all(sq);
    tape.backward(loss)?;
    net.store_mut().zero_grad();
    let mut grads = net.store().clone();
    tape.accumulate_param_grads(&mut grads)?;

    let ids: Vec<ParamId> = net.store().ids().collect();
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for id in ids.iter().copied() {
        let base = net.store().get(id).value.clone();
        let oracle = finite_difference_gradient(
            |probe| {
                let mut probed = net.clone();
                probed.store_mut().get_mut(id).value = probe.clone();
                loss_of(&probed)
            },
            &base,
            1e-5,
        )?;
        coords += base.len();
        worst = worst.max(max_relative_error(&grads.get(id).gradient, &oracle, 1e-5));
    }
    Ok(GradCheckReport {
        max_relative_error: worst,
        parameters_checked: ids.len(),
        coordinates_checked: coords,
    })
}

/// Check each tensor op's backward rule on random inputs through a composite
/// graph that exercises every operation once.
pub fn op_gradient_check(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // entries away from zero keep relu/abs kinks outside the probe window
    let offset = |shape: Vec<usize>, rng: &mut ChaCha8Rng| -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(
            shape,
            (0..len)
                .map(|_| {
                    let v: f64 = rng.random_range(0.05..1.5);
                    if rng.random_bool(0.5) {
                        v
                    } else {
                        -v
                    }
                })
                .collect(),
        )
        .expect("random tensor")
    };
    let a0 = offset(vec![3, 4], &mut rng);
    let b0 = offset(vec![3, 4], &mut rng);
    let w0 = rand_tensor(vec![4, 3], -1.0, 1.0, &mut rng);
    let bias0 = rand_tensor(vec![3], -1.0, 1.0, &mut rng);
    let cx0 = rand_tensor(vec![2, 7, 2], -1.0, 1.0, &mut rng);
    let cw0 = rand_tensor(vec![2, 2, 3], -1.0, 1.0, &mut rng);

    let eval = |inputs: &[Tensor]| -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let a = tape.input(inputs[0].clone());
        let b = tape.input(inputs[1].clone());
        let w = tape.input(inputs[2].clone());
        let bias = tape.input(inputs[3].clone());
        let cx = tape.input(inputs[4].clone());
        let cw = tape.input(inputs[5].clone());

        let sum = tape.add(a, b)?;
        let diff = tape.sub(a, b)?;
        let prod = tape.mul(sum, diff)?;
        let act = tape.relu(prod);
        let sig = tape.sigmoid(act);
        let th = tape.tanh(sig);
        let ab = tape.abs(th);
        let mm = tape.matmul(ab, w)?;
        let biased = tape.add_bias(mm, bias)?;
        let main_term = tape.mean_all(biased);

        let conv = tape.causal_dilated_conv1d(cx, cw, 3)?;
        let reduced = tape.reduce(conv, 1, ReduceOp::Mean)?;
        let flat = tape.reshape(reduced, vec![6])?;
        let cut = tape.narrow(flat, 0, 1, 4)?;
        let conv_term = tape.sum_all(cut);

        let stacked = tape.stack0(&[main_term, conv_term])?;
        let total = tape.sum_all(stacked);
        let loss = tape.scale(total, 0.5);
        tape.backward(loss)?;
        let value = tape.value(loss).item()?;
        let grads = [a, b, w, bias, cx, cw]
            .iter()
            .map(|&v| {
                tape.grad(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(vec![1]))
            })
            .collect();
        Ok((value, grads))
    };

    let inputs = vec![a0, b0, w0, bias0, cx0, cw0];
    let (_, grads) = eval(&inputs)?;
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for which in 0..inputs.len() {
        let oracle = finite_difference_gradient(
            |probe| {
                let mut probed = inputs.clone();
                probed[which] = probe.clone();
                eval(&probed).map(|(v, _)| v)
            },
            &inputs[which],
            1e-5,
        )?;
        coords += inputs[which].len();
        worst = worst.max(max_relative_error(&grads[which], &oracle, 1e-5));
    }
    Ok(GradCheckReport {
        max_relative_error: worst,
        parameters_checked: inputs.len(),
        coordinates_checked: coords,
    })
}
