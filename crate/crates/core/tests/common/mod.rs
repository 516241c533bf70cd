//! Reference implementations and the finite-difference harness shared by the
//! integration suites. The references are written independently of the
//! library kernels in the plainest possible style so a mismatch points at the
//! optimized path.
#![allow(dead_code)]

use simpcnn::network::{mse_loss, Layer, LayerSpec, Model};
use simpcnn::tensor::{conv_output_size_asym, resolve_padding, ConvParams, Tensor};

/// Central-difference step for all gradient checks.
pub const FD_STEP: f64 = 1e-6;
/// Worst acceptable relative error for a single layer.
pub const LAYER_TOL: f64 = 1e-5;
/// Worst acceptable relative error for a full model end to end.
pub const MODEL_TOL: f64 = 1e-4;

/// xorshift64* — deterministic test values with no crate dependencies.
pub fn next_u64(state: &mut u64) -> u64 {
    let mut x = *state;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    *state = x;
    x.wrapping_mul(0x2545_F491_4F6C_DD1D)
}

/// Uniform in [0, 1).
pub fn uniform(state: &mut u64) -> f64 {
    (next_u64(state) >> 11) as f64 / (1u64 << 53) as f64
}

/// Uniform in [-0.5, 0.5).
pub fn centered(state: &mut u64) -> f64 {
    uniform(state) - 0.5
}

pub fn random_tensor(shape: [usize; 4], state: &mut u64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| centered(state)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Random tensor with entries in [0, 1), like a density image.
pub fn random_image(shape: [usize; 4], state: &mut u64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| uniform(state)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Direct quadruple-loop cross-correlation: no im2col, no GEMM.
pub fn naive_conv(input: &Tensor, weights: &Tensor, bias: &[f64], p: &ConvParams) -> Tensor {
    let [batch, ih, iw, cin] = input.shape();
    let [filters, kh, kw, wcin] = weights.shape();
    assert_eq!(cin, wcin, "weight channel mismatch");
    let (pt, pb, pl, pr) = resolve_padding(p.padding, (ih, iw), p.kernel, p.stride);
    let oh = conv_output_size_asym(ih, kh, p.stride.0, pt, pb).unwrap();
    let ow = conv_output_size_asym(iw, kw, p.stride.1, pl, pr).unwrap();
    let mut out = Tensor::zeros(batch, oh, ow, filters);
    for b in 0..batch {
        for oy in 0..oh {
            for ox in 0..ow {
                for f in 0..filters {
                    let mut acc = bias[f];
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let iy = (oy * p.stride.0 + dy) as isize - pt as isize;
                            let ix = (ox * p.stride.1 + dx) as isize - pl as isize;
                            if iy < 0 || ix < 0 || iy >= ih as isize || ix >= iw as isize {
                                continue;
                            }
                            for c in 0..cin {
                                acc += input.at(b, iy as usize, ix as usize, c)
                                    * weights.at(f, dy, dx, c);
                            }
                        }
                    }
                    out.set(b, oy, ox, f, acc);
                }
            }
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// |analytic - fd| relative to the larger magnitude, floored so near-zero
/// gradients are compared absolutely at 1e-3 * tol.
pub fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-3)
}

pub fn layer_with_random_state(spec: LayerSpec, state: &mut u64) -> Layer {
    let weights = match spec.weight_shape() {
        Some(shape) => random_tensor(shape, state),
        None => Tensor::zeros(0, 0, 0, 0),
    };
    let bias = (0..spec.param_counts().1).map(|_| centered(state)).collect();
    Layer {
        spec,
        weights,
        bias,
    }
}

/// Central-difference check of MSE loss gradients against the analytic
/// backward pass, over every weight, bias, and input entry. Returns the
/// worst relative error seen.
pub fn fd_worst_error(model: &mut Model, input: &Tensor, target: &Tensor) -> f64 {
    let (out, cache) = model.forward_cached(input).unwrap();
    let (_, loss_grad) = mse_loss(&out, target).unwrap();
    let (layer_grads, input_grad) = model.backward(&cache, &loss_grad).unwrap();
    let loss_of = |m: &Model, x: &Tensor| mse_loss(&m.forward(x).unwrap(), target).unwrap().0;

    let mut worst: f64 = 0.0;
    for li in 0..model.layers.len() {
        for wi in 0..model.layers[li].weights.data().len() {
            let orig = model.layers[li].weights.data()[wi];
            model.layers[li].weights.data_mut()[wi] = orig + FD_STEP;
            let up = loss_of(model, input);
            model.layers[li].weights.data_mut()[wi] = orig - FD_STEP;
            let down = loss_of(model, input);
            model.layers[li].weights.data_mut()[wi] = orig;
            worst = worst.max(rel_err(
                layer_grads[li].weights[wi],
                (up - down) / (2.0 * FD_STEP),
            ));
        }
        for bi in 0..model.layers[li].bias.len() {
            let orig = model.layers[li].bias[bi];
            model.layers[li].bias[bi] = orig + FD_STEP;
            let up = loss_of(model, input);
            model.layers[li].bias[bi] = orig - FD_STEP;
            let down = loss_of(model, input);
            model.layers[li].bias[bi] = orig;
            worst = worst.max(rel_err(
                layer_grads[li].bias[bi],
                (up - down) / (2.0 * FD_STEP),
            ));
        }
    }
    let mut x = input.clone();
    for i in 0..x.data().len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + FD_STEP;
        let up = loss_of(model, &x);
        x.data_mut()[i] = orig - FD_STEP;
        let down = loss_of(model, &x);
        x.data_mut()[i] = orig;
        worst = worst.max(rel_err(input_grad.data()[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

/// Runs the FD harness on a one-layer model with random parameters.
pub fn check_single_layer(spec: LayerSpec, input_shape: [usize; 4], seed: u64) -> f64 {
    let mut state = seed;
    let mut model = Model {
        layers: vec![layer_with_random_state(spec, &mut state)],
        adaptive_n: 0,
    };
    let input = random_tensor(input_shape, &mut state);
    let out_shape = model.output_shapes(input_shape).unwrap();
    let target = random_tensor(*out_shape.last().unwrap(), &mut state);
    fd_worst_error(&mut model, &input, &target)
}

/// Fresh models have all-zero biases, and upstream ReLUs zero out whole
/// activation patches — which parks later preactivations exactly on the ReLU
/// kink, where a finite difference measures the half-slope instead of the
/// subgradient the backward pass uses. Shift every bias into [0.1, 0.3) so
/// the check probes the model at a differentiable point.
pub fn nudge_biases(model: &mut Model, state: &mut u64) {
    for layer in &mut model.layers {
        for b in &mut layer.bias {
            *b = 0.1 + 0.2 * uniform(state);
        }
    }
}
