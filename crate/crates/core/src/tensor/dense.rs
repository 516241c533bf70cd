//! Fully-connected layer, ReLU, and the flatten/reshape reindexing ops.

use super::{Tensor, TensorError};

fn feature_len(input: &Tensor, context: &'static str) -> Result<usize, TensorError> {
    if input.height() != 1 || input.width() != 1 {
        return Err(TensorError::ShapeMismatch {
            context,
            expected: "(batch, 1, 1, features)".into(),
            actual: format!("{:?}", input.shape()),
        });
    }
    Ok(input.channels())
}

/// Affine map W.x + b per batch row; `weights` is row-major (out, in).
pub fn dense_forward(
    input: &Tensor,
    weights: &[f64],
    bias: &[f64],
    out_features: usize,
) -> Result<Tensor, TensorError> {
    let in_features = feature_len(input, "dense input")?;
    if weights.len() != out_features * in_features || bias.len() != out_features {
        return Err(TensorError::ShapeMismatch {
            context: "dense weights",
            expected: format!("{out_features}x{in_features} weights, {out_features} bias"),
            actual: format!("{} weights, {} bias", weights.len(), bias.len()),
        });
    }
    let batch = input.batch();
    let mut out = Tensor::zeros(batch, 1, 1, out_features);
    for b in 0..batch {
        let x = &input.data()[b * in_features..(b + 1) * in_features];
        let y = &mut out.data_mut()[b * out_features..(b + 1) * out_features];
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &weights[o * in_features..(o + 1) * in_features];
            *yo = bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
    Ok(out)
}

pub fn dense_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weights: &[f64],
) -> Result<(Tensor, Vec<f64>, Vec<f64>), TensorError> {
    let in_features = feature_len(input, "dense input")?;
    let out_features = feature_len(grad_out, "dense grad_out")?;
    if weights.len() != out_features * in_features || grad_out.batch() != input.batch() {
        return Err(TensorError::ShapeMismatch {
            context: "dense backward shapes",
            expected: format!(
                "{}x{} weights, batch {}",
                out_features,
                in_features,
                input.batch()
            ),
            actual: format!("{} weights, batch {}", weights.len(), grad_out.batch()),
        });
    }
    let batch = input.batch();
    let mut grad_input = Tensor::zeros(batch, 1, 1, in_features);
    let mut grad_weights = vec![0.0; weights.len()];
    let mut grad_bias = vec![0.0; out_features];
    for b in 0..batch {
        let x = &input.data()[b * in_features..(b + 1) * in_features];
        let g = &grad_out.data()[b * out_features..(b + 1) * out_features];
        let gx = &mut grad_input.data_mut()[b * in_features..(b + 1) * in_features];
        for (o, &go) in g.iter().enumerate() {
            grad_bias[o] += go;
            if go == 0.0 {
                continue;
            }
            let w_row = &weights[o * in_features..(o + 1) * in_features];
            let gw_row = &mut grad_weights[o * in_features..(o + 1) * in_features];
            for i in 0..in_features {
                gw_row[i] += go * x[i];
                gx[i] += go * w_row[i];
            }
        }
    }
    Ok((grad_input, grad_weights, grad_bias))
}

/// Elementwise max(0, x).
pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Masks the gradient where the cached pre-activation was <= 0.
pub fn relu_backward(grad_out: &Tensor, preactivation: &Tensor) -> Result<Tensor, TensorError> {
    if grad_out.shape() != preactivation.shape() {
        return Err(TensorError::ShapeMismatch {
            context: "relu backward",
            expected: format!("{:?}", preactivation.shape()),
            actual: format!("{:?}", grad_out.shape()),
        });
    }
    let mut out = grad_out.clone();
    for (g, &z) in out.data_mut().iter_mut().zip(preactivation.data()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(out)
}

/// Row-major (h, w, c) -> features reindexing; pure metadata change.
pub fn flatten(input: &Tensor) -> Tensor {
    let [b, h, w, c] = input.shape();
    Tensor::from_vec([b, 1, 1, h * w * c], input.data().to_vec())
        .expect("flatten preserves element count")
}

/// Inverse of `flatten` for any target (h, w, c) with a matching element count.
pub fn reshape(input: &Tensor, target: (usize, usize, usize)) -> Result<Tensor, TensorError> {
    let [b, h, w, c] = input.shape();
    let (th, tw, tc) = target;
    if h * w * c != th * tw * tc {
        return Err(TensorError::ShapeMismatch {
            context: "reshape element count",
            expected: format!("{} per batch", th * tw * tc),
            actual: format!("{} per batch", h * w * c),
        });
    }
    Tensor::from_vec([b, th, tw, tc], input.data().to_vec())
}
