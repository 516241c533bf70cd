//! Non-overlapping max pooling with recorded argmax positions.

use super::{PoolParams, Tensor, TensorError};

/// Max over each window plus the flat input index of the first (row-major)
/// maximum, which the backward pass routes gradient through.
pub fn maxpool_forward(
    input: &Tensor,
    p: &PoolParams,
) -> Result<(Tensor, Vec<usize>), TensorError> {
    p.validate()?;
    let [batch, ih, iw, ch] = input.shape();
    let (ph, pw) = p.window;
    if ih % ph != 0 || iw % pw != 0 {
        return Err(TensorError::NonDivisiblePool {
            h: ih,
            w: iw,
            ph,
            pw,
        });
    }
    let (oh, ow) = (ih / ph, iw / pw);
    let mut out = Tensor::zeros(batch, oh, ow, ch);
    let mut argmax = vec![0usize; out.len()];
    let x = input.data();
    for b in 0..batch {
        for oy in 0..oh {
            for ox in 0..ow {
                for c in 0..ch {
                    let mut best_idx = input.idx(b, oy * ph, ox * pw, c);
                    let mut best = x[best_idx];
                    for wy in 0..ph {
                        for wx in 0..pw {
                            let idx = input.idx(b, oy * ph + wy, ox * pw + wx, c);
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = out.idx(b, oy, ox, c);
                    out.data_mut()[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each output gradient to its recorded argmax position.
pub fn maxpool_backward(
    grad_out: &Tensor,
    argmax: &[usize],
    input_shape: [usize; 4],
) -> Result<Tensor, TensorError> {
    if grad_out.len() != argmax.len() {
        return Err(TensorError::ShapeMismatch {
            context: "maxpool argmax length",
            expected: grad_out.len().to_string(),
            actual: argmax.len().to_string(),
        });
    }
    let mut grad_input = Tensor::zeros(input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    let len = grad_input.len();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        if idx >= len {
            return Err(TensorError::ArgmaxOutOfRange { index: idx, len });
        }
        grad_input.data_mut()[idx] += g;
    }
    Ok(grad_input)
}
