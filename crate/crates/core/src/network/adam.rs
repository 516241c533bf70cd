//! Adam with bias-corrected first/second moments, one moment pair per
//! parameter blob, stepping all layers in lockstep.

use super::{LayerGrads, Model, NetworkError};

/// Moment estimates for one layer's weight and bias blobs.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMoments {
    pub m_w: Vec<f64>,
    pub v_w: Vec<f64>,
    pub m_b: Vec<f64>,
    pub v_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub moments: Vec<LayerMoments>,
}

impl AdamState {
    /// Zeroed moments shaped after `model`, with beta1 0.9, beta2 0.999,
    /// epsilon 1e-7.
    pub fn new(model: &Model, lr: f64) -> Self {
        let moments = model
            .layers
            .iter()
            .map(|l| LayerMoments {
                m_w: vec![0.0; l.weights.len()],
                v_w: vec![0.0; l.weights.len()],
                m_b: vec![0.0; l.bias.len()],
                v_b: vec![0.0; l.bias.len()],
            })
            .collect();
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            moments,
        }
    }
}

fn update_blob(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}

/// One optimizer step: advances the step counter, folds `grads` into the
/// moments, and updates every parameter in `model` in place.
pub fn adam_step(
    state: &mut AdamState,
    model: &mut Model,
    grads: &[LayerGrads],
) -> Result<(), NetworkError> {
    if grads.len() != model.layers.len() || state.moments.len() != model.layers.len() {
        return Err(NetworkError::GradientMismatch {
            grads: grads.len(),
            layers: model.layers.len(),
        });
    }
    for (i, layer) in model.layers.iter().enumerate() {
        if grads[i].weights.len() != layer.weights.len() || grads[i].bias.len() != layer.bias.len()
        {
            return Err(NetworkError::GradientMismatch {
                grads: grads[i].weights.len(),
                layers: layer.weights.len(),
            });
        }
    }
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    for (i, layer) in model.layers.iter_mut().enumerate() {
        let mo = &mut state.moments[i];
        update_blob(
            layer.weights.data_mut(),
            &grads[i].weights,
            &mut mo.m_w,
            &mut mo.v_w,
            state.lr,
            state.beta1,
            state.beta2,
            state.epsilon,
            bc1,
            bc2,
        );
        update_blob(
            &mut layer.bias,
            &grads[i].bias,
            &mut mo.m_b,
            &mut mo.v_b,
            state.lr,
            state.beta1,
            state.beta2,
            state.epsilon,
            bc1,
            bc2,
        );
    }
    Ok(())
}
