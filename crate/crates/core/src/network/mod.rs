//! The encoder-decoder surrogate model: layer specs, parameter storage,
//! forward/backward composition, and the He-uniform seeded initializer.
//!
//! The builder assembles the fixed stack
//! conv(c1,2x2) -> pool2 -> conv(c2,2x2) -> pool2 -> conv(c3,5x5) -> pool5
//! -> flatten -> [dense(n)] -> dense(flat) -> reshape -> tconv(c2,2x2/2)
//! -> tconv(c1,5x5/5) -> tconv(1,2x2/2), every layer ReLU-activated, which
//! maps (b, s, s, 1) back onto (b, s, s, 1) for any side s divisible by 20.

mod adam;
mod checkpoint;
mod train;

pub use adam::{adam_step, AdamState, LayerMoments};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use train::{mse_loss, train, TrainConfig, TrainLog};

use crate::tensor::{
    conv2d_backward, conv2d_forward, conv_output_size_asym, dense_backward, dense_forward,
    flatten, maxpool_backward, maxpool_forward, relu, relu_backward, reshape, resolve_padding,
    tconv2d_backward, tconv2d_forward, tconv_output_size, ConvParams, Padding, PoolParams, Tensor,
    TensorError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("input side {0} is not divisible by 20 (pooling chain 2*2*5)")]
    IndivisibleInputSide(usize),
    #[error("channel widths must all be at least 1, got {0:?}")]
    DegenerateWidths((usize, usize, usize)),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("batch size {batch} invalid for {samples} samples")]
    BadBatchSize { batch: usize, samples: usize },
    #[error("input batch {inputs} does not match target batch {targets}")]
    BatchMismatch { inputs: usize, targets: usize },
    #[error("gradient list length {grads} does not match {layers} layers")]
    GradientMismatch { grads: usize, layers: usize },
    #[error("non-finite loss at epoch {epoch}; layer weight norms: {norms:?}")]
    NonFiniteLoss {
        epoch: usize,
        norms: Vec<(String, f64)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    ReLU,
    None,
}

/// One layer of the sequential model; `params` live in the owning [`Layer`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        params: ConvParams,
        in_channels: usize,
        activation: Activation,
    },
    MaxPool {
        params: PoolParams,
    },
    Flatten,
    Dense {
        units: usize,
        in_features: usize,
        activation: Activation,
    },
    Reshape {
        height: usize,
        width: usize,
        channels: usize,
    },
    TConv {
        params: ConvParams,
        in_channels: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    /// (weight element count, bias element count); (0, 0) for stateless layers.
    pub fn param_counts(&self) -> (usize, usize) {
        match self {
            LayerSpec::Conv {
                params, in_channels, ..
            }
            | LayerSpec::TConv {
                params, in_channels, ..
            } => (
                params.filters * params.kernel.0 * params.kernel.1 * in_channels,
                params.filters,
            ),
            LayerSpec::Dense {
                units, in_features, ..
            } => (units * in_features, *units),
            _ => (0, 0),
        }
    }

    fn fan_in(&self) -> usize {
        match self {
            LayerSpec::Conv {
                params, in_channels, ..
            }
            | LayerSpec::TConv {
                params, in_channels, ..
            } => params.kernel.0 * params.kernel.1 * in_channels,
            LayerSpec::Dense { in_features, .. } => *in_features,
            _ => 0,
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            LayerSpec::Conv { activation, .. }
            | LayerSpec::Dense { activation, .. }
            | LayerSpec::TConv { activation, .. } => *activation,
            _ => Activation::None,
        }
    }

    /// Shape arithmetic for this layer, without touching any data.
    pub fn output_shape(&self, input: [usize; 4]) -> Result<[usize; 4], NetworkError> {
        let [b, h, w, c] = input;
        let mismatch = |context: &'static str, expected: usize, actual: usize| {
            NetworkError::Tensor(TensorError::ShapeMismatch {
                context,
                expected: expected.to_string(),
                actual: actual.to_string(),
            })
        };
        match self {
            LayerSpec::Conv {
                params, in_channels, ..
            } => {
                if c != *in_channels {
                    return Err(mismatch("conv input channels", *in_channels, c));
                }
                let (pt, pb, pl, pr) =
                    resolve_padding(params.padding, (h, w), params.kernel, params.stride);
                let oh = conv_output_size_asym(h, params.kernel.0, params.stride.0, pt, pb)?;
                let ow = conv_output_size_asym(w, params.kernel.1, params.stride.1, pl, pr)?;
                Ok([b, oh, ow, params.filters])
            }
            LayerSpec::MaxPool { params } => {
                let (ph, pw) = params.window;
                if h % ph != 0 || w % pw != 0 {
                    return Err(NetworkError::Tensor(TensorError::NonDivisiblePool {
                        h,
                        w,
                        ph,
                        pw,
                    }));
                }
                Ok([b, h / ph, w / pw, c])
            }
            LayerSpec::Flatten => Ok([b, 1, 1, h * w * c]),
            LayerSpec::Dense {
                units, in_features, ..
            } => {
                if h != 1 || w != 1 || c != *in_features {
                    return Err(mismatch("dense input features", *in_features, h * w * c));
                }
                Ok([b, 1, 1, *units])
            }
            LayerSpec::Reshape {
                height,
                width,
                channels,
            } => {
                if h * w * c != height * width * channels {
                    return Err(mismatch(
                        "reshape element count",
                        height * width * channels,
                        h * w * c,
                    ));
                }
                Ok([b, *height, *width, *channels])
            }
            LayerSpec::TConv {
                params, in_channels, ..
            } => {
                if c != *in_channels {
                    return Err(mismatch("tconv input channels", *in_channels, c));
                }
                let oh = tconv_output_size(h, params.kernel.0, params.stride.0, 0)?;
                let ow = tconv_output_size(w, params.kernel.1, params.stride.1, 0)?;
                Ok([b, oh, ow, params.filters])
            }
        }
    }

    /// Natural tensor shape of this layer's weight blob, if it has one.
    pub fn weight_shape(&self) -> Option<[usize; 4]> {
        match self {
            LayerSpec::Conv {
                params, in_channels, ..
            }
            | LayerSpec::TConv {
                params, in_channels, ..
            } => Some([
                params.filters,
                params.kernel.0,
                params.kernel.1,
                *in_channels,
            ]),
            LayerSpec::Dense {
                units, in_features, ..
            } => Some([*units, 1, 1, *in_features]),
            _ => None,
        }
    }

    /// Short human-readable label used by `summary` and diagnostics.
    pub fn describe(&self) -> String {
        match self {
            LayerSpec::Conv { params, .. } => format!(
                "conv {}@{}x{}/s{} {}",
                params.filters,
                params.kernel.0,
                params.kernel.1,
                params.stride.0,
                match params.padding {
                    Padding::Same => "same",
                    Padding::Valid => "valid",
                    Padding::Explicit { .. } => "explicit",
                }
            ),
            LayerSpec::MaxPool { params } => {
                format!("maxpool {}x{}", params.window.0, params.window.1)
            }
            LayerSpec::Flatten => "flatten".into(),
            LayerSpec::Dense { units, .. } => format!("dense {units}"),
            LayerSpec::Reshape {
                height,
                width,
                channels,
            } => format!("reshape ({height},{width},{channels})"),
            LayerSpec::TConv { params, .. } => format!(
                "tconv {}@{}x{}/s{}",
                params.filters, params.kernel.0, params.kernel.1, params.stride.0
            ),
        }
    }
}

/// Layer spec plus its parameter blobs. Conv/tconv weights keep their natural
/// (filters, kh, kw, in_ch) tensor shape; dense weights are (units, 1, 1, in).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layers: Vec<Layer>,
    pub adaptive_n: usize,
}

/// Per-layer gradients aligned with `Model::layers`.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Everything `backward` needs from the preceding forward pass.
pub struct ForwardCache {
    inputs: Vec<Tensor>,
    preacts: Vec<Option<Tensor>>,
    argmax: Vec<Option<Vec<usize>>>,
    output_shape: [usize; 4],
}

/// The layer stack for a given bottleneck size, input side, and widths.
///
/// Useful on its own for shape/parameter arithmetic; `build_model` adds the
/// initialized parameters.
pub fn build_layer_specs(
    adaptive_n: usize,
    input_side: usize,
    widths: (usize, usize, usize),
) -> Result<Vec<LayerSpec>, NetworkError> {
    if input_side == 0 || input_side % 20 != 0 {
        return Err(NetworkError::IndivisibleInputSide(input_side));
    }
    let (c1, c2, c3) = widths;
    if c1 == 0 || c2 == 0 || c3 == 0 {
        return Err(NetworkError::DegenerateWidths(widths));
    }
    let relu = Activation::ReLU;
    let conv = |filters, k, in_channels| LayerSpec::Conv {
        params: ConvParams {
            filters,
            kernel: (k, k),
            stride: (1, 1),
            padding: Padding::Same,
        },
        in_channels,
        activation: relu,
    };
    let tconv = |filters, k, s, in_channels| LayerSpec::TConv {
        params: ConvParams {
            filters,
            kernel: (k, k),
            stride: (s, s),
            padding: Padding::Valid,
        },
        in_channels,
        activation: relu,
    };
    let side = input_side / 20;
    let flat = side * side * c3;
    let mut specs = vec![
        conv(c1, 2, 1),
        LayerSpec::MaxPool {
            params: PoolParams::square(2),
        },
        conv(c2, 2, c1),
        LayerSpec::MaxPool {
            params: PoolParams::square(2),
        },
        conv(c3, 5, c2),
        LayerSpec::MaxPool {
            params: PoolParams::square(5),
        },
        LayerSpec::Flatten,
    ];
    let mut dense_in = flat;
    if adaptive_n > 0 {
        specs.push(LayerSpec::Dense {
            units: adaptive_n,
            in_features: flat,
            activation: relu,
        });
        dense_in = adaptive_n;
    }
    specs.push(LayerSpec::Dense {
        units: flat,
        in_features: dense_in,
        activation: relu,
    });
    specs.push(LayerSpec::Reshape {
        height: side,
        width: side,
        channels: c3,
    });
    specs.push(tconv(c2, 2, 2, c3));
    specs.push(tconv(c1, 5, 5, c2));
    specs.push(tconv(1, 2, 2, c1));
    Ok(specs)
}

/// Total trainable parameter count implied by a spec list.
pub fn spec_param_count(specs: &[LayerSpec]) -> u64 {
    specs
        .iter()
        .map(|s| {
            let (w, b) = s.param_counts();
            (w + b) as u64
        })
        .sum()
}

/// Builds the model with He-uniform weights (bound sqrt(6/fan_in)) and zero
/// biases, drawn from a ChaCha8 stream in layer order for reproducibility.
pub fn build_model(
    adaptive_n: usize,
    input_side: usize,
    widths: (usize, usize, usize),
    seed: u64,
) -> Result<Model, NetworkError> {
    let specs = build_layer_specs(adaptive_n, input_side, widths)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = specs
        .into_iter()
        .map(|spec| {
            let (w_len, b_len) = spec.param_counts();
            let weights = if w_len == 0 {
                Tensor::zeros(0, 0, 0, 0)
            } else {
                let bound = (6.0 / spec.fan_in() as f64).sqrt();
                let data: Vec<f64> = (0..w_len).map(|_| rng.gen_range(-bound..bound)).collect();
                let shape = spec.weight_shape().expect("parametric layer has a shape");
                Tensor::from_vec(shape, data).expect("init length matches spec")
            };
            Layer {
                weights,
                bias: vec![0.0; b_len],
                spec,
            }
        })
        .collect();
    Ok(Model {
        layers,
        adaptive_n,
    })
}

impl Model {
    /// Per-layer output shapes for a given input shape, by pure arithmetic.
    pub fn output_shapes(&self, input: [usize; 4]) -> Result<Vec<[usize; 4]>, NetworkError> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = input;
        for layer in &self.layers {
            cur = layer.spec.output_shape(cur)?;
            shapes.push(cur);
        }
        Ok(shapes)
    }

    /// Input side length implied by the decoder (reshape target unrolled
    /// through the transpose convolutions); None for hand-built stacks
    /// without a reshape or with a non-square result.
    pub fn input_side(&self) -> Option<usize> {
        let start = self.layers.iter().position(|l| {
            matches!(l.spec, LayerSpec::Reshape { .. })
        })?;
        let mut shape = match self.layers[start].spec {
            LayerSpec::Reshape {
                height,
                width,
                channels,
            } => [1, height, width, channels],
            _ => unreachable!(),
        };
        for layer in &self.layers[start + 1..] {
            shape = layer.spec.output_shape(shape).ok()?;
        }
        (shape[1] == shape[2]).then_some(shape[1])
    }

    pub fn param_count(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| (l.weights.len() + l.bias.len()) as u64)
            .sum()
    }

    fn run(&self, input: &Tensor, mut cache: Option<&mut ForwardCache>) -> Result<Tensor, NetworkError> {
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(x.clone());
            }
            let mut argmax = None;
            let z = match &layer.spec {
                LayerSpec::Conv { params, .. } => {
                    conv2d_forward(&x, &layer.weights, &layer.bias, params)?
                }
                LayerSpec::MaxPool { params } => {
                    let (out, idx) = maxpool_forward(&x, params)?;
                    argmax = Some(idx);
                    out
                }
                LayerSpec::Flatten => flatten(&x),
                LayerSpec::Dense { units, .. } => {
                    dense_forward(&x, layer.weights.data(), &layer.bias, *units)?
                }
                LayerSpec::Reshape {
                    height,
                    width,
                    channels,
                } => reshape(&x, (*height, *width, *channels))?,
                LayerSpec::TConv { params, .. } => {
                    tconv2d_forward(&x, &layer.weights, &layer.bias, params)?
                }
            };
            x = match layer.spec.activation() {
                Activation::ReLU => {
                    let a = relu(&z);
                    if let Some(c) = cache.as_deref_mut() {
                        c.preacts.push(Some(z));
                    }
                    a
                }
                Activation::None => {
                    if let Some(c) = cache.as_deref_mut() {
                        c.preacts.push(None);
                    }
                    z
                }
            };
            if let Some(c) = cache.as_deref_mut() {
                c.argmax.push(argmax);
                let _ = i;
            }
        }
        if let Some(c) = cache {
            c.output_shape = x.shape();
        }
        Ok(x)
    }

    /// Forward pass without gradient bookkeeping.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NetworkError> {
        self.run(input, None)
    }

    /// Forward pass that records everything `backward` needs.
    pub fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, ForwardCache), NetworkError> {
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            preacts: Vec::with_capacity(self.layers.len()),
            argmax: Vec::with_capacity(self.layers.len()),
            output_shape: input.shape(),
        };
        let out = self.run(input, Some(&mut cache))?;
        Ok((out, cache))
    }

    /// Backpropagates `grad_out` through the cached pass; returns per-layer
    /// parameter gradients and the gradient w.r.t. the model input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: &Tensor,
    ) -> Result<(Vec<LayerGrads>, Tensor), NetworkError> {
        if grad_out.shape() != cache.output_shape {
            return Err(NetworkError::Tensor(TensorError::ShapeMismatch {
                context: "backward grad_out",
                expected: format!("{:?}", cache.output_shape),
                actual: format!("{:?}", grad_out.shape()),
            }));
        }
        let mut grads: Vec<LayerGrads> = self
            .layers
            .iter()
            .map(|l| LayerGrads {
                weights: vec![0.0; l.weights.len()],
                bias: vec![0.0; l.bias.len()],
            })
            .collect();
        let mut g = grad_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.spec.activation() == Activation::ReLU {
                let pre = cache.preacts[i].as_ref().expect("cached preactivation");
                g = relu_backward(&g, pre)?;
            }
            let input = &cache.inputs[i];
            g = match &layer.spec {
                LayerSpec::Conv { params, .. } => {
                    let (gx, gw, gb) = conv2d_backward(&g, input, &layer.weights, params)?;
                    grads[i].weights = gw.data().to_vec();
                    grads[i].bias = gb;
                    gx
                }
                LayerSpec::MaxPool { .. } => {
                    let idx = cache.argmax[i].as_ref().expect("cached argmax");
                    maxpool_backward(&g, idx, input.shape())?
                }
                LayerSpec::Flatten | LayerSpec::Reshape { .. } => {
                    Tensor::from_vec(input.shape(), g.data().to_vec())
                        .map_err(NetworkError::Tensor)?
                }
                LayerSpec::Dense { .. } => {
                    let (gx, gw, gb) = dense_backward(&g, input, layer.weights.data())?;
                    grads[i].weights = gw;
                    grads[i].bias = gb;
                    gx
                }
                LayerSpec::TConv { params, .. } => {
                    let (gx, gw, gb) = tconv2d_backward(&g, input, &layer.weights, params)?;
                    grads[i].weights = gw.data().to_vec();
                    grads[i].bias = gb;
                    gx
                }
            };
        }
        Ok((grads, g))
    }

    /// Inference entry point: forward pass, outputs clamped to [0, 1].
    pub fn predict(&self, input: &Tensor) -> Result<Tensor, NetworkError> {
        let mut out = self.forward(input)?;
        for v in out.data_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(out)
    }

    /// Per-layer table of output shapes and parameter counts.
    pub fn summary(&self) -> String {
        let mut text = String::from("layer  description              output shape        params\n");
        let shapes = self
            .input_side()
            .and_then(|s| self.output_shapes([1, s, s, 1]).ok());
        for (i, layer) in self.layers.iter().enumerate() {
            let shape = shapes
                .as_ref()
                .map(|s| {
                    let [_, h, w, c] = s[i];
                    format!("({h}, {w}, {c})")
                })
                .unwrap_or_else(|| "-".into());
            let params = layer.weights.len() + layer.bias.len();
            text.push_str(&format!(
                "{:<6} {:<24} {:<19} {}\n",
                i + 1,
                layer.spec.describe(),
                shape,
                params
            ));
        }
        text.push_str(&format!("total params: {}\n", self.param_count()));
        text
    }

    /// L2 norm of each layer's weights, labeled; used in failure diagnostics.
    pub fn weight_norms(&self) -> Vec<(String, f64)> {
        self.layers
            .iter()
            .map(|l| {
                let norm = l.weights.data().iter().map(|v| v * v).sum::<f64>().sqrt();
                (l.spec.describe(), norm)
            })
            .collect()
    }
}
