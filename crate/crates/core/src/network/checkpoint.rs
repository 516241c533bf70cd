//! Checkpoint serialization: a small self-describing binary format with
//! tagged layer headers, 32-bit little-endian parameter blobs, an optional
//! optimizer section, and a trailing CRC32 over everything before it.

use super::{Activation, AdamState, Layer, LayerMoments, LayerSpec, Model};
use crate::tensor::{ConvParams, Padding, PoolParams, Tensor};
use std::path::Path;
use thiserror::Error;

const MAGIC: [u8; 4] = *b"PTOC";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, not a checkpoint file")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint file is truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("invalid {field} tag {value}")]
    BadTag { field: &'static str, value: u32 },
    #[error("layer {layer} blob holds {actual} values, header implies {expected}")]
    BlobSizeMismatch {
        layer: usize,
        expected: usize,
        actual: usize,
    },
    #[error("invalid header: {0}")]
    InvalidHeader(&'static str),
    #[error("{0} trailing bytes after checkpoint payload")]
    TrailingBytes(usize),
}

// ---------------------------------------------------------------- writing --

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

/// Blob = u64 element count, then the values narrowed to f32 little-endian.
fn put_blob(buf: &mut Vec<u8>, values: &[f64]) {
    put_u64(buf, values.len() as u64);
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn activation_tag(a: Activation) -> u32 {
    match a {
        Activation::None => 0,
        Activation::ReLU => 1,
    }
}

fn put_conv_header(buf: &mut Vec<u8>, p: &ConvParams, in_channels: usize, act: Activation) {
    put_u32(buf, p.filters as u32);
    put_u32(buf, p.kernel.0 as u32);
    put_u32(buf, p.kernel.1 as u32);
    put_u32(buf, p.stride.0 as u32);
    put_u32(buf, p.stride.1 as u32);
    match p.padding {
        Padding::Valid => put_u32(buf, 0),
        Padding::Same => put_u32(buf, 1),
        Padding::Explicit {
            top,
            bottom,
            left,
            right,
        } => {
            put_u32(buf, 2);
            put_u32(buf, top as u32);
            put_u32(buf, bottom as u32);
            put_u32(buf, left as u32);
            put_u32(buf, right as u32);
        }
    }
    put_u32(buf, in_channels as u32);
    put_u32(buf, activation_tag(act));
}

fn put_layer_header(buf: &mut Vec<u8>, spec: &LayerSpec) {
    match spec {
        LayerSpec::Conv {
            params,
            in_channels,
            activation,
        } => {
            put_u32(buf, 0);
            put_conv_header(buf, params, *in_channels, *activation);
        }
        LayerSpec::MaxPool { params } => {
            put_u32(buf, 1);
            put_u32(buf, params.window.0 as u32);
            put_u32(buf, params.window.1 as u32);
            put_u32(buf, params.stride.0 as u32);
            put_u32(buf, params.stride.1 as u32);
        }
        LayerSpec::Flatten => put_u32(buf, 2),
        LayerSpec::Dense {
            units,
            in_features,
            activation,
        } => {
            put_u32(buf, 3);
            put_u32(buf, *units as u32);
            put_u32(buf, *in_features as u32);
            put_u32(buf, activation_tag(*activation));
        }
        LayerSpec::Reshape {
            height,
            width,
            channels,
        } => {
            put_u32(buf, 4);
            put_u32(buf, *height as u32);
            put_u32(buf, *width as u32);
            put_u32(buf, *channels as u32);
        }
        LayerSpec::TConv {
            params,
            in_channels,
            activation,
        } => {
            put_u32(buf, 5);
            put_conv_header(buf, params, *in_channels, *activation);
        }
    }
}

fn serialize(model: &Model, adam: Option<&AdamState>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    put_u32(&mut buf, VERSION);
    put_u32(&mut buf, model.adaptive_n as u32);
    put_u32(&mut buf, model.layers.len() as u32);
    for layer in &model.layers {
        put_layer_header(&mut buf, &layer.spec);
    }
    for layer in &model.layers {
        put_blob(&mut buf, layer.weights.data());
        put_blob(&mut buf, &layer.bias);
    }
    match adam {
        None => buf.push(0),
        Some(state) => {
            buf.push(1);
            put_u64(&mut buf, state.step);
            put_f64(&mut buf, state.lr);
            put_f64(&mut buf, state.beta1);
            put_f64(&mut buf, state.beta2);
            put_f64(&mut buf, state.epsilon);
            for mo in &state.moments {
                put_blob(&mut buf, &mo.m_w);
                put_blob(&mut buf, &mo.v_w);
                put_blob(&mut buf, &mo.m_b);
                put_blob(&mut buf, &mo.v_b);
            }
        }
    }
    let crc = crc32fast::hash(&buf);
    put_u32(&mut buf, crc);
    buf
}

/// Writes `model` (and optionally its optimizer state) to `path`.
pub fn save_checkpoint(
    model: &Model,
    adam: Option<&AdamState>,
    path: &Path,
) -> Result<(), CheckpointError> {
    std::fs::write(path, serialize(model, adam))?;
    Ok(())
}

// ---------------------------------------------------------------- reading --

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Truncated);
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, CheckpointError> {
        Ok(self.u32()? as usize)
    }

    fn blob(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let len = self.u64()? as usize;
        let bytes = self.take(len * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn activation(&mut self) -> Result<Activation, CheckpointError> {
        match self.u32()? {
            0 => Ok(Activation::None),
            1 => Ok(Activation::ReLU),
            value => Err(CheckpointError::BadTag {
                field: "activation",
                value,
            }),
        }
    }

    fn conv_body(&mut self) -> Result<(ConvParams, usize, Activation), CheckpointError> {
        let filters = self.usize()?;
        let kernel = (self.usize()?, self.usize()?);
        let stride = (self.usize()?, self.usize()?);
        let padding = match self.u32()? {
            0 => Padding::Valid,
            1 => Padding::Same,
            2 => Padding::Explicit {
                top: self.usize()?,
                bottom: self.usize()?,
                left: self.usize()?,
                right: self.usize()?,
            },
            value => {
                return Err(CheckpointError::BadTag {
                    field: "padding",
                    value,
                })
            }
        };
        let in_channels = self.usize()?;
        let activation = self.activation()?;
        Ok((
            ConvParams {
                filters,
                kernel,
                stride,
                padding,
            },
            in_channels,
            activation,
        ))
    }

    fn layer_spec(&mut self) -> Result<LayerSpec, CheckpointError> {
        match self.u32()? {
            0 => {
                let (params, in_channels, activation) = self.conv_body()?;
                Ok(LayerSpec::Conv {
                    params,
                    in_channels,
                    activation,
                })
            }
            1 => {
                let window = (self.usize()?, self.usize()?);
                let stride = (self.usize()?, self.usize()?);
                if stride != window {
                    return Err(CheckpointError::InvalidHeader(
                        "pool stride differs from window",
                    ));
                }
                Ok(LayerSpec::MaxPool {
                    params: PoolParams { window, stride },
                })
            }
            2 => Ok(LayerSpec::Flatten),
            3 => Ok(LayerSpec::Dense {
                units: self.usize()?,
                in_features: self.usize()?,
                activation: self.activation()?,
            }),
            4 => Ok(LayerSpec::Reshape {
                height: self.usize()?,
                width: self.usize()?,
                channels: self.usize()?,
            }),
            5 => {
                let (params, in_channels, activation) = self.conv_body()?;
                Ok(LayerSpec::TConv {
                    params,
                    in_channels,
                    activation,
                })
            }
            value => Err(CheckpointError::BadTag {
                field: "layer kind",
                value,
            }),
        }
    }
}

/// Reads a checkpoint back into a model and, if present, its Adam state.
pub fn load_checkpoint(path: &Path) -> Result<(Model, Option<AdamState>), CheckpointError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 4 {
        return Err(CheckpointError::Truncated);
    }
    if bytes[0..4] != MAGIC {
        return Err(CheckpointError::BadMagic(bytes[0..4].try_into().unwrap()));
    }
    if bytes.len() < 12 {
        return Err(CheckpointError::Truncated);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let body = &bytes[..bytes.len() - 4];
    let mut cur = Cursor { buf: body, pos: 8 };

    let adaptive_n = cur.usize()?;
    let layer_count = cur.usize()?;
    let mut specs = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        specs.push(cur.layer_spec()?);
    }
    let mut layers = Vec::with_capacity(layer_count);
    for (i, spec) in specs.into_iter().enumerate() {
        let (w_len, b_len) = spec.param_counts();
        let weights = cur.blob()?;
        if weights.len() != w_len {
            return Err(CheckpointError::BlobSizeMismatch {
                layer: i,
                expected: w_len,
                actual: weights.len(),
            });
        }
        let bias = cur.blob()?;
        if bias.len() != b_len {
            return Err(CheckpointError::BlobSizeMismatch {
                layer: i,
                expected: b_len,
                actual: bias.len(),
            });
        }
        let weights = match spec.weight_shape() {
            Some(shape) => Tensor::from_vec(shape, weights)
                .map_err(|_| CheckpointError::InvalidHeader("weight shape"))?,
            None => Tensor::zeros(0, 0, 0, 0),
        };
        layers.push(Layer {
            spec,
            weights,
            bias,
        });
    }
    let adam = match cur.take(1)?[0] {
        0 => None,
        1 => {
            let step = cur.u64()?;
            let lr = cur.f64()?;
            let beta1 = cur.f64()?;
            let beta2 = cur.f64()?;
            let epsilon = cur.f64()?;
            let mut moments = Vec::with_capacity(layers.len());
            for (i, layer) in layers.iter().enumerate() {
                let mo = LayerMoments {
                    m_w: cur.blob()?,
                    v_w: cur.blob()?,
                    m_b: cur.blob()?,
                    v_b: cur.blob()?,
                };
                if mo.m_w.len() != layer.weights.len()
                    || mo.v_w.len() != layer.weights.len()
                    || mo.m_b.len() != layer.bias.len()
                    || mo.v_b.len() != layer.bias.len()
                {
                    return Err(CheckpointError::BlobSizeMismatch {
                        layer: i,
                        expected: layer.weights.len(),
                        actual: mo.m_w.len(),
                    });
                }
                moments.push(mo);
            }
            Some(AdamState {
                step,
                lr,
                beta1,
                beta2,
                epsilon,
                moments,
            })
        }
        value => {
            return Err(CheckpointError::BadTag {
                field: "optimizer flag",
                value: value as u32,
            })
        }
    };
    if cur.pos != body.len() {
        return Err(CheckpointError::TrailingBytes(body.len() - cur.pos));
    }
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CheckpointError::ChecksumMismatch { stored, computed });
    }
    Ok((
        Model {
            layers,
            adaptive_n,
        },
        adam,
    ))
}
