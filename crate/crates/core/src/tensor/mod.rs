//! Rank-4 tensors and the layer kernels the network is built from.
//!
//! Tensors are dense f64 arrays in (batch, height, width, channels) order.
//! Convolution is cross-correlation (no kernel flip). Same padding puts the
//! extra pixel on the bottom/right edge, so a 2x2 kernel at stride 1 keeps
//! spatial dims unchanged. All kernels are pure functions; the convolution
//! fast path goes through im2col and a small hand-rolled GEMM, and the naive
//! loop it must agree with lives in the test suite.

mod conv;
mod dense;
mod linalg;
mod pool;
mod tconv;

pub use conv::{conv2d_backward, conv2d_forward};
pub use dense::{
    dense_backward, dense_forward, flatten, relu, relu_backward, reshape,
};
pub use pool::{maxpool_backward, maxpool_forward};
pub use tconv::{tconv2d_backward, tconv2d_forward};

pub(crate) use linalg::{gemm_abt, gemm_atb, matmul};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} implies {expected} elements, got {actual}")]
    DataLength {
        shape: [usize; 4],
        expected: usize,
        actual: usize,
    },
    #[error("kernel {kernel} exceeds padded input {padded}")]
    KernelTooLarge { kernel: usize, padded: usize },
    #[error("stride and kernel extents must be at least 1")]
    DegenerateParams,
    #[error("transpose conv output size would be negative ((I-1)*S + K < 2P)")]
    NegativeOutputSize,
    #[error("{context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },
    #[error("spatial dims {h}x{w} not divisible by pool window {ph}x{pw}")]
    NonDivisiblePool {
        h: usize,
        w: usize,
        ph: usize,
        pw: usize,
    },
    #[error("pool stride must equal window for non-overlapping pooling")]
    OverlappingPool,
    #[error("argmax index {index} out of range for input of {len} elements")]
    ArgmaxOutOfRange { index: usize, len: usize },
    #[error("transpose conv supports zero padding only")]
    UnsupportedPadding,
}

/// Dense rank-4 array, row-major in (batch, height, width, channels) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(batch: usize, height: usize, width: usize, channels: usize) -> Self {
        Tensor {
            shape: [batch, height, width, channels],
            data: vec![0.0; batch * height * width * channels],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self, TensorError> {
        let expected = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::DataLength {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn height(&self) -> usize {
        self.shape[1]
    }

    pub fn width(&self) -> usize {
        self.shape[2]
    }

    pub fn channels(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Flat offset of element (b, y, x, c).
    #[inline]
    pub fn idx(&self, b: usize, y: usize, x: usize, c: usize) -> usize {
        ((b * self.shape[1] + y) * self.shape[2] + x) * self.shape[3] + c
    }

    #[inline]
    pub fn at(&self, b: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.idx(b, y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, y: usize, x: usize, c: usize, v: f64) {
        let i = self.idx(b, y, x, c);
        self.data[i] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Padding mode for convolution layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output spatial size ceil(I/S); extra padding on the bottom/right edge.
    Same,
    /// No padding.
    Valid,
    Explicit {
        top: usize,
        bottom: usize,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub filters: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: Padding,
}

impl ConvParams {
    pub fn validate(&self) -> Result<(), TensorError> {
        if self.filters == 0
            || self.kernel.0 == 0
            || self.kernel.1 == 0
            || self.stride.0 == 0
            || self.stride.1 == 0
        {
            return Err(TensorError::DegenerateParams);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolParams {
    pub window: (usize, usize),
    pub stride: (usize, usize),
}

impl PoolParams {
    /// Non-overlapping square-ish pooling: stride equals window.
    pub fn square(w: usize) -> Self {
        PoolParams {
            window: (w, w),
            stride: (w, w),
        }
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        if self.window.0 == 0 || self.window.1 == 0 || self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(TensorError::DegenerateParams);
        }
        if self.window != self.stride {
            return Err(TensorError::OverlappingPool);
        }
        Ok(())
    }
}

/// Output extent of a convolution along one axis: floor((I - K + 2P)/S) + 1.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize, TensorError> {
    conv_output_size_asym(input, kernel, stride, pad, pad)
}

/// Same formula with independent low/high padding on the axis.
pub fn conv_output_size_asym(
    input: usize,
    kernel: usize,
    stride: usize,
    pad_lo: usize,
    pad_hi: usize,
) -> Result<usize, TensorError> {
    if kernel == 0 || stride == 0 || input == 0 {
        return Err(TensorError::DegenerateParams);
    }
    let padded = input + pad_lo + pad_hi;
    if kernel > padded {
        return Err(TensorError::KernelTooLarge { kernel, padded });
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output extent of a transpose convolution along one axis: (I - 1)*S + K - 2P.
pub fn tconv_output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize, TensorError> {
    if kernel == 0 || stride == 0 || input == 0 {
        return Err(TensorError::DegenerateParams);
    }
    let grown = (input - 1) * stride + kernel;
    if grown < 2 * pad {
        return Err(TensorError::NegativeOutputSize);
    }
    Ok(grown - 2 * pad)
}

/// Resolve a padding mode to (top, bottom, left, right) pixel counts.
///
/// Same padding follows the convention where the output extent is ceil(I/S)
/// and any odd total padding lands on the bottom/right edge; at stride 1 the
/// total per axis is exactly K - 1.
pub fn resolve_padding(
    padding: Padding,
    input: (usize, usize),
    kernel: (usize, usize),
    stride: (usize, usize),
) -> (usize, usize, usize, usize) {
    match padding {
        Padding::Valid => (0, 0, 0, 0),
        Padding::Explicit {
            top,
            bottom,
            left,
            right,
        } => (top, bottom, left, right),
        Padding::Same => {
            let axis = |i: usize, k: usize, s: usize| -> (usize, usize) {
                let out = i.div_ceil(s);
                let total = ((out - 1) * s + k).saturating_sub(i);
                (total / 2, total - total / 2)
            };
            let (top, bottom) = axis(input.0, kernel.0, stride.0);
            let (left, right) = axis(input.1, kernel.1, stride.1);
            (top, bottom, left, right)
        }
    }
}
