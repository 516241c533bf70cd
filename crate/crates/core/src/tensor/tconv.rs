//! Transpose convolution: every input element scatters a scaled copy of the
//! kernel into the output at stride offsets; overlapping regions add.
//!
//! Implemented as a gather over the (small) set of input positions that can
//! reach each output cell, which gives the same result as the scatter
//! definition without write conflicts. Only zero padding is supported;
//! `weights` has shape (filters, kh, kw, in_ch) where filters is the number
//! of output channels.

use super::{tconv_output_size, ConvParams, Padding, Tensor, TensorError};

struct TconvGeometry {
    ih: usize,
    iw: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    sv: usize,
    sh: usize,
    oh: usize,
    ow: usize,
    filters: usize,
}

fn tconv_geometry(
    input: &Tensor,
    weights: &Tensor,
    bias_len: usize,
    p: &ConvParams,
) -> Result<TconvGeometry, TensorError> {
    p.validate()?;
    match p.padding {
        Padding::Valid
        | Padding::Explicit {
            top: 0,
            bottom: 0,
            left: 0,
            right: 0,
        } => {}
        _ => return Err(TensorError::UnsupportedPadding),
    }
    let [wf, wkh, wkw, wcin] = weights.shape();
    if (wkh, wkw) != p.kernel || wf != p.filters {
        return Err(TensorError::ShapeMismatch {
            context: "tconv weights vs params",
            expected: format!("({}, {}, {}, in_ch)", p.filters, p.kernel.0, p.kernel.1),
            actual: format!("{:?}", weights.shape()),
        });
    }
    if input.channels() != wcin {
        return Err(TensorError::ShapeMismatch {
            context: "tconv input channels",
            expected: wcin.to_string(),
            actual: input.channels().to_string(),
        });
    }
    if bias_len != wf {
        return Err(TensorError::ShapeMismatch {
            context: "tconv bias length",
            expected: wf.to_string(),
            actual: bias_len.to_string(),
        });
    }
    let (ih, iw) = (input.height(), input.width());
    let oh = tconv_output_size(ih, wkh, p.stride.0, 0)?;
    let ow = tconv_output_size(iw, wkw, p.stride.1, 0)?;
    Ok(TconvGeometry {
        ih,
        iw,
        cin: wcin,
        kh: wkh,
        kw: wkw,
        sv: p.stride.0,
        sh: p.stride.1,
        oh,
        ow,
        filters: wf,
    })
}

/// Input positions i with i*stride <= o < i*stride + kernel, clipped to [0, extent).
#[inline]
fn reach(o: usize, kernel: usize, stride: usize, extent: usize) -> (usize, usize) {
    let hi = (o / stride).min(extent - 1);
    let lo = if o + 1 > kernel {
        (o + 1 - kernel).div_ceil(stride)
    } else {
        0
    };
    (lo, hi)
}

pub fn tconv2d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &[f64],
    p: &ConvParams,
) -> Result<Tensor, TensorError> {
    let g = tconv_geometry(input, weights, bias.len(), p)?;
    let batch = input.batch();
    let mut out = Tensor::zeros(batch, g.oh, g.ow, g.filters);
    let w = weights.data();
    let x = input.data();
    for b in 0..batch {
        for oy in 0..g.oh {
            let (i_lo, i_hi) = reach(oy, g.kh, g.sv, g.ih);
            for ox in 0..g.ow {
                let (j_lo, j_hi) = reach(ox, g.kw, g.sh, g.iw);
                let out_base = out.idx(b, oy, ox, 0);
                for i in i_lo..=i_hi {
                    let kh_i = oy - i * g.sv;
                    for j in j_lo..=j_hi {
                        let kw_i = ox - j * g.sh;
                        let x_base = ((b * g.ih + i) * g.iw + j) * g.cin;
                        for f in 0..g.filters {
                            let w_base = ((f * g.kh + kh_i) * g.kw + kw_i) * g.cin;
                            let mut acc = 0.0;
                            for c in 0..g.cin {
                                acc += x[x_base + c] * w[w_base + c];
                            }
                            out.data_mut()[out_base + f] += acc;
                        }
                    }
                }
            }
        }
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let base = out.idx(b, oy, ox, 0);
                for f in 0..g.filters {
                    out.data_mut()[base + f] += bias[f];
                }
            }
        }
    }
    Ok(out)
}

pub fn tconv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weights: &Tensor,
    p: &ConvParams,
) -> Result<(Tensor, Tensor, Vec<f64>), TensorError> {
    let g = tconv_geometry(input, weights, grad_out.channels(), p)?;
    let batch = input.batch();
    if grad_out.shape() != [batch, g.oh, g.ow, g.filters] {
        return Err(TensorError::ShapeMismatch {
            context: "tconv grad_out",
            expected: format!("{:?}", [batch, g.oh, g.ow, g.filters]),
            actual: format!("{:?}", grad_out.shape()),
        });
    }
    let mut grad_input = Tensor::zeros(batch, g.ih, g.iw, g.cin);
    let mut grad_weights = Tensor::zeros(g.filters, g.kh, g.kw, g.cin);
    let mut grad_bias = vec![0.0; g.filters];
    let go = grad_out.data();
    let x = input.data();
    let w = weights.data();
    for (f, gb) in grad_bias.iter_mut().enumerate() {
        *gb = (0..batch)
            .flat_map(|b| (0..g.oh * g.ow).map(move |s| (b, s)))
            .map(|(b, s)| go[(b * g.oh * g.ow + s) * g.filters + f])
            .sum();
    }
    for b in 0..batch {
        for i in 0..g.ih {
            for j in 0..g.iw {
                let x_base = ((b * g.ih + i) * g.iw + j) * g.cin;
                for kh_i in 0..g.kh {
                    let oy = i * g.sv + kh_i;
                    for kw_i in 0..g.kw {
                        let ox = j * g.sh + kw_i;
                        let go_base = ((b * g.oh + oy) * g.ow + ox) * g.filters;
                        for f in 0..g.filters {
                            let gof = go[go_base + f];
                            if gof == 0.0 {
                                continue;
                            }
                            let w_base = ((f * g.kh + kh_i) * g.kw + kw_i) * g.cin;
                            for c in 0..g.cin {
                                grad_input.data_mut()[x_base + c] += gof * w[w_base + c];
                                grad_weights.data_mut()[w_base + c] += gof * x[x_base + c];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((grad_input, grad_weights, grad_bias))
}
