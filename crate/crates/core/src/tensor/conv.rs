//! 2-D convolution kernels (cross-correlation), im2col + GEMM fast path.

use super::{
    conv_output_size_asym, gemm_abt, gemm_atb, matmul, resolve_padding, ConvParams, Tensor,
    TensorError,
};

/// Resolved loop bounds shared by the forward and backward passes.
pub(crate) struct ConvGeometry {
    pub ih: usize,
    pub iw: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub sv: usize,
    pub sh: usize,
    pub pt: usize,
    pub pl: usize,
    pub oh: usize,
    pub ow: usize,
    pub filters: usize,
    /// im2col row count: kh * kw * cin.
    pub r: usize,
    /// im2col column count: oh * ow.
    pub n: usize,
}

pub(crate) fn conv_geometry(
    input: &Tensor,
    weights: &Tensor,
    bias_len: usize,
    p: &ConvParams,
) -> Result<ConvGeometry, TensorError> {
    p.validate()?;
    let [wf, wkh, wkw, wcin] = weights.shape();
    if (wkh, wkw) != p.kernel || wf != p.filters {
        return Err(TensorError::ShapeMismatch {
            context: "conv weights vs params",
            expected: format!("({}, {}, {}, in_ch)", p.filters, p.kernel.0, p.kernel.1),
            actual: format!("{:?}", weights.shape()),
        });
    }
    if input.channels() != wcin {
        return Err(TensorError::ShapeMismatch {
            context: "conv input channels",
            expected: wcin.to_string(),
            actual: input.channels().to_string(),
        });
    }
    if bias_len != wf {
        return Err(TensorError::ShapeMismatch {
            context: "conv bias length",
            expected: wf.to_string(),
            actual: bias_len.to_string(),
        });
    }
    let (ih, iw) = (input.height(), input.width());
    let (pt, pb, pl, pr) = resolve_padding(p.padding, (ih, iw), p.kernel, p.stride);
    let oh = conv_output_size_asym(ih, wkh, p.stride.0, pt, pb)?;
    let ow = conv_output_size_asym(iw, wkw, p.stride.1, pl, pr)?;
    Ok(ConvGeometry {
        ih,
        iw,
        cin: wcin,
        kh: wkh,
        kw: wkw,
        sv: p.stride.0,
        sh: p.stride.1,
        pt,
        pl,
        oh,
        ow,
        filters: wf,
        r: wkh * wkw * wcin,
        n: oh * ow,
    })
}

/// Gather one batch entry into a (r x n) column matrix; out-of-image taps are 0.
fn im2col(input: &Tensor, b: usize, g: &ConvGeometry, cols: &mut [f64]) {
    cols.fill(0.0);
    let data = input.data();
    let base = b * g.ih * g.iw * g.cin;
    for kh_i in 0..g.kh {
        for kw_i in 0..g.kw {
            for c in 0..g.cin {
                let row = (kh_i * g.kw + kw_i) * g.cin + c;
                let out_row = &mut cols[row * g.n..(row + 1) * g.n];
                for oy in 0..g.oh {
                    let iy = (oy * g.sv + kh_i) as isize - g.pt as isize;
                    if iy < 0 || iy >= g.ih as isize {
                        continue;
                    }
                    let src_row = base + (iy as usize * g.iw) * g.cin + c;
                    for ox in 0..g.ow {
                        let ix = (ox * g.sh + kw_i) as isize - g.pl as isize;
                        if ix < 0 || ix >= g.iw as isize {
                            continue;
                        }
                        out_row[oy * g.ow + ox] = data[src_row + ix as usize * g.cin];
                    }
                }
            }
        }
    }
}

/// Scatter a (r x n) column-gradient matrix back onto one batch entry.
fn col2im_add(grad_input: &mut Tensor, b: usize, g: &ConvGeometry, cols: &[f64]) {
    let stride_c = g.cin;
    let base = b * g.ih * g.iw * g.cin;
    let data = grad_input.data_mut();
    for kh_i in 0..g.kh {
        for kw_i in 0..g.kw {
            for c in 0..g.cin {
                let row = (kh_i * g.kw + kw_i) * g.cin + c;
                let col_row = &cols[row * g.n..(row + 1) * g.n];
                for oy in 0..g.oh {
                    let iy = (oy * g.sv + kh_i) as isize - g.pt as isize;
                    if iy < 0 || iy >= g.ih as isize {
                        continue;
                    }
                    let dst_row = base + (iy as usize * g.iw) * stride_c + c;
                    for ox in 0..g.ow {
                        let ix = (ox * g.sh + kw_i) as isize - g.pl as isize;
                        if ix < 0 || ix >= g.iw as isize {
                            continue;
                        }
                        data[dst_row + ix as usize * stride_c] += col_row[oy * g.ow + ox];
                    }
                }
            }
        }
    }
}

/// Sliding-window cross-correlation plus per-filter bias.
///
/// `weights` has shape (filters, kh, kw, in_ch); the output spatial extents
/// follow the convolution size formula per axis.
pub fn conv2d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &[f64],
    p: &ConvParams,
) -> Result<Tensor, TensorError> {
    let g = conv_geometry(input, weights, bias.len(), p)?;
    let batch = input.batch();
    let mut out = Tensor::zeros(batch, g.oh, g.ow, g.filters);
    let mut cols = vec![0.0; g.r * g.n];
    let mut prod = vec![0.0; g.filters * g.n];
    for b in 0..batch {
        im2col(input, b, &g, &mut cols);
        prod.fill(0.0);
        matmul(g.filters, g.r, g.n, weights.data(), &cols, &mut prod);
        let out_base = b * g.n * g.filters;
        let out_data = out.data_mut();
        for f in 0..g.filters {
            let row = &prod[f * g.n..(f + 1) * g.n];
            let bf = bias[f];
            for (col, v) in row.iter().enumerate() {
                out_data[out_base + col * g.filters + f] = v + bf;
            }
        }
    }
    Ok(out)
}

/// Gradients of a sum-reduced loss w.r.t. the convolution inputs.
///
/// `grad_out` must have the shape produced by the matching forward call.
pub fn conv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weights: &Tensor,
    p: &ConvParams,
) -> Result<(Tensor, Tensor, Vec<f64>), TensorError> {
    let g = conv_geometry(input, weights, grad_out.channels(), p)?;
    let batch = input.batch();
    if grad_out.shape() != [batch, g.oh, g.ow, g.filters] {
        return Err(TensorError::ShapeMismatch {
            context: "conv grad_out",
            expected: format!("{:?}", [batch, g.oh, g.ow, g.filters]),
            actual: format!("{:?}", grad_out.shape()),
        });
    }
    let mut grad_input = Tensor::zeros(batch, g.ih, g.iw, g.cin);
    let mut grad_weights = Tensor::zeros(g.filters, g.kh, g.kw, g.cin);
    let mut grad_bias = vec![0.0; g.filters];
    let mut cols = vec![0.0; g.r * g.n];
    let mut g_mat = vec![0.0; g.filters * g.n];
    let mut col_grad = vec![0.0; g.r * g.n];
    for b in 0..batch {
        im2col(input, b, &g, &mut cols);
        let go = grad_out.data();
        let go_base = b * g.n * g.filters;
        for col in 0..g.n {
            for f in 0..g.filters {
                g_mat[f * g.n + col] = go[go_base + col * g.filters + f];
            }
        }
        for f in 0..g.filters {
            grad_bias[f] += g_mat[f * g.n..(f + 1) * g.n].iter().sum::<f64>();
        }
        gemm_abt(g.filters, g.n, g.r, &g_mat, &cols, grad_weights.data_mut());
        col_grad.fill(0.0);
        gemm_atb(g.r, g.filters, g.n, weights.data(), &g_mat, &mut col_grad);
        col2im_add(&mut grad_input, b, &g, &col_grad);
    }
    Ok((grad_input, grad_weights, grad_bias))
}
