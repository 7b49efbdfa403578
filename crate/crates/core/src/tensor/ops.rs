//! Forward kernels shared by the recording tape and plain inference.

use super::{gemm, Tensor};
use crate::error::{Result, SdnError};

/// Output spatial extent of a valid (no padding) convolution.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize) -> usize {
    (input - kernel) / stride + 1
}

/// y[n][o] = sum_i w[o][i] * x[n][i] + b[o].
///
/// `x` is `[N, I]`, `w` is `[O, I]`, `b` is `[O]`.
pub(crate) fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, i) = match x.shape() {
        [n, i] => (*n, *i),
        _ => return Err(SdnError::shape("linear input", x.shape(), &[0, 0])),
    };
    let (o, wi) = match w.shape() {
        [o, wi] => (*o, *wi),
        _ => return Err(SdnError::shape("linear weight", w.shape(), &[0, 0])),
    };
    if wi != i || b.shape() != [o] {
        return Err(SdnError::shape("linear", &[n, i], w.shape()));
    }
    let mut out = Tensor::zeros(&[n, o]);
    {
        let c = out.data_mut();
        for row in 0..n {
            c[row * o..(row + 1) * o].copy_from_slice(b.data());
        }
        // x[N,I] * w^T[I,O]: element w[o][i] sits at o*I + i.
        gemm(n, i, o, x.data(), i as isize, 1, w.data(), 1, i as isize, 1.0, c);
    }
    Ok(out)
}

/// Spec-facing affine layer application on a `[N, I]` batch.
pub fn dense_forward(input: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    linear(input, w, b)
}

pub(crate) struct ConvDims {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

pub(crate) fn conv_dims(x: &Tensor, kernels: &Tensor, stride: usize) -> Result<ConvDims> {
    let (batch, c, h, w) = match x.shape() {
        [n, c, h, w] => (*n, *c, *h, *w),
        _ => return Err(SdnError::shape("conv2d input", x.shape(), &[0, 0, 0, 0])),
    };
    let (f, kc, kh, kw) = match kernels.shape() {
        [f, kc, kh, kw] => (*f, *kc, *kh, *kw),
        _ => {
            return Err(SdnError::shape(
                "conv2d kernels",
                kernels.shape(),
                &[0, 0, 0, 0],
            ))
        }
    };
    if kc != c || kh != kw {
        return Err(SdnError::shape("conv2d", x.shape(), kernels.shape()));
    }
    if kh > h || kh > w {
        return Err(SdnError::shape("conv2d kernel larger than input", &[h, w], &[kh, kw]));
    }
    if stride == 0 {
        return Err(SdnError::parameter("stride", "must be >= 1"));
    }
    Ok(ConvDims {
        batch,
        in_channels: c,
        height: h,
        width: w,
        filters: f,
        kernel: kh,
        stride,
        out_h: conv_out_dim(h, kh, stride),
        out_w: conv_out_dim(w, kh, stride),
    })
}

/// Lowers one sample's input patches to a `[out_h*out_w, C*k*k]` matrix.
pub(crate) fn im2col(sample: &[f64], d: &ConvDims, cols: &mut [f64]) {
    let k = d.kernel;
    let patch = d.in_channels * k * k;
    debug_assert_eq!(cols.len(), d.out_h * d.out_w * patch);
    let mut row = 0;
    for oy in 0..d.out_h {
        for ox in 0..d.out_w {
            let base_y = oy * d.stride;
            let base_x = ox * d.stride;
            let dst = &mut cols[row * patch..(row + 1) * patch];
            let mut idx = 0;
            for c in 0..d.in_channels {
                let plane = &sample[c * d.height * d.width..(c + 1) * d.height * d.width];
                for ky in 0..k {
                    let src = (base_y + ky) * d.width + base_x;
                    dst[idx..idx + k].copy_from_slice(&plane[src..src + k]);
                    idx += k;
                }
            }
            row += 1;
        }
    }
}

/// Scatter-add of a `[out_h*out_w, C*k*k]` column matrix back onto one
/// input sample. Inverse access pattern of `im2col`.
pub(crate) fn col2im(cols: &[f64], d: &ConvDims, sample: &mut [f64]) {
    let k = d.kernel;
    let patch = d.in_channels * k * k;
    let mut row = 0;
    for oy in 0..d.out_h {
        for ox in 0..d.out_w {
            let base_y = oy * d.stride;
            let base_x = ox * d.stride;
            let src = &cols[row * patch..(row + 1) * patch];
            let mut idx = 0;
            for c in 0..d.in_channels {
                let plane = &mut sample[c * d.height * d.width..(c + 1) * d.height * d.width];
                for ky in 0..k {
                    let dst = (base_y + ky) * d.width + base_x;
                    for kx in 0..k {
                        plane[dst + kx] += src[idx + kx];
                    }
                    idx += k;
                }
            }
            row += 1;
        }
    }
}

/// Valid convolution over a `[N, C, H, W]` batch with square `[F, C, k, k]`
/// kernels. Every input channel is summed into each output pixel.
pub(crate) fn conv2d_batch(
    x: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
) -> Result<Tensor> {
    let d = conv_dims(x, kernels, stride)?;
    if bias.shape() != [d.filters] {
        return Err(SdnError::shape("conv2d bias", bias.shape(), &[d.filters]));
    }
    let patch = d.in_channels * d.kernel * d.kernel;
    let pixels = d.out_h * d.out_w;
    let mut cols = vec![0.0; pixels * patch];
    let mut out = Tensor::zeros(&[d.batch, d.filters, d.out_h, d.out_w]);
    let in_stride = d.in_channels * d.height * d.width;
    let out_stride = d.filters * pixels;
    for n in 0..d.batch {
        im2col(&x.data()[n * in_stride..(n + 1) * in_stride], &d, &mut cols);
        let o = &mut out.data_mut()[n * out_stride..(n + 1) * out_stride];
        for f in 0..d.filters {
            o[f * pixels..(f + 1) * pixels].fill(bias.data()[f]);
        }
        // out[F, pixels] += kernels[F, patch] * cols^T[patch, pixels]
        gemm(
            d.filters,
            patch,
            pixels,
            kernels.data(),
            patch as isize,
            1,
            &cols,
            1,
            patch as isize,
            1.0,
            o,
        );
    }
    Ok(out)
}

/// Single-sample stride-1 valid convolution:
/// `input [C, H, W]`, `kernels [F, C, k, k]`, `bias [F]` -> `[F, H-k+1, W-k+1]`.
pub fn conv2d_forward(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let shape = input.shape().to_vec();
    let (c, h, w) = match shape[..] {
        [c, h, w] => (c, h, w),
        _ => return Err(SdnError::shape("conv2d_forward input", &shape, &[0, 0, 0])),
    };
    let batched = input.reshaped(&[1, c, h, w])?;
    let out = conv2d_batch(&batched, kernels, bias, 1)?;
    let s = out.shape().to_vec();
    out.reshaped(&s[1..])
}

pub(crate) fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Temperature-softened softmax over the last axis of a `[N, A]` (or `[A]`)
/// tensor, computed with max-subtraction for stability.
pub fn softmax_t(logits: &Tensor, temperature: f64) -> Result<Tensor> {
    if !(temperature > 0.0) {
        return Err(SdnError::parameter(
            "temperature",
            format!("must be > 0, got {temperature}"),
        ));
    }
    let (rows, cols) = match logits.shape() {
        [a] => (1, *a),
        [n, a] => (*n, *a),
        other => return Err(SdnError::shape("softmax_t", other, &[0])),
    };
    if cols == 0 {
        return Err(SdnError::Contract("softmax_t on empty logits".into()));
    }
    let mut out = logits.clone();
    for r in 0..rows {
        let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = ((*v - max) / temperature).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Heaviside spike: 1 where `u >= threshold`, else 0.
pub(crate) fn spike(u: &Tensor, threshold: f64) -> Tensor {
    u.map(|v| if v >= threshold { 1.0 } else { 0.0 })
}
