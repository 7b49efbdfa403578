//! Slow, obviously-correct reference implementations used to cross-check
//! the fast paths in tests. Nothing here is needed at training time.

use crate::error::{Result, SdnError};
use crate::network::{Layer, Network, NetworkKind};
use crate::snn::LifConfig;
use crate::tensor::{Tape, Tensor};

/// Parameter gradients of the spiking network computed by recording the
/// fully unrolled time/layer computation on the autodiff tape, with the
/// spike nonlinearity replaced by its surrogate-derivative op. Same
/// contract and return order as `snn_backward`.
pub fn snn_grads_unrolled(
    net: &Network,
    frames: &[Tensor],
    dfr: &Tensor,
    cfg: &LifConfig,
) -> Result<Vec<Tensor>> {
    if net.kind != NetworkKind::Snn {
        return Err(SdnError::Contract("unrolled reference needs a spiking network".into()));
    }
    net.validate()?;
    cfg.validate()?;
    if frames.len() != cfg.t_steps {
        return Err(SdnError::Contract(format!(
            "got {} frames for a {}-step window",
            frames.len(),
            cfg.t_steps
        )));
    }
    let mut tape = Tape::new();
    let mut param_nodes = Vec::with_capacity(net.layers.len() * 2);
    for layer in &net.layers {
        let Layer::LifDense { w, b } = layer else { unreachable!("validated snn") };
        let wn = tape.param(w.clone());
        let bn = tape.param(b.clone());
        param_nodes.push((wn, bn));
    }

    // Per layer: (u_{t-1}, o_{t-1}) nodes from the previous step.
    let mut prev: Vec<Option<(crate::tensor::NodeId, crate::tensor::NodeId)>> =
        vec![None; net.layers.len()];
    let mut rate_sum = None;
    for frame in frames {
        let flat = frame.reshaped(&[1, frame.len()])?;
        let mut x = tape.leaf(flat);
        for (l, &(wn, bn)) in param_nodes.iter().enumerate() {
            let i_t = tape.linear(x, wn, bn)?;
            let u = match prev[l] {
                None => i_t,
                Some((u_prev, o_prev)) => {
                    let o_eff =
                        if cfg.detach_reset { tape.stop_grad(o_prev)? } else { o_prev };
                    // tau * u_prev * (1 - o_prev) + i_t
                    let keep = tape.affine(o_eff, -cfg.tau, cfg.tau)?;
                    let carried = tape.mul(u_prev, keep)?;
                    tape.add(carried, i_t)?
                }
            };
            let o = tape.spike(u, cfg.v_thresh, cfg.surrogate_a)?;
            prev[l] = Some((u, o));
            x = o;
        }
        rate_sum = Some(match rate_sum {
            None => x,
            Some(acc) => tape.add(acc, x)?,
        });
    }
    let sum = rate_sum.expect("at least one frame");
    let fr = tape.affine(sum, 1.0 / frames.len() as f64, 0.0)?;
    // Seed the backward pass with dfr by contracting fr against it.
    let seed = tape.leaf(dfr.reshaped(&[1, dfr.len()])?);
    let weighted = tape.mul(fr, seed)?;
    let loss = tape.sum(weighted)?;
    let grads = tape.backward(loss)?;
    let mut out = Vec::with_capacity(param_nodes.len() * 2);
    for (wn, bn) in param_nodes {
        let w_shape = tape.value(wn).shape().to_vec();
        let b_shape = tape.value(bn).shape().to_vec();
        out.push(grads.get(wn).cloned().unwrap_or_else(|| Tensor::zeros(&w_shape)));
        out.push(grads.get(bn).cloned().unwrap_or_else(|| Tensor::zeros(&b_shape)));
    }
    Ok(out)
}

/// Triple-loop valid convolution over one sample, same contract as
/// `conv2d_forward`: `input [C, H, W]`, `kernels [F, C, k, k]`, `bias [F]`.
pub fn conv2d_brute(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c, h, w) = match input.shape() {
        [c, h, w] => (*c, *h, *w),
        other => return Err(SdnError::shape("conv2d_brute input", other, &[0, 0, 0])),
    };
    let (f, kc, k) = match kernels.shape() {
        [f, kc, kh, kw] if kh == kw => (*f, *kc, *kh),
        other => return Err(SdnError::shape("conv2d_brute kernels", other, &[0, 0, 0, 0])),
    };
    if kc != c || k > h || k > w || bias.shape() != [f] {
        return Err(SdnError::shape("conv2d_brute", input.shape(), kernels.shape()));
    }
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut out = Tensor::zeros(&[f, oh, ow]);
    for fo in 0..f {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias.data()[fo];
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let xv = input.data()[ci * h * w + (oy + ky) * w + (ox + kx)];
                            let kv = kernels.data()[fo * c * k * k + ci * k * k + ky * k + kx];
                            acc += xv * kv;
                        }
                    }
                }
                out.data_mut()[fo * oh * ow + oy * ow + ox] = acc;
            }
        }
    }
    Ok(out)
}
