//! Define-by-run reverse-mode autodiff.
//!
//! A [`Tape`] records every operation as it executes; [`Tape::backward`]
//! replays the record in reverse, accumulating gradients for every node.
//! Construction is append-only, so node order is already topological.

use super::ops::{self, conv_dims};
use super::{gemm, Tensor};
use crate::error::{Result, SdnError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Terminal: constant input or trainable parameter.
    Leaf,
    Linear { x: NodeId, w: NodeId, b: NodeId },
    Conv2d { x: NodeId, k: NodeId, b: NodeId, stride: usize },
    Relu { x: NodeId },
    SoftmaxT { x: NodeId, t: f64 },
    /// Heaviside forward, rectangular surrogate of width `a` backward.
    Spike { x: NodeId, v_thresh: f64, a: f64 },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    /// Elementwise `mul * x + add`; the offset only shifts the forward
    /// value, so the op records just the slope.
    Affine { x: NodeId, mul: f64 },
    Square { x: NodeId },
    Ln { x: NodeId },
    Clamp { x: NodeId, lo: f64, hi: f64 },
    Sum { x: NodeId },
    Mean { x: NodeId },
    /// Per-row column pick: `[N, A]` -> `[N]` via `indices[n]`.
    GatherCols { x: NodeId, indices: Vec<usize> },
    Reshape { x: NodeId },
    StopGrad,
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by one [`Tape::backward`] pass, keyed by [`NodeId`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. the node, if any path reached it.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

/// Recording tape. Build with the op methods, then call [`Tape::backward`]
/// from any scalar node; the tape is not consumed, so several backward
/// passes (or backward from different losses) are possible.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(SdnError::Contract(format!(
                "node {} is not on this tape",
                id.0
            )));
        }
        Ok(())
    }

    /// Value computed at `id` during the forward pass.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Records a constant input.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Records a trainable parameter. Identical to [`Tape::leaf`] mechanically;
    /// the separate name marks intent at call sites.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// `x [N, I] * w [O, I]^T + b [O]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(x)?;
        self.check(w)?;
        self.check(b)?;
        let y = ops::dense_forward(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(y, Op::Linear { x, w, b }))
    }

    /// Valid convolution, `x [N, C, H, W]` with kernels `[F, C, k, k]`.
    pub fn conv2d(&mut self, x: NodeId, k: NodeId, b: NodeId, stride: usize) -> Result<NodeId> {
        self.check(x)?;
        self.check(k)?;
        self.check(b)?;
        let y = ops::conv2d_batch(self.value(x), self.value(k), self.value(b), stride)?;
        Ok(self.push(y, Op::Conv2d { x, k, b, stride }))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let y = ops::relu(self.value(x));
        Ok(self.push(y, Op::Relu { x }))
    }

    pub fn softmax_t(&mut self, x: NodeId, t: f64) -> Result<NodeId> {
        self.check(x)?;
        let y = ops::softmax_t(self.value(x), t)?;
        Ok(self.push(y, Op::SoftmaxT { x, t }))
    }

    /// Threshold firing with a rectangular surrogate derivative of width `a`.
    pub fn spike(&mut self, x: NodeId, v_thresh: f64, a: f64) -> Result<NodeId> {
        self.check(x)?;
        if !(a > 0.0) {
            return Err(SdnError::parameter("surrogate_a", "must be > 0"));
        }
        let y = ops::spike(self.value(x), v_thresh);
        Ok(self.push(y, Op::Spike { x, v_thresh, a }))
    }

    fn same_shape(&self, op: &str, a: NodeId, b: NodeId) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        if self.value(a).shape() != self.value(b).shape() {
            return Err(SdnError::shape(op, self.value(a).shape(), self.value(b).shape()));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let mut y = self.value(a).clone();
        for (v, w) in y.data_mut().iter_mut().zip(self.value(b).data()) {
            *v += w;
        }
        Ok(self.push(y, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let mut y = self.value(a).clone();
        for (v, w) in y.data_mut().iter_mut().zip(self.value(b).data()) {
            *v -= w;
        }
        Ok(self.push(y, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let mut y = self.value(a).clone();
        for (v, w) in y.data_mut().iter_mut().zip(self.value(b).data()) {
            *v *= w;
        }
        Ok(self.push(y, Op::Mul { a, b }))
    }

    /// Elementwise `mul * x + add`.
    pub fn affine(&mut self, x: NodeId, mul: f64, add: f64) -> Result<NodeId> {
        self.check(x)?;
        let y = self.value(x).map(|v| mul * v + add);
        Ok(self.push(y, Op::Affine { x, mul }))
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let y = self.value(x).map(|v| v * v);
        Ok(self.push(y, Op::Square { x }))
    }

    /// Natural log. The caller is responsible for keeping inputs positive
    /// (e.g. via [`Tape::clamp`]).
    pub fn ln(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let y = self.value(x).map(f64::ln);
        Ok(self.push(y, Op::Ln { x }))
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.check(x)?;
        if !(lo <= hi) {
            return Err(SdnError::parameter("clamp", format!("lo {lo} > hi {hi}")));
        }
        let y = self.value(x).map(|v| v.clamp(lo, hi));
        Ok(self.push(y, Op::Clamp { x, lo, hi }))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let s: f64 = self.value(x).data().iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum { x }))
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let v = self.value(x);
        if v.is_empty() {
            return Err(SdnError::Contract("mean of empty tensor".into()));
        }
        let s: f64 = v.data().iter().sum::<f64>() / v.len() as f64;
        Ok(self.push(Tensor::scalar(s), Op::Mean { x }))
    }

    /// `y[n] = x[n, indices[n]]` for `x` of shape `[N, A]`.
    pub fn gather_cols(&mut self, x: NodeId, indices: &[usize]) -> Result<NodeId> {
        self.check(x)?;
        let (n, a) = match self.value(x).shape() {
            [n, a] => (*n, *a),
            other => return Err(SdnError::shape("gather_cols", other, &[0, 0])),
        };
        if indices.len() != n {
            return Err(SdnError::shape("gather_cols indices", &[indices.len()], &[n]));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= a) {
            return Err(SdnError::parameter(
                "gather_cols",
                format!("index {bad} out of range for {a} columns"),
            ));
        }
        let data: Vec<f64> = indices
            .iter()
            .enumerate()
            .map(|(row, &col)| self.value(x).data()[row * a + col])
            .collect();
        let y = Tensor::from_vec(&[n], data)?;
        Ok(self.push(y, Op::GatherCols { x, indices: indices.to_vec() }))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.check(x)?;
        let y = self.value(x).reshaped(shape)?;
        Ok(self.push(y, Op::Reshape { x }))
    }

    /// Copies the value but blocks gradient flow through it.
    pub fn stop_grad(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        Ok(self.push(self.value(x).clone(), Op::StopGrad))
    }

    /// Reverse pass from a scalar `loss` node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        self.check(loss)?;
        if self.value(loss).len() != 1 {
            return Err(SdnError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let Some(dy) = grads[id].take() else { continue };
            self.propagate(id, &dy, &mut grads);
            grads[id] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    /// Adds this node's contribution to its inputs' gradients.
    fn propagate(&self, id: usize, dy: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        let mut accum = |target: NodeId, contrib: &mut dyn FnMut(&mut Tensor)| {
            let slot = grads[target.0]
                .get_or_insert_with(|| Tensor::zeros(self.value(target).shape()));
            contrib(slot);
        };
        match &node.op {
            Op::Leaf | Op::StopGrad => {}
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (n, i) = (xv.shape()[0], xv.shape()[1]);
                let o = wv.shape()[0];
                // dx[N,I] += dy[N,O] * w[O,I]
                accum(*x, &mut |g| {
                    gemm(n, o, i, dy.data(), o as isize, 1, wv.data(), i as isize, 1, 1.0, g.data_mut());
                });
                // dw[O,I] += dy^T[O,N] * x[N,I]
                accum(*w, &mut |g| {
                    gemm(o, n, i, dy.data(), 1, o as isize, xv.data(), i as isize, 1, 1.0, g.data_mut());
                });
                accum(*b, &mut |g| {
                    for row in 0..n {
                        for (col, gb) in g.data_mut().iter_mut().enumerate() {
                            *gb += dy.data()[row * o + col];
                        }
                    }
                });
            }
            Op::Conv2d { x, k, b, stride } => {
                let xv = self.value(*x);
                let kv = self.value(*k);
                let d = conv_dims(xv, kv, *stride).expect("shapes were validated on record");
                let patch = d.in_channels * d.kernel * d.kernel;
                let pixels = d.out_h * d.out_w;
                let in_stride = d.in_channels * d.height * d.width;
                let out_stride = d.filters * pixels;
                let mut cols = vec![0.0; pixels * patch];
                let mut dcols = vec![0.0; pixels * patch];
                for nidx in 0..d.batch {
                    let dy_n = &dy.data()[nidx * out_stride..(nidx + 1) * out_stride];
                    ops::im2col(&xv.data()[nidx * in_stride..(nidx + 1) * in_stride], &d, &mut cols);
                    // dk[F,patch] += dy_n[F,pixels] * cols[pixels,patch]
                    accum(*k, &mut |g| {
                        gemm(d.filters, pixels, patch, dy_n, pixels as isize, 1, &cols, patch as isize, 1, 1.0, g.data_mut());
                    });
                    // dcols[pixels,patch] = dy_n^T[pixels,F] * kernels[F,patch]
                    dcols.fill(0.0);
                    gemm(pixels, d.filters, patch, dy_n, 1, pixels as isize, kv.data(), patch as isize, 1, 0.0, &mut dcols);
                    accum(*x, &mut |g| {
                        ops::col2im(&dcols, &d, &mut g.data_mut()[nidx * in_stride..(nidx + 1) * in_stride]);
                    });
                    accum(*b, &mut |g| {
                        for f in 0..d.filters {
                            g.data_mut()[f] += dy_n[f * pixels..(f + 1) * pixels].iter().sum::<f64>();
                        }
                    });
                }
            }
            Op::Relu { x } => {
                let xv = self.value(*x);
                accum(*x, &mut |g| {
                    for ((g, &v), &d) in g.data_mut().iter_mut().zip(xv.data()).zip(dy.data()) {
                        if v > 0.0 {
                            *g += d;
                        }
                    }
                });
            }
            Op::SoftmaxT { x, t } => {
                // dx_i = (y_i / t) * (dy_i - sum_j dy_j y_j), per row.
                let yv = &node.value;
                let cols = *yv.shape().last().expect("softmax output is non-empty");
                accum(*x, &mut |g| {
                    for (row, grow) in g.data_mut().chunks_mut(cols).enumerate() {
                        let y = &yv.data()[row * cols..(row + 1) * cols];
                        let d = &dy.data()[row * cols..(row + 1) * cols];
                        let dot: f64 = y.iter().zip(d).map(|(a, b)| a * b).sum();
                        for ((g, &yi), &di) in grow.iter_mut().zip(y).zip(d) {
                            *g += yi / t * (di - dot);
                        }
                    }
                });
            }
            Op::Spike { x, v_thresh, a } => {
                let xv = self.value(*x);
                accum(*x, &mut |g| {
                    for ((g, &u), &d) in g.data_mut().iter_mut().zip(xv.data()).zip(dy.data()) {
                        if (u - v_thresh).abs() <= a / 2.0 {
                            *g += d / a;
                        }
                    }
                });
            }
            Op::Add { a, b } => {
                accum(*a, &mut |g| {
                    for (g, &d) in g.data_mut().iter_mut().zip(dy.data()) {
                        *g += d;
                    }
                });
                accum(*b, &mut |g| {
                    for (g, &d) in g.data_mut().iter_mut().zip(dy.data()) {
                        *g += d;
                    }
                });
            }
            Op::Sub { a, b } => {
                accum(*a, &mut |g| {
                    for (g, &d) in g.data_mut().iter_mut().zip(dy.data()) {
                        *g += d;
                    }
                });
                accum(*b, &mut |g| {
                    for (g, &d) in g.data_mut().iter_mut().zip(dy.data()) {
                        *g -= d;
                    }
                });
            }
            Op::Mul { a, b } => {
                let av = self.value(*a);
                let bv = self.value(*b);
                accum(*a, &mut |g| {
                    for ((g, &o), &d) in g.data_mut().iter_mut().zip(bv.data()).zip(dy.data()) {
                        *g += o * d;
                    }
                });
                accum(*b, &mut |g| {
                    for ((g, &o), &d) in g.data_mut().iter_mut().zip(av.data()).zip(dy.data()) {
                        *g += o * d;
                    }
                });
            }
            Op::Affine { x, mul } => {
                accum(*x, &mut |g| {
                    for (g, &d) in g.data_mut().iter_mut().zip(dy.data()) {
                        *g += mul * d;
                    }
                });
            }
            Op::Square { x } => {
                let xv = self.value(*x);
                accum(*x, &mut |g| {
                    for ((g, &v), &d) in g.data_mut().iter_mut().zip(xv.data()).zip(dy.data()) {
                        *g += 2.0 * v * d;
                    }
                });
            }
            Op::Ln { x } => {
                let xv = self.value(*x);
                accum(*x, &mut |g| {
                    for ((g, &v), &d) in g.data_mut().iter_mut().zip(xv.data()).zip(dy.data()) {
                        *g += d / v;
                    }
                });
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x);
                accum(*x, &mut |g| {
                    for ((g, &v), &d) in g.data_mut().iter_mut().zip(xv.data()).zip(dy.data()) {
                        if v >= *lo && v <= *hi {
                            *g += d;
                        }
                    }
                });
            }
            Op::Sum { x } => {
                let d = dy.data()[0];
                accum(*x, &mut |g| {
                    for g in g.data_mut() {
                        *g += d;
                    }
                });
            }
            Op::Mean { x } => {
                let d = dy.data()[0] / self.value(*x).len() as f64;
                accum(*x, &mut |g| {
                    for g in g.data_mut() {
                        *g += d;
                    }
                });
            }
            Op::GatherCols { x, indices } => {
                let a = self.value(*x).shape()[1];
                accum(*x, &mut |g| {
                    for (row, &col) in indices.iter().enumerate() {
                        g.data_mut()[row * a + col] += dy.data()[row];
                    }
                });
            }
            Op::Reshape { x } => {
                accum(*x, &mut |g| {
                    for (g, &d) in g.data_mut().iter_mut().zip(dy.data()) {
                        *g += d;
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_of_square_sum() {
        // L = sum((2x)^2) = 4 sum x^2, dL/dx = 8x
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap());
        let y = tape.affine(x, 2.0, 0.0).unwrap();
        let s = tape.square(y).unwrap();
        let loss = tape.sum(s).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[8.0, -16.0, 4.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[2]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn backward_is_repeatable() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(&[2], vec![3.0, -1.0]).unwrap());
        let s = tape.square(x).unwrap();
        let loss = tape.mean(s).unwrap();
        let g1 = tape.backward(loss).unwrap();
        let g2 = tape.backward(loss).unwrap();
        assert_eq!(g1.get(x).unwrap(), g2.get(x).unwrap());
        assert_eq!(g1.get(x).unwrap().data(), &[3.0, -1.0]);
    }

    #[test]
    fn stop_grad_blocks_flow() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        let frozen = tape.stop_grad(x).unwrap();
        let prod = tape.mul(x, frozen).unwrap();
        let loss = tape.sum(prod).unwrap();
        let grads = tape.backward(loss).unwrap();
        // d(x * const)/dx = const = x's value, not 2x.
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn gather_cols_routes_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(&[2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
        let picked = tape.gather_cols(x, &[2, 0]).unwrap();
        assert_eq!(tape.value(picked).data(), &[2.0, 3.0]);
        let loss = tape.sum(picked).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(
            grads.get(x).unwrap().data(),
            &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn spike_surrogate_window() {
        // v_thresh = 0.5, a = 1.0: gradient passes only for u in [0, 1].
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(&[4], vec![-0.2, 0.0, 0.75, 1.2]).unwrap());
        let o = tape.spike(x, 0.5, 1.0).unwrap();
        assert_eq!(tape.value(o).data(), &[0.0, 0.0, 1.0, 1.0]);
        let loss = tape.sum(o).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, 1.0, 0.0]);
    }
}
