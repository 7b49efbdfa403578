//! Network representation shared by the dense teacher and the spiking
//! student: layer parameter storage, seeded initialization, shape-chain
//! validation, and the dense forward passes (plain and tape-recorded).

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdnError};
use crate::snn::LifConfig;
use crate::tensor::{dense_forward, NodeId, Tape, Tensor};

/// Architecture description of one teacher layer, as written in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LayerDesc {
    Conv2d {
        filters: usize,
        kernel: usize,
        #[serde(default = "default_stride")]
        stride: usize,
    },
    Dense {
        units: usize,
    },
}

fn default_stride() -> usize {
    1
}

/// One parameterized layer. Weight layouts: dense `w` is `[out, in]`,
/// conv kernels are `[filters, in_channels, k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense { w: Tensor, b: Tensor },
    Conv2d { kernels: Tensor, bias: Tensor, stride: usize },
    LifDense { w: Tensor, b: Tensor },
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense { w, b } | Layer::LifDense { w, b } => w.len() + b.len(),
            Layer::Conv2d { kernels, bias, .. } => kernels.len() + bias.len(),
        }
    }

    /// Output shape produced from `input` (no batch dimension), validating
    /// compatibility. Dense layers accept any input by flattening it.
    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let flat: usize = input.iter().product();
        match self {
            Layer::Dense { w, b } | Layer::LifDense { w, b } => {
                let (o, i) = (w.shape()[0], w.shape()[1]);
                if i != flat || b.shape() != [o] {
                    return Err(SdnError::shape("dense layer", input, w.shape()));
                }
                Ok(vec![o])
            }
            Layer::Conv2d { kernels, bias, stride } => {
                let [f, c, kh, _kw] = match kernels.shape() {
                    [f, c, kh, kw] => [*f, *c, *kh, *kw],
                    other => return Err(SdnError::shape("conv kernels", other, &[0, 0, 0, 0])),
                };
                let (ic, h, w) = match input {
                    [ic, h, w] => (*ic, *h, *w),
                    other => return Err(SdnError::shape("conv input", other, &[0, 0, 0])),
                };
                if ic != c || kh > h || kh > w || bias.shape() != [f] {
                    return Err(SdnError::shape("conv layer", input, kernels.shape()));
                }
                if *stride == 0 {
                    return Err(SdnError::parameter("stride", "must be >= 1"));
                }
                Ok(vec![
                    f,
                    crate::tensor::conv_out_dim(h, kh, *stride),
                    crate::tensor::conv_out_dim(w, kh, *stride),
                ])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    Dnn,
    Snn,
}

/// A validated feed-forward network: either a conventional dense/conv
/// network (teacher) or a stack of LIF-dense layers (student).
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub kind: NetworkKind,
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
    /// Present exactly when `kind == Snn`.
    pub lif: Option<LifConfig>,
}

fn init_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let data: Vec<f64> = (0..shape.iter().product::<usize>())
        .map(|_| dist.sample(rng))
        .collect();
    Tensor::from_vec(shape, data).expect("shape/data length agree by construction")
}

impl Network {
    /// Builds a conventional network from layer descriptions with seeded
    /// uniform `±1/\sqrt{fan_in}` weights and zero biases. Layers run in
    /// order with ReLU between them and a linear final output; the first
    /// dense layer after a conv stack flattens implicitly.
    pub fn dnn(input_shape: &[usize], descs: &[LayerDesc], seed: u64) -> Result<Self> {
        if descs.is_empty() {
            return Err(SdnError::Contract("network needs at least one layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(descs.len());
        for desc in descs {
            let layer = match *desc {
                LayerDesc::Conv2d { filters, kernel, stride } => {
                    let c = match shape[..] {
                        [c, _, _] => c,
                        _ => {
                            return Err(SdnError::shape("conv input", &shape, &[0, 0, 0]));
                        }
                    };
                    if kernel == 0 {
                        return Err(SdnError::parameter("kernel", "must be >= 1"));
                    }
                    let fan_in = c * kernel * kernel;
                    Layer::Conv2d {
                        kernels: init_uniform(&[filters, c, kernel, kernel], fan_in, &mut rng),
                        bias: Tensor::zeros(&[filters]),
                        stride,
                    }
                }
                LayerDesc::Dense { units } => {
                    let fan_in: usize = shape.iter().product();
                    Layer::Dense {
                        w: init_uniform(&[units, fan_in], fan_in, &mut rng),
                        b: Tensor::zeros(&[units]),
                    }
                }
            };
            shape = layer.out_shape(&shape)?;
            layers.push(layer);
        }
        let net = Network {
            kind: NetworkKind::Dnn,
            input_shape: input_shape.to_vec(),
            layers,
            lif: None,
        };
        net.validate()?;
        Ok(net)
    }

    /// Builds a spiking network of LIF-dense layers. `widths` lists each
    /// layer's output width, ending at the action count.
    pub fn snn(input_dim: usize, widths: &[usize], lif: LifConfig, seed: u64) -> Result<Self> {
        if widths.is_empty() {
            return Err(SdnError::Contract("network needs at least one layer".into()));
        }
        lif.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = input_dim;
        let mut layers = Vec::with_capacity(widths.len());
        for &width in widths {
            if width == 0 {
                return Err(SdnError::parameter("widths", "layer width must be >= 1"));
            }
            layers.push(Layer::LifDense {
                w: init_uniform(&[width, fan_in], fan_in, &mut rng),
                b: Tensor::zeros(&[width]),
            });
            fan_in = width;
        }
        let net = Network {
            kind: NetworkKind::Snn,
            input_shape: vec![input_dim],
            layers,
            lif: Some(lif),
        };
        net.validate()?;
        Ok(net)
    }

    /// Checks kind/layer agreement and that shapes chain input to output.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(SdnError::Contract("network has no layers".into()));
        }
        match self.kind {
            NetworkKind::Dnn => {
                if self.lif.is_some() {
                    return Err(SdnError::Contract("dnn carries LIF configuration".into()));
                }
                if self.layers.iter().any(|l| matches!(l, Layer::LifDense { .. })) {
                    return Err(SdnError::Contract("dnn contains a lif-dense layer".into()));
                }
            }
            NetworkKind::Snn => {
                let lif = self
                    .lif
                    .as_ref()
                    .ok_or_else(|| SdnError::Contract("snn without LIF configuration".into()))?;
                lif.validate()?;
                if !self.layers.iter().all(|l| matches!(l, Layer::LifDense { .. })) {
                    return Err(SdnError::Contract("snn layers must all be lif-dense".into()));
                }
            }
        }
        let mut shape = self.input_shape.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.out_shape(&shape).map_err(|e| {
                SdnError::Contract(format!("layer {i} breaks the shape chain: {e}"))
            })?;
        }
        if shape.len() != 1 {
            return Err(SdnError::Contract(format!(
                "network output must be a vector, got shape {shape:?}"
            )));
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Output width (action count).
    pub fn output_dim(&self) -> usize {
        let mut shape = self.input_shape.clone();
        for layer in &self.layers {
            shape = layer.out_shape(&shape).expect("validated network");
        }
        shape[0]
    }

    /// Per-layer output widths, for the spiking forward pass.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut shape = self.input_shape.clone();
        let mut widths = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer.out_shape(&shape).expect("validated network");
            widths.push(shape.iter().product());
        }
        widths
    }

    /// Flat parameter views in a stable order: per layer, weights then bias.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Dense { w, b } | Layer::LifDense { w, b } => [w, b],
                Layer::Conv2d { kernels, bias, .. } => [kernels, bias],
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| match l {
                Layer::Dense { w, b } | Layer::LifDense { w, b } => [w, b],
                Layer::Conv2d { kernels, bias, .. } => [kernels, bias],
            })
            .collect()
    }

    /// Plain batched forward pass for a `Dnn`: ReLU between layers, linear
    /// output. `x` is `[N, ...input_shape]`.
    pub fn forward_dnn(&self, x: &Tensor) -> Result<Tensor> {
        if self.kind != NetworkKind::Dnn {
            return Err(SdnError::Contract("forward_dnn on a spiking network".into()));
        }
        let n = self.batch_of(x)?;
        let mut cur = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match layer {
                Layer::Dense { w, b } => {
                    let flat = cur.len() / n;
                    dense_forward(&cur.reshaped(&[n, flat])?, w, b)?
                }
                Layer::Conv2d { kernels, bias, stride } => {
                    crate::tensor::conv2d_batch(&cur, kernels, bias, *stride)?
                }
                Layer::LifDense { .. } => unreachable!("validated dnn"),
            };
            if i != last {
                cur = cur.map(|v| if v > 0.0 { v } else { 0.0 });
            }
        }
        Ok(cur)
    }

    /// Tape-recorded forward pass for training. Returns the output node and
    /// the parameter nodes in [`Network::params`] order.
    pub fn record_dnn(&self, tape: &mut Tape, x: NodeId) -> Result<(NodeId, Vec<NodeId>)> {
        if self.kind != NetworkKind::Dnn {
            return Err(SdnError::Contract("record_dnn on a spiking network".into()));
        }
        let n = self.batch_of(tape.value(x))?;
        let mut cur = x;
        let mut param_nodes = Vec::with_capacity(self.layers.len() * 2);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match layer {
                Layer::Dense { w, b } => {
                    let flat = tape.value(cur).len() / n;
                    let xin = tape.reshape(cur, &[n, flat])?;
                    let wn = tape.param(w.clone());
                    let bn = tape.param(b.clone());
                    param_nodes.push(wn);
                    param_nodes.push(bn);
                    tape.linear(xin, wn, bn)?
                }
                Layer::Conv2d { kernels, bias, stride } => {
                    let kn = tape.param(kernels.clone());
                    let bn = tape.param(bias.clone());
                    param_nodes.push(kn);
                    param_nodes.push(bn);
                    tape.conv2d(cur, kn, bn, *stride)?
                }
                Layer::LifDense { .. } => unreachable!("validated dnn"),
            };
            if i != last {
                cur = tape.relu(cur)?;
            }
        }
        Ok((cur, param_nodes))
    }

    /// Leading batch size of `x`, validating the trailing dims against the
    /// network input shape (flattened comparison for dense-input networks).
    fn batch_of(&self, x: &Tensor) -> Result<usize> {
        let in_len: usize = self.input_shape.iter().product();
        let shape = x.shape();
        if shape.is_empty() || shape[1..].iter().product::<usize>() != in_len {
            return Err(SdnError::shape("network input", shape, &self.input_shape));
        }
        Ok(shape[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn teacher_descs() -> Vec<LayerDesc> {
        vec![
            LayerDesc::Conv2d { filters: 4, kernel: 3, stride: 2 },
            LayerDesc::Dense { units: 8 },
            LayerDesc::Dense { units: 2 },
        ]
    }

    #[test]
    fn dnn_builder_chains_shapes() {
        let net = Network::dnn(&[2, 16, 16], &teacher_descs(), 7).unwrap();
        assert_eq!(net.layer_count(), 3);
        assert_eq!(net.output_dim(), 2);
        // conv: 4 * (2*3*3) + 4; dense: 4*7*7 -> 8 and 8 -> 2.
        assert_eq!(net.param_count(), 76 + (196 * 8 + 8) + (8 * 2 + 2));
    }

    #[test]
    fn init_is_seed_deterministic_and_seed_sensitive() {
        let a = Network::dnn(&[1, 8, 8], &teacher_descs()[1..].to_vec(), 3).unwrap();
        let b = Network::dnn(&[1, 8, 8], &teacher_descs()[1..].to_vec(), 3).unwrap();
        let c = Network::dnn(&[1, 8, 8], &teacher_descs()[1..].to_vec(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn biases_start_at_zero_weights_bounded() {
        let net = Network::snn(16, &[4, 2], LifConfig::default(), 11).unwrap();
        for layer in &net.layers {
            let Layer::LifDense { w, b } = layer else { unreachable!() };
            assert!(b.data().iter().all(|&v| v == 0.0));
            let bound = 1.0 / (w.shape()[1] as f64).sqrt();
            assert!(w.data().iter().all(|&v| v.abs() <= bound));
        }
    }

    #[test]
    fn forward_matches_recorded_forward() {
        let net = Network::dnn(&[2, 16, 16], &teacher_descs(), 5).unwrap();
        let x = Tensor::from_fn(&[3, 2, 16, 16], |i| ((i * 37) % 11) as f64 / 11.0);
        let plain = net.forward_dnn(&x).unwrap();
        let mut tape = Tape::new();
        let xn = tape.leaf(x);
        let (out, params) = net.record_dnn(&mut tape, xn).unwrap();
        assert_eq!(tape.value(out), &plain);
        assert_eq!(params.len(), 6);
    }

    #[test]
    fn validate_rejects_mixed_kinds() {
        let mut net = Network::snn(4, &[2], LifConfig::default(), 0).unwrap();
        net.kind = NetworkKind::Dnn;
        assert!(net.validate().is_err());
    }

    #[test]
    fn rejects_zero_kernel() {
        let descs = [LayerDesc::Conv2d { filters: 2, kernel: 0, stride: 1 }];
        assert!(Network::dnn(&[1, 8, 8], &descs, 0).is_err());
    }

    #[test]
    fn even_kernels_are_valid() {
        // 4-wide windows at stride 2 tile a 16-cell edge exactly, covering
        // the last column -- a geometry the default teacher relies on.
        let descs = [
            LayerDesc::Conv2d { filters: 2, kernel: 4, stride: 2 },
            LayerDesc::Dense { units: 3 },
        ];
        let net = Network::dnn(&[1, 16, 16], &descs, 0).unwrap();
        let conv = net.layers.first().unwrap();
        let Layer::Conv2d { kernels, .. } = conv else { panic!("expected conv layer") };
        assert_eq!(kernels.shape(), &[2, 1, 4, 4]);
        // (16 - 4) / 2 + 1 = 7 pixels per edge feed the dense head.
        let out = net.forward_dnn(&Tensor::zeros(&[1, 1, 16, 16])).unwrap();
        assert_eq!(out.shape(), &[1, 3]);
    }
}
