//! Deterministic binary serialization of networks ("SDNM" v1) and the
//! capacity comparison report.
//!
//! # Format (all integers little-endian)
//!
//! ```text
//! magic          4 bytes  "SDNM"
//! version        u32      1
//! kind           u8       0 = dnn, 1 = snn
//! input rank     u32
//! input dims     u32 x rank
//! layer count    u32
//! per layer:
//!   layer kind   u8       0 = dense, 1 = conv2d, 2 = lif-dense
//!   dim count    u32
//!   dims         u32 x count   dense/lif-dense: [out, in]
//!                              conv2d: [filters, in_ch, k, k, stride]
//!   parameters   f32 x n  weights row-major, then biases
//! snn trailer (kind = 1 only):
//!   tau          f32
//!   v_thresh     f32
//!   surrogate_a  f32
//!   t_steps      u32
//!   detach_reset u8
//! ```
//!
//! Training runs in f64; parameters are rounded to f32 on save, so a
//! save/load round-trip is exact at 32-bit precision.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{FormatError, Result, SdnError};
use crate::network::{Layer, Network, NetworkKind};
use crate::snn::LifConfig;
use crate::tensor::Tensor;

const MAGIC: [u8; 4] = *b"SDNM";
const VERSION: u32 = 1;

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

fn layer_kind(layer: &Layer) -> u8 {
    match layer {
        Layer::Dense { .. } => 0,
        Layer::Conv2d { .. } => 1,
        Layer::LifDense { .. } => 2,
    }
}

/// Serializes the model to its byte representation. Deterministic: equal
/// models produce identical bytes.
pub fn to_bytes(net: &Network) -> Result<Vec<u8>> {
    net.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    push_u32(&mut out, VERSION);
    out.push(match net.kind {
        NetworkKind::Dnn => 0,
        NetworkKind::Snn => 1,
    });
    push_u32(&mut out, net.input_shape.len() as u32);
    for &d in &net.input_shape {
        push_u32(&mut out, d as u32);
    }
    push_u32(&mut out, net.layers.len() as u32);
    for layer in &net.layers {
        out.push(layer_kind(layer));
        let (dims, params): (Vec<usize>, [&Tensor; 2]) = match layer {
            Layer::Dense { w, b } | Layer::LifDense { w, b } => {
                (w.shape().to_vec(), [w, b])
            }
            Layer::Conv2d { kernels, bias, stride } => {
                let mut dims = kernels.shape().to_vec();
                dims.push(*stride);
                (dims, [kernels, bias])
            }
        };
        push_u32(&mut out, dims.len() as u32);
        for d in dims {
            push_u32(&mut out, d as u32);
        }
        for tensor in params {
            for &v in tensor.data() {
                push_f32(&mut out, v);
            }
        }
    }
    if net.kind == NetworkKind::Snn {
        let lif = net.lif.as_ref().expect("validated snn");
        push_f32(&mut out, lif.tau);
        push_f32(&mut out, lif.v_thresh);
        push_f32(&mut out, lif.surrogate_a);
        push_u32(&mut out, lif.t_steps as u32);
        out.push(lif.detach_reset as u8);
    }
    Ok(out)
}

/// Writes the model to `path`, returning the byte count written.
pub fn save(net: &Network, path: &Path) -> Result<usize> {
    let bytes = to_bytes(net)?;
    let mut file = fs::File::create(path).map_err(|e| SdnError::io(path, e))?;
    file.write_all(&bytes).map_err(|e| SdnError::io(path, e))?;
    Ok(bytes.len())
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        if self.offset + n > self.bytes.len() {
            return Err(FormatError::Truncated {
                offset: self.offset,
                expected: n,
                actual: self.bytes.len() - self.offset,
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u8(&mut self) -> std::result::Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> std::result::Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Parses a model from bytes, validating magic, version, tags, payload
/// length, and shape-chain consistency.
pub fn from_bytes(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, offset: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic { found: magic.try_into().expect("4 bytes") }.into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::Version { found: version, supported: VERSION }.into());
    }
    let kind_offset = r.offset;
    let kind = match r.u8()? {
        0 => NetworkKind::Dnn,
        1 => NetworkKind::Snn,
        tag => {
            return Err(FormatError::UnknownTag { what: "network kind", tag, offset: kind_offset }
                .into())
        }
    };
    let input_rank = r.u32()? as usize;
    let mut input_shape = Vec::with_capacity(input_rank);
    for _ in 0..input_rank {
        input_shape.push(r.u32()? as usize);
    }
    let layer_count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for idx in 0..layer_count {
        let tag_offset = r.offset;
        let tag = r.u8()?;
        let dim_count = r.u32()? as usize;
        let mut dims = Vec::with_capacity(dim_count);
        for _ in 0..dim_count {
            dims.push(r.u32()? as usize);
        }
        let mut read_tensor = |shape: &[usize]| -> std::result::Result<Tensor, FormatError> {
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(r.f32()? as f64);
            }
            Ok(Tensor::from_vec(shape, data).expect("length matches by construction"))
        };
        let layer = match tag {
            0 | 2 => {
                let [o, i] = match dims[..] {
                    [o, i] => [o, i],
                    _ => {
                        return Err(FormatError::ShapeChain {
                            layer: idx,
                            message: format!("dense layer with {dim_count} dims"),
                        }
                        .into())
                    }
                };
                let w = read_tensor(&[o, i])?;
                let b = read_tensor(&[o])?;
                if tag == 0 {
                    Layer::Dense { w, b }
                } else {
                    Layer::LifDense { w, b }
                }
            }
            1 => {
                let [f, c, kh, kw, stride] = match dims[..] {
                    [f, c, kh, kw, s] => [f, c, kh, kw, s],
                    _ => {
                        return Err(FormatError::ShapeChain {
                            layer: idx,
                            message: format!("conv layer with {dim_count} dims"),
                        }
                        .into())
                    }
                };
                let kernels = read_tensor(&[f, c, kh, kw])?;
                let bias = read_tensor(&[f])?;
                Layer::Conv2d { kernels, bias, stride }
            }
            tag => {
                return Err(
                    FormatError::UnknownTag { what: "layer kind", tag, offset: tag_offset }.into()
                )
            }
        };
        layers.push(layer);
    }
    let lif = if kind == NetworkKind::Snn {
        let tau = r.f32()? as f64;
        let v_thresh = r.f32()? as f64;
        let surrogate_a = r.f32()? as f64;
        let t_steps = r.u32()? as usize;
        let detach_offset = r.offset;
        let detach_reset = match r.u8()? {
            0 => false,
            1 => true,
            tag => {
                return Err(FormatError::UnknownTag {
                    what: "detach_reset flag",
                    tag,
                    offset: detach_offset,
                }
                .into())
            }
        };
        Some(LifConfig { tau, v_thresh, t_steps, surrogate_a, detach_reset })
    } else {
        None
    };
    if r.offset != bytes.len() {
        return Err(FormatError::TrailingBytes {
            offset: r.offset,
            extra: bytes.len() - r.offset,
        }
        .into());
    }
    let net = Network { kind, input_shape, layers, lif };
    net.validate().map_err(|e| {
        SdnError::Format(FormatError::ShapeChain { layer: 0, message: e.to_string() })
    })?;
    Ok(net)
}

pub fn load(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| SdnError::io(path, e))?;
    from_bytes(&bytes)
}

/// Serialized size without writing: header bytes plus 4 bytes per
/// parameter.
pub fn serialized_len(net: &Network) -> Result<usize> {
    Ok(to_bytes(net)?.len())
}

/// Capacity comparison of two models, Table-style: layer and parameter
/// counts, serialized bytes, and the larger/smaller byte ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityReport {
    pub layers_a: usize,
    pub layers_b: usize,
    pub params_a: usize,
    pub params_b: usize,
    pub bytes_a: u64,
    pub bytes_b: u64,
    /// larger / smaller serialized size, >= 1.
    pub ratio: f64,
}

impl CapacityReport {
    /// Ratio from raw byte sizes alone (layer/parameter counts unknown);
    /// used to reproduce published size comparisons.
    pub fn from_sizes(bytes_a: u64, bytes_b: u64) -> Result<Self> {
        if bytes_a == 0 || bytes_b == 0 {
            return Err(SdnError::parameter("capacity", "model sizes must be nonzero"));
        }
        Ok(Self {
            layers_a: 0,
            layers_b: 0,
            params_a: 0,
            params_b: 0,
            bytes_a,
            bytes_b,
            ratio: bytes_a.max(bytes_b) as f64 / bytes_a.min(bytes_b) as f64,
        })
    }
}

pub fn capacity_report(a: &Network, b: &Network) -> Result<CapacityReport> {
    let bytes_a = serialized_len(a)? as u64;
    let bytes_b = serialized_len(b)? as u64;
    let mut report = CapacityReport::from_sizes(bytes_a, bytes_b)?;
    report.layers_a = a.layer_count();
    report.layers_b = b.layer_count();
    report.params_a = a.param_count();
    report.params_b = b.param_count();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::LayerDesc;

    fn sample_dnn() -> Network {
        Network::dnn(
            &[2, 8, 8],
            &[
                LayerDesc::Conv2d { filters: 3, kernel: 3, stride: 2 },
                LayerDesc::Dense { units: 4 },
                LayerDesc::Dense { units: 2 },
            ],
            17,
        )
        .unwrap()
    }

    fn sample_snn() -> Network {
        Network::snn(16, &[5, 2], LifConfig::default(), 23).unwrap()
    }

    fn roundtrip(net: &Network) -> Network {
        from_bytes(&to_bytes(net).unwrap()).unwrap()
    }

    #[test]
    fn roundtrip_preserves_structure_and_f32_values() {
        for net in [sample_dnn(), sample_snn()] {
            let back = roundtrip(&net);
            assert_eq!(back.kind, net.kind);
            assert_eq!(back.input_shape, net.input_shape);
            assert_eq!(back.layer_count(), net.layer_count());
            assert_eq!(back.lif, net.lif);
            for (a, b) in net.params().iter().zip(back.params()) {
                assert_eq!(a.shape(), b.shape());
                for (&x, &y) in a.data().iter().zip(b.data()) {
                    assert_eq!(x as f32, y as f32);
                    assert_eq!(y, (y as f32) as f64);
                }
            }
        }
    }

    #[test]
    fn save_is_byte_deterministic_and_idempotent() {
        let net = sample_snn();
        let once = to_bytes(&net).unwrap();
        let twice = to_bytes(&net).unwrap();
        assert_eq!(once, twice);
        // Rounding already happened, so a second round-trip is exact.
        let again = to_bytes(&roundtrip(&net)).unwrap();
        assert_eq!(once, again);
    }

    #[test]
    fn dense_payload_size_formula() {
        // A 4 -> 2 dense layer carries (4*2 + 2) * 4 = 40 parameter bytes.
        let net = Network::dnn(&[4], &[LayerDesc::Dense { units: 2 }], 0).unwrap();
        let bytes = to_bytes(&net).unwrap();
        let header = 4 + 4 + 1 + 4 + 4 + 4 + (1 + 4 + 2 * 4);
        assert_eq!(bytes.len(), header + 40);
        assert_eq!(bytes.len() - 4 * net.param_count(), header);
    }

    #[test]
    fn size_formula_holds_for_every_layer_kind() {
        for net in [sample_dnn(), sample_snn()] {
            let bytes = to_bytes(&net).unwrap();
            let param_bytes = 4 * net.param_count();
            assert!(bytes.len() > param_bytes);
            let header = bytes.len() - param_bytes;
            // Header must be exactly the structural bytes: recompute.
            let mut expect = 4 + 4 + 1 + 4 + 4 * net.input_shape.len() + 4;
            for layer in &net.layers {
                expect += 1 + 4;
                expect += match layer {
                    Layer::Dense { .. } | Layer::LifDense { .. } => 2 * 4,
                    Layer::Conv2d { .. } => 5 * 4,
                };
            }
            if net.kind == NetworkKind::Snn {
                expect += 4 + 4 + 4 + 4 + 1;
            }
            assert_eq!(header, expect);
        }
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut bytes = to_bytes(&sample_dnn()).unwrap();
        bytes[0] = b'X';
        match from_bytes(&bytes) {
            Err(SdnError::Format(FormatError::BadMagic { found })) => {
                assert_eq!(&found[1..], b"DNM");
            }
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let mut bytes = to_bytes(&sample_dnn()).unwrap();
        bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
        assert!(matches!(
            from_bytes(&bytes),
            Err(SdnError::Format(FormatError::Version { found: 9, supported: 1 }))
        ));
    }

    #[test]
    fn truncation_names_expected_and_actual() {
        let bytes = to_bytes(&sample_snn()).unwrap();
        match from_bytes(&bytes[..bytes.len() - 3]) {
            Err(SdnError::Format(FormatError::Truncated { expected, actual, .. })) => {
                assert!(expected > actual);
            }
            other => panic!("expected Truncated, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = to_bytes(&sample_dnn()).unwrap();
        bytes.push(0);
        assert!(matches!(
            from_bytes(&bytes),
            Err(SdnError::Format(FormatError::TrailingBytes { extra: 1, .. }))
        ));
    }

    #[test]
    fn inconsistent_shape_chain_is_rejected() {
        // Hand-build: dense [2, 4] following an input of 3 cannot chain.
        let mut net = sample_dnn();
        net.input_shape = vec![3, 8, 8];
        assert!(to_bytes(&net).is_err());

        // Same check on the load side: patch the stored input dim of a
        // valid file (offset 13: magic 4 + version 4 + kind 1 + rank 4).
        let good = Network::dnn(&[4], &[LayerDesc::Dense { units: 2 }], 0).unwrap();
        let mut bytes = to_bytes(&good).unwrap();
        bytes[13..17].copy_from_slice(&5u32.to_le_bytes());
        assert!(matches!(
            from_bytes(&bytes),
            Err(SdnError::Format(FormatError::ShapeChain { .. }))
        ));
    }

    #[test]
    fn capacity_identical_models_ratio_one() {
        let net = sample_snn();
        let report = capacity_report(&net, &net).unwrap();
        assert_eq!(report.ratio, 1.0);
        assert_eq!(report.bytes_a, report.bytes_b);
    }

    #[test]
    fn capacity_published_sizes_ratio() {
        let report = CapacityReport::from_sizes(892 * 1024, 5 * 1024).unwrap();
        assert!((report.ratio - 178.4).abs() < 0.01, "ratio {}", report.ratio);
    }

    #[test]
    fn save_and_load_via_files() {
        let dir = std::env::temp_dir().join("sdn-model-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.sdnm");
        let net = sample_snn();
        let written = save(&net, &path).unwrap();
        assert_eq!(written as u64, std::fs::metadata(&path).unwrap().len());
        let back = load(&path).unwrap();
        assert_eq!(back.lif, net.lif);
        std::fs::remove_file(&path).unwrap();
    }
}
