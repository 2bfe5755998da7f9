//! Sequential convolutional network evaluator with strided and transposed
//! layers, activations that vanish at zero, sparse-matrix views of the linear
//! layers, and a weights-manifest file format.
//!
//! The network boundary rule defaults to zero padding so every linear layer
//! is one fixed sparse matrix plus a bias; that is what makes the
//! activation-freeze analysis exact. Activations are restricted to kinds with
//! `sigma(0) = 0` so the gain `sigma(z)/z` extends to 1 at zero.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::resample::DEFAULT_OPERATOR_CAP;
use crate::sparse::SparseOperator;
use crate::tensor::{BoundaryRule, Tensor};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Elementwise nonlinearity with `sigma(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    /// One slope per channel.
    PRelu(Vec<f64>),
    Identity,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu(_) => "leaky-relu",
            Activation::PRelu(_) => "prelu",
            Activation::Identity => "identity",
        }
    }

    /// `sigma(z)` for channel `ch`.
    pub fn apply(&self, z: f64, ch: usize) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(alpha) => {
                if z > 0.0 {
                    z
                } else {
                    alpha * z
                }
            }
            Activation::PRelu(alphas) => {
                if z > 0.0 {
                    z
                } else {
                    alphas[ch] * z
                }
            }
            Activation::Identity => z,
        }
    }

    /// Slope `sigma(z)/z`, taken as 1 at `z = 0`. Computed by branch, not
    /// division, so `gain * z` reproduces `sigma(z)` without rounding.
    pub fn gain(&self, z: f64, ch: usize) -> f64 {
        match self {
            Activation::Relu => {
                if z < 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
            Activation::LeakyRelu(alpha) => {
                if z < 0.0 {
                    *alpha
                } else {
                    1.0
                }
            }
            Activation::PRelu(alphas) => {
                if z < 0.0 {
                    alphas[ch]
                } else {
                    1.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Linear layer shape: plain, decimating, or expanding convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerOp {
    Conv,
    StridedConv(usize),
    TransposedConv(usize),
}

impl LayerOp {
    pub fn stride(&self) -> usize {
        match self {
            LayerOp::Conv => 1,
            LayerOp::StridedConv(s) | LayerOp::TransposedConv(s) => *s,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerOp::Conv => "conv",
            LayerOp::StridedConv(_) => "strided-conv",
            LayerOp::TransposedConv(_) => "transposed-conv",
        }
    }
}

/// Weights, bias, and geometry of one linear layer. Weights are ordered
/// `(out-channel, in-channel, row, col)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub op: LayerOp,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub boundary: BoundaryRule,
}

impl LinearLayer {
    pub fn new(
        op: LayerOp,
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        boundary: BoundaryRule,
    ) -> Result<LinearLayer> {
        if in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 {
            return Err(Error::InvalidArgument {
                detail: "layer channels and kernel extents must be positive".to_string(),
            });
        }
        if op.stride() == 0 {
            return Err(Error::InvalidArgument {
                detail: "layer stride must be at least 1".to_string(),
            });
        }
        let expected = out_channels * in_channels * kernel_h * kernel_w;
        if weights.len() != expected {
            return Err(Error::DimMismatch {
                context: "layer weights".to_string(),
                expected: format!("{expected} taps"),
                actual: format!("{} taps", weights.len()),
            });
        }
        if bias.len() != out_channels {
            return Err(Error::DimMismatch {
                context: "layer bias".to_string(),
                expected: format!("{out_channels} entries"),
                actual: format!("{} entries", bias.len()),
            });
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "layer weights".to_string(),
            });
        }
        Ok(LinearLayer {
            op,
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            weights,
            bias,
            boundary,
        })
    }

    #[inline]
    pub fn weight(&self, oc: usize, ic: usize, i: usize, j: usize) -> f64 {
        self.weights[((oc * self.in_channels + ic) * self.kernel_h + i) * self.kernel_w + j]
    }

    /// Kernel anchor: the center, rounded down for even extents.
    pub fn anchor(&self) -> (usize, usize) {
        ((self.kernel_h - 1) / 2, (self.kernel_w - 1) / 2)
    }

    /// Output dims for an input of `in_dims`; strided layers require
    /// divisible spatial extents.
    pub fn output_dims(&self, in_dims: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let (h, w, _) = in_dims;
        match self.op {
            LayerOp::Conv => Ok((h, w, self.out_channels)),
            LayerOp::StridedConv(s) => {
                if h % s != 0 {
                    return Err(Error::NotDivisible {
                        axis: "height",
                        size: h,
                        divisor: s,
                        pad: (s - h % s) % s,
                    });
                }
                if w % s != 0 {
                    return Err(Error::NotDivisible {
                        axis: "width",
                        size: w,
                        divisor: s,
                        pad: (s - w % s) % s,
                    });
                }
                Ok((h / s, w / s, self.out_channels))
            }
            LayerOp::TransposedConv(s) => Ok((h * s, w * s, self.out_channels)),
        }
    }

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let (oh, ow, oc_count) = self.output_dims(x.dims())?;
        let (h, w, _) = x.dims();
        let (ar, ac) = self.anchor();
        match self.op {
            LayerOp::Conv | LayerOp::StridedConv(_) => {
                let s = self.op.stride();
                let mut out = Tensor::zeros(oh, ow, oc_count);
                for r in 0..oh {
                    for c in 0..ow {
                        for oc in 0..oc_count {
                            let mut acc = self.bias[oc];
                            for ic in 0..self.in_channels {
                                for i in 0..self.kernel_h {
                                    let src_r = (s * r) as isize - (i as isize - ar as isize);
                                    let Some(fr) = self.boundary.fold(src_r, h) else { continue };
                                    for j in 0..self.kernel_w {
                                        let src_c = (s * c) as isize - (j as isize - ac as isize);
                                        let Some(fc) = self.boundary.fold(src_c, w) else {
                                            continue;
                                        };
                                        acc += self.weight(oc, ic, i, j) * x.get(fr, fc, ic);
                                    }
                                }
                            }
                            out.set(r, c, oc, acc);
                        }
                    }
                }
                Ok(out)
            }
            LayerOp::TransposedConv(s) => {
                // Exact adjoint of the strided gather: scatter each input
                // sample through the taps, folding targets by the boundary
                // rule.
                let mut out = Tensor::from_fn(oh, ow, oc_count, |_, _, oc| self.bias[oc]);
                for r in 0..h {
                    for c in 0..w {
                        for oc in 0..oc_count {
                            for ic in 0..self.in_channels {
                                let v = x.get(r, c, ic);
                                for i in 0..self.kernel_h {
                                    let dst_r = (s * r) as isize - (i as isize - ar as isize);
                                    let Some(fr) = self.boundary.fold(dst_r, oh) else { continue };
                                    for j in 0..self.kernel_w {
                                        let dst_c = (s * c) as isize - (j as isize - ac as isize);
                                        let Some(fc) = self.boundary.fold(dst_c, ow) else {
                                            continue;
                                        };
                                        let acc =
                                            out.get(fr, fc, oc) + self.weight(oc, ic, i, j) * v;
                                        out.set(fr, fc, oc, acc);
                                    }
                                }
                            }
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Sparse matrix acting on the vectorized input, plus the broadcast bias
    /// vector; matrix action + bias equals [`ConvNet::forward`] through this
    /// layer.
    pub fn matrix(&self, in_dims: (usize, usize, usize)) -> Result<(SparseOperator, Vec<f64>)> {
        let (h, w, ic_count) = in_dims;
        if ic_count != self.in_channels {
            return Err(Error::DimMismatch {
                context: "layer matrix input channels".to_string(),
                expected: format!("{}", self.in_channels),
                actual: format!("{ic_count}"),
            });
        }
        let (oh, ow, oc_count) = self.output_dims(in_dims)?;
        let rows = oh * ow * oc_count;
        let cols = h * w * ic_count;
        if rows.saturating_mul(cols) > DEFAULT_OPERATOR_CAP {
            return Err(Error::CapExceeded {
                context: "layer matrix",
                required: rows.saturating_mul(cols),
                cap: DEFAULT_OPERATOR_CAP,
            });
        }
        let (ar, ac) = self.anchor();
        let in_idx = |r: usize, c: usize, ch: usize| (r * w + c) * ic_count + ch;
        let out_idx = |r: usize, c: usize, ch: usize| (r * ow + c) * oc_count + ch;
        let mut entries = Vec::new();
        let mut bias = vec![0.0; rows];
        for r in 0..oh {
            for c in 0..ow {
                for oc in 0..oc_count {
                    bias[out_idx(r, c, oc)] = self.bias[oc];
                }
            }
        }
        match self.op {
            LayerOp::Conv | LayerOp::StridedConv(_) => {
                let s = self.op.stride();
                for r in 0..oh {
                    for c in 0..ow {
                        for i in 0..self.kernel_h {
                            let src_r = (s * r) as isize - (i as isize - ar as isize);
                            let Some(fr) = self.boundary.fold(src_r, h) else { continue };
                            for j in 0..self.kernel_w {
                                let src_c = (s * c) as isize - (j as isize - ac as isize);
                                let Some(fc) = self.boundary.fold(src_c, w) else { continue };
                                for oc in 0..oc_count {
                                    for ic in 0..self.in_channels {
                                        entries.push((
                                            out_idx(r, c, oc),
                                            in_idx(fr, fc, ic),
                                            self.weight(oc, ic, i, j),
                                        ));
                                    }
                                }
                            }
                        }
                    }
                }
            }
            LayerOp::TransposedConv(s) => {
                for r in 0..h {
                    for c in 0..w {
                        for i in 0..self.kernel_h {
                            let dst_r = (s * r) as isize - (i as isize - ar as isize);
                            let Some(fr) = self.boundary.fold(dst_r, oh) else { continue };
                            for j in 0..self.kernel_w {
                                let dst_c = (s * c) as isize - (j as isize - ac as isize);
                                let Some(fc) = self.boundary.fold(dst_c, ow) else { continue };
                                for oc in 0..oc_count {
                                    for ic in 0..self.in_channels {
                                        entries.push((
                                            out_idx(fr, fc, oc),
                                            in_idx(r, c, ic),
                                            self.weight(oc, ic, i, j),
                                        ));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((SparseOperator::from_entries(rows, cols, entries)?, bias))
    }
}

/// One network layer: a linear map or an activation.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Linear(LinearLayer),
    Activation(Activation),
}

/// Sparse matrix and bias of a linear layer; activations have none.
pub fn layer_matrix(
    layer: &LayerSpec,
    index: usize,
    in_dims: (usize, usize, usize),
) -> Result<(SparseOperator, Vec<f64>)> {
    match layer {
        LayerSpec::Linear(l) => l.matrix(in_dims),
        LayerSpec::Activation(_) => Err(Error::NonlinearLayer { index }),
    }
}

/// Ordered layers plus the declared input channel count; the channel chain is
/// validated at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    layers: Vec<LayerSpec>,
    in_channels: usize,
}

impl ConvNet {
    pub fn new(in_channels: usize, layers: Vec<LayerSpec>) -> Result<ConvNet> {
        if in_channels == 0 {
            return Err(Error::InvalidArgument {
                detail: "network input channel count must be positive".to_string(),
            });
        }
        let mut channels = in_channels;
        for (index, layer) in layers.iter().enumerate() {
            match layer {
                LayerSpec::Linear(l) => {
                    if l.in_channels != channels {
                        return Err(Error::ChannelMismatch {
                            layer: index,
                            expected: l.in_channels,
                            actual: channels,
                        });
                    }
                    channels = l.out_channels;
                }
                LayerSpec::Activation(Activation::PRelu(alphas)) => {
                    if alphas.len() != channels {
                        return Err(Error::ChannelMismatch {
                            layer: index,
                            expected: alphas.len(),
                            actual: channels,
                        });
                    }
                }
                LayerSpec::Activation(_) => {}
            }
        }
        Ok(ConvNet {
            layers,
            in_channels,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    /// Channel count of the final output.
    pub fn out_channels(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                LayerSpec::Linear(l) => Some(l.out_channels),
                LayerSpec::Activation(_) => None,
            })
            .unwrap_or(self.in_channels)
    }

    /// Copy with every bias zeroed; the linear part is unchanged.
    pub fn with_zero_biases(&self) -> ConvNet {
        let layers = self
            .layers
            .iter()
            .map(|layer| match layer {
                LayerSpec::Linear(l) => {
                    let mut l = l.clone();
                    l.bias = vec![0.0; l.out_channels];
                    LayerSpec::Linear(l)
                }
                other => other.clone(),
            })
            .collect();
        ConvNet {
            layers,
            in_channels: self.in_channels,
        }
    }

    /// Sequential evaluation; with `record` set, the input and every layer
    /// output are retained.
    pub fn forward(&self, x: &Tensor, record: bool) -> Result<(Tensor, Option<ForwardRecord>)> {
        let mut outputs = if record {
            Vec::with_capacity(self.layers.len())
        } else {
            Vec::new()
        };
        let mut cur = x.clone();
        for (index, layer) in self.layers.iter().enumerate() {
            cur = apply_layer(layer, index, &cur)?;
            if record {
                outputs.push(cur.clone());
            }
        }
        let record = record.then(|| ForwardRecord {
            input: x.clone(),
            outputs,
        });
        Ok((cur, record))
    }

    /// Final output only.
    pub fn forward_output(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x, false)?.0)
    }

    /// Full per-layer record.
    pub fn forward_recorded(&self, x: &Tensor) -> Result<ForwardRecord> {
        Ok(self.forward(x, true)?.1.expect("record requested"))
    }
}

pub(crate) fn apply_layer(layer: &LayerSpec, index: usize, x: &Tensor) -> Result<Tensor> {
    match layer {
        LayerSpec::Linear(l) => {
            if x.channels() != l.in_channels {
                return Err(Error::ChannelMismatch {
                    layer: index,
                    expected: l.in_channels,
                    actual: x.channels(),
                });
            }
            l.apply(x)
        }
        LayerSpec::Activation(a) => {
            if let Activation::PRelu(alphas) = a {
                if alphas.len() != x.channels() {
                    return Err(Error::ChannelMismatch {
                        layer: index,
                        expected: alphas.len(),
                        actual: x.channels(),
                    });
                }
            }
            let (h, w, c) = x.dims();
            Ok(Tensor::from_fn(h, w, c, |r, cc, ch| {
                a.apply(x.get(r, cc, ch), ch)
            }))
        }
    }
}

/// Input and per-layer outputs of a recorded forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRecord {
    input: Tensor,
    outputs: Vec<Tensor>,
}

impl ForwardRecord {
    pub fn input(&self) -> &Tensor {
        &self.input
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Output of layer `index`.
    pub fn output(&self, index: usize) -> &Tensor {
        &self.outputs[index]
    }

    /// Input seen by layer `index`; for an activation layer this is its
    /// pre-activation tensor.
    pub fn layer_input(&self, index: usize) -> &Tensor {
        if index == 0 {
            &self.input
        } else {
            &self.outputs[index - 1]
        }
    }

    pub fn final_output(&self) -> &Tensor {
        self.outputs.last().unwrap_or(&self.input)
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestLayer {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    in_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_h: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_w: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offset: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    activation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alphas: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    input_channels: usize,
    weights: String,
    layers: Vec<ManifestLayer>,
}

fn manifest_field(value: Option<usize>, field: &'static str) -> Result<usize> {
    value.ok_or(Error::Malformed {
        format: "network manifest",
        field,
        detail: "missing".to_string(),
    })
}

/// Loads a network from a manifest and its companion little-endian `f64`
/// weights blob. Per layer, the blob holds the weights in
/// `(out-channel, in-channel, row, col)` order followed by the biases.
pub fn load_network(manifest_path: &Path) -> Result<ConvNet> {
    let text = std::fs::read_to_string(manifest_path)?;
    let doc: ManifestDoc = serde_json::from_str(&text)?;
    let blob_path = manifest_path
        .parent()
        .map(|p| p.join(&doc.weights))
        .unwrap_or_else(|| doc.weights.clone().into());
    let blob = std::fs::read(&blob_path)?;
    let mut layers = Vec::with_capacity(doc.layers.len());
    for ml in &doc.layers {
        match ml.kind.as_str() {
            "conv" | "strided-conv" | "transposed-conv" => {
                let in_channels = manifest_field(ml.in_channels, "in_channels")?;
                let out_channels = manifest_field(ml.out_channels, "out_channels")?;
                let kernel_h = manifest_field(ml.kernel_h, "kernel_h")?;
                let kernel_w = manifest_field(ml.kernel_w, "kernel_w")?;
                let stride = ml.stride.unwrap_or(1);
                let offset = manifest_field(ml.offset, "offset")?;
                let op = match ml.kind.as_str() {
                    "conv" => LayerOp::Conv,
                    "strided-conv" => LayerOp::StridedConv(stride),
                    _ => LayerOp::TransposedConv(stride),
                };
                let boundary = match &ml.boundary {
                    None => BoundaryRule::ZeroPad,
                    Some(name) => name.parse()?,
                };
                let w_count = out_channels * in_channels * kernel_h * kernel_w;
                let total = w_count + out_channels;
                let end = offset + total * 8;
                if blob.len() < end {
                    return Err(Error::TruncatedBlob {
                        expected: end,
                        actual: blob.len(),
                    });
                }
                let mut values = Vec::with_capacity(total);
                for chunk in blob[offset..end].chunks_exact(8) {
                    values.push(f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")));
                }
                let bias = values.split_off(w_count);
                layers.push(LayerSpec::Linear(LinearLayer::new(
                    op,
                    in_channels,
                    out_channels,
                    kernel_h,
                    kernel_w,
                    values,
                    bias,
                    boundary,
                )?));
            }
            "activation" => {
                let name = ml.activation.as_deref().ok_or(Error::Malformed {
                    format: "network manifest",
                    field: "activation",
                    detail: "missing".to_string(),
                })?;
                let act = match name {
                    "relu" => Activation::Relu,
                    "leaky-relu" => Activation::LeakyRelu(ml.alpha.ok_or(Error::Malformed {
                        format: "network manifest",
                        field: "alpha",
                        detail: "missing for leaky-relu".to_string(),
                    })?),
                    "prelu" => Activation::PRelu(ml.alphas.clone().ok_or(Error::Malformed {
                        format: "network manifest",
                        field: "alphas",
                        detail: "missing for prelu".to_string(),
                    })?),
                    "identity" => Activation::Identity,
                    other => {
                        return Err(Error::UnknownName {
                            what: "activation",
                            name: other.to_string(),
                        })
                    }
                };
                layers.push(LayerSpec::Activation(act));
            }
            other => {
                return Err(Error::UnknownName {
                    what: "layer kind",
                    name: other.to_string(),
                })
            }
        }
    }
    ConvNet::new(doc.input_channels, layers)
}

/// Writes the manifest at `manifest_path` and the weights blob next to it
/// (same name, `.bin` extension). Loading the pair reproduces the network
/// with bit-exact weights.
pub fn save_network(net: &ConvNet, manifest_path: &Path) -> Result<()> {
    let blob_path = manifest_path.with_extension("bin");
    let blob_name = blob_path
        .file_name()
        .ok_or(Error::Unsupported {
            detail: "manifest path has no file name".to_string(),
        })?
        .to_string_lossy()
        .into_owned();
    let mut blob: Vec<u8> = Vec::new();
    let mut layers = Vec::with_capacity(net.layers().len());
    for layer in net.layers() {
        match layer {
            LayerSpec::Linear(l) => {
                let offset = blob.len();
                for v in l.weights.iter().chain(l.bias.iter()) {
                    blob.extend_from_slice(&v.to_le_bytes());
                }
                layers.push(ManifestLayer {
                    kind: l.op.kind_name().to_string(),
                    in_channels: Some(l.in_channels),
                    out_channels: Some(l.out_channels),
                    kernel_h: Some(l.kernel_h),
                    kernel_w: Some(l.kernel_w),
                    stride: Some(l.op.stride()),
                    offset: Some(offset),
                    boundary: Some(l.boundary.to_string()),
                    activation: None,
                    alpha: None,
                    alphas: None,
                });
            }
            LayerSpec::Activation(a) => {
                let (alpha, alphas) = match a {
                    Activation::LeakyRelu(alpha) => (Some(*alpha), None),
                    Activation::PRelu(alphas) => (None, Some(alphas.clone())),
                    _ => (None, None),
                };
                layers.push(ManifestLayer {
                    kind: "activation".to_string(),
                    in_channels: None,
                    out_channels: None,
                    kernel_h: None,
                    kernel_w: None,
                    stride: None,
                    offset: None,
                    boundary: None,
                    activation: Some(a.name().to_string()),
                    alpha,
                    alphas,
                });
            }
        }
    }
    let doc = ManifestDoc {
        input_channels: net.in_channels(),
        weights: blob_name,
        layers,
    };
    let text = serde_json::to_string_pretty(&doc)?;
    write_atomic(manifest_path, text.as_bytes())?;
    write_atomic(&blob_path, &blob)?;
    Ok(())
}

fn random_linear(
    rng: &mut ChaCha8Rng,
    op: LayerOp,
    in_channels: usize,
    out_channels: usize,
) -> LinearLayer {
    let kernel_h = 3;
    let kernel_w = 3;
    let count = out_channels * in_channels * kernel_h * kernel_w;
    let scale = 1.0 / (in_channels * kernel_h * kernel_w) as f64;
    let weights: Vec<f64> = (0..count).map(|_| rng.gen_range(-1.0..1.0) * scale * 3.0).collect();
    let bias: Vec<f64> = (0..out_channels).map(|_| rng.gen_range(-0.2..0.2)).collect();
    LinearLayer::new(
        op,
        in_channels,
        out_channels,
        kernel_h,
        kernel_w,
        weights,
        bias,
        BoundaryRule::ZeroPad,
    )
    .expect("generated layer dims are consistent")
}

/// Seeded random network: 2 to 4 linear layers mixing plain, strided, and
/// transposed convolutions (at most two strided so small inputs stay
/// divisible), each followed by ReLU or leaky ReLU except the last.
pub fn toy_net(seed: u64, in_channels: usize, out_channels: usize) -> ConvNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(2..=4usize);
    let mut layers = Vec::new();
    let mut channels = in_channels;
    let mut strided_used = 0usize;
    for layer_index in 0..depth {
        let last = layer_index + 1 == depth;
        let next = if last { out_channels } else { rng.gen_range(2..=4usize) };
        let op = match rng.gen_range(0..3u32) {
            0 if strided_used < 2 => {
                strided_used += 1;
                LayerOp::StridedConv(2)
            }
            1 => LayerOp::TransposedConv(2),
            _ => LayerOp::Conv,
        };
        layers.push(LayerSpec::Linear(random_linear(&mut rng, op, channels, next)));
        channels = next;
        if !last {
            let act = if rng.gen_bool(0.5) {
                Activation::Relu
            } else {
                Activation::LeakyRelu(0.2)
            };
            layers.push(LayerSpec::Activation(act));
        }
    }
    ConvNet::new(in_channels, layers).expect("generated chain is consistent")
}

/// Seeded single-stage module: one linear layer of the given shape followed
/// by a leaky ReLU. Building block for learned down/up operator pairs.
pub fn toy_module(seed: u64, in_channels: usize, out_channels: usize, op: LayerOp) -> ConvNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        LayerSpec::Linear(random_linear(&mut rng, op, in_channels, out_channels)),
        LayerSpec::Activation(Activation::LeakyRelu(0.2)),
    ];
    ConvNet::new(in_channels, layers).expect("generated chain is consistent")
}

/// Network operator pair for the multigrid recursion: a downscale module and
/// an upscale module that consumes the channel concatenation of reference and
/// refinement.
pub fn toy_network_pair(seed: u64, features: usize) -> crate::backprojection::OperatorPair {
    let down = Arc::new(toy_module(
        seed.wrapping_mul(2).wrapping_add(1),
        features,
        features,
        LayerOp::StridedConv(2),
    ));
    let up = Arc::new(toy_module(
        seed.wrapping_mul(2).wrapping_add(2),
        2 * features,
        features,
        LayerOp::TransposedConv(2),
    ));
    crate::backprojection::OperatorPair::network(down, up)
}
