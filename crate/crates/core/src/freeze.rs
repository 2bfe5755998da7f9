//! Activation freezing: linearize a network around one input by recording the
//! elementwise slopes its activations took there, then rerunning with those
//! slopes as fixed gains.
//!
//! The frozen system is affine, `frozen(u) = F vec(u) + R`, and reproduces
//! the true forward pass exactly on the freezing input. The effective
//! residual `R` is the frozen response to a zero input; each column of the
//! effective filter `F` is the frozen impulse response to a one-hot input
//! minus `R`. Small instances can materialize `F` and `R` explicitly by
//! chaining layer matrices scaled row-wise by the gains.

use crate::convnet::{apply_layer, Activation, ConvNet, LayerSpec};
use crate::error::{Error, Result};
use crate::sparse::DenseMatrix;
use crate::tensor::{delta, devectorize, vectorize, Tensor};

/// Default entry cap on the vectors explicit filter matrices act on.
pub const DEFAULT_EXPLICIT_CAP: usize = 4096;

/// Elementwise slope `sigma(z)/z` with the value 1 at `z = 0`.
pub fn activation_gain(kind: &Activation, z: &Tensor) -> Tensor {
    let (h, w, c) = z.dims();
    Tensor::from_fn(h, w, c, |r, cc, ch| kind.gain(z.get(r, cc, ch), ch))
}

/// Per-layer gain tensors captured on the freezing input; only activation
/// layers carry one.
#[derive(Debug, Clone, PartialEq)]
pub struct GainRecord {
    gains: Vec<Option<Tensor>>,
}

impl GainRecord {
    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// Gain tensor of layer `index`, present only for activation layers.
    pub fn gain(&self, index: usize) -> Option<&Tensor> {
        self.gains.get(index).and_then(|g| g.as_ref())
    }
}

fn record_gains(net: &ConvNet, x: &Tensor) -> Result<Vec<Option<Tensor>>> {
    let record = net.forward_recorded(x)?;
    let mut gains = Vec::with_capacity(net.layers().len());
    for (index, layer) in net.layers().iter().enumerate() {
        match layer {
            LayerSpec::Activation(a) => {
                gains.push(Some(activation_gain(a, record.layer_input(index))))
            }
            LayerSpec::Linear(_) => gains.push(None),
        }
    }
    Ok(gains)
}

fn frozen_walk(net: &ConvNet, gains: &[Option<Tensor>], u: &Tensor) -> Result<Tensor> {
    let mut cur = u.clone();
    for (index, layer) in net.layers().iter().enumerate() {
        match layer {
            LayerSpec::Linear(_) => cur = apply_layer(layer, index, &cur)?,
            LayerSpec::Activation(_) => {
                let g = gains[index]
                    .as_ref()
                    .expect("gain recorded for every activation layer");
                cur = cur.hadamard(g)?;
            }
        }
    }
    Ok(cur)
}

/// A network linearized at one input: the recorded gains replace the
/// activations, making the map affine.
#[derive(Debug, Clone)]
pub struct FrozenSystem {
    net: ConvNet,
    gains: GainRecord,
    input_dims: (usize, usize, usize),
    residual: Tensor,
}

/// Records the activation gains of `net` at `x` and caches the effective
/// residual (the frozen response to zero).
pub fn freeze(net: &ConvNet, x: &Tensor) -> Result<FrozenSystem> {
    let gains = record_gains(net, x)?;
    let (h, w, c) = x.dims();
    let residual = frozen_walk(net, &gains, &Tensor::zeros(h, w, c))?;
    Ok(FrozenSystem {
        net: net.clone(),
        gains: GainRecord { gains },
        input_dims: x.dims(),
        residual,
    })
}

impl FrozenSystem {
    pub fn net(&self) -> &ConvNet {
        &self.net
    }

    pub fn gains(&self) -> &GainRecord {
        &self.gains
    }

    pub fn input_dims(&self) -> (usize, usize, usize) {
        self.input_dims
    }

    /// Runs the gain-frozen forward pass on any input of the freezing dims.
    pub fn frozen_forward(&self, u: &Tensor) -> Result<Tensor> {
        if u.dims() != self.input_dims {
            return Err(Error::DimMismatch {
                context: "frozen system input".to_string(),
                expected: format!("{:?}", self.input_dims),
                actual: format!("{:?}", u.dims()),
            });
        }
        frozen_walk(&self.net, &self.gains.gains, u)
    }

    /// Frozen response to the zero input.
    pub fn effective_residual(&self) -> &Tensor {
        &self.residual
    }

    /// Impulse response at one input pixel: `frozen(delta) - R`, the column
    /// of the effective filter addressed by that pixel, shaped as the output.
    pub fn effective_filter(&self, pixel: (usize, usize, usize)) -> Result<Tensor> {
        let (h, w, c) = self.input_dims;
        let (r, cc, ch) = pixel;
        if r >= h || cc >= w || ch >= c {
            return Err(Error::OutOfBounds {
                context: "effective filter pixel",
                index: format!("({r}, {cc}, {ch})"),
                bounds: format!("{h}x{w}x{c}"),
            });
        }
        let probe = delta(h, w, c, pixel)?;
        self.frozen_forward(&probe)?.sub(&self.residual)
    }

    /// Dims of the frozen map's output, i.e. of the residual.
    pub fn output_dims(&self) -> (usize, usize, usize) {
        self.residual.dims()
    }

    /// Contribution weights of every input pixel to one output pixel: the row
    /// of the effective filter addressed by that pixel, shaped as the input.
    /// Materializes the explicit matrix, so the same entry cap applies.
    pub fn effective_filter_row(&self, pixel: (usize, usize, usize)) -> Result<Tensor> {
        let (h, w, c) = self.output_dims();
        let (r, cc, ch) = pixel;
        if r >= h || cc >= w || ch >= c {
            return Err(Error::OutOfBounds {
                context: "effective filter output pixel",
                index: format!("({r}, {cc}, {ch})"),
                bounds: format!("{h}x{w}x{c}"),
            });
        }
        let (f, _) = explicit_from_gains(
            &self.net,
            &self.gains.gains,
            self.input_dims,
            DEFAULT_EXPLICIT_CAP,
        )?;
        devectorize(f.row((r * w + cc) * c + ch), self.input_dims)
    }
}

/// Materializes the frozen map as a dense matrix and residual vector by
/// chaining layer matrices with gain-scaled rows, capped at
/// [`DEFAULT_EXPLICIT_CAP`] vector entries per stage.
pub fn explicit_fr(net: &ConvNet, x: &Tensor) -> Result<(DenseMatrix, Vec<f64>)> {
    explicit_fr_with_cap(net, x, DEFAULT_EXPLICIT_CAP)
}

/// [`explicit_fr`] with an explicit cap.
pub fn explicit_fr_with_cap(
    net: &ConvNet,
    x: &Tensor,
    cap: usize,
) -> Result<(DenseMatrix, Vec<f64>)> {
    let gains = record_gains(net, x)?;
    explicit_from_gains(net, &gains, x.dims(), cap)
}

fn explicit_from_gains(
    net: &ConvNet,
    gains: &[Option<Tensor>],
    in_dims: (usize, usize, usize),
    cap: usize,
) -> Result<(DenseMatrix, Vec<f64>)> {
    let in_len = in_dims.0 * in_dims.1 * in_dims.2;
    if in_len > cap {
        return Err(Error::CapExceeded {
            context: "explicit filter input",
            required: in_len,
            cap,
        });
    }
    let mut f = DenseMatrix::identity(in_len);
    let mut r = vec![0.0_f64; in_len];
    let mut dims = in_dims;
    for (index, layer) in net.layers().iter().enumerate() {
        match layer {
            LayerSpec::Linear(l) => {
                let (m, b) = l.matrix(dims)?;
                if m.rows() > cap {
                    return Err(Error::CapExceeded {
                        context: "explicit filter stage",
                        required: m.rows(),
                        cap,
                    });
                }
                f = f.left_mul_sparse(&m)?;
                let mut wr = m.apply(&r)?;
                for (v, b) in wr.iter_mut().zip(&b) {
                    *v += b;
                }
                r = wr;
                dims = l.output_dims(dims)?;
            }
            LayerSpec::Activation(_) => {
                let g = gains[index]
                    .as_ref()
                    .expect("gain recorded for every activation layer");
                let gv = vectorize(g);
                f.scale_rows(&gv)?;
                for (v, g) in r.iter_mut().zip(&gv) {
                    *v *= g;
                }
            }
        }
    }
    Ok((f, r))
}

/// Largest difference between the true forward pass and the frozen forward
/// pass on the freezing input, scaled by the larger of 1 and the true
/// output's largest magnitude.
pub fn freeze_equivalence(net: &ConvNet, x: &Tensor) -> Result<f64> {
    let truth = net.forward_output(x)?;
    let frozen = freeze(net, x)?.frozen_forward(x)?;
    let diff = truth.max_abs_diff(&frozen)?;
    Ok(diff / truth.linf_norm().max(1.0))
}
