//! Python bindings: tensors, resampling pairs with certificates, iterative
//! and multigrid back-projection, metrics, and frozen-network visualization.

use std::path::PathBuf;

use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;

use mgbp_core::backprojection;
use mgbp_core::convnet::{load_network, save_network, toy_net, ConvNet};
use mgbp_core::freeze::{freeze, FrozenSystem};
use mgbp_core::io::{read_tensor, write_tensor};
use mgbp_core::metrics::{self, SsimMode};
use mgbp_core::resample;
use mgbp_core::tensor::Tensor as CoreTensor;
use mgbp_core::vis::filter_spectrum;

fn to_py(e: mgbp_core::Error) -> PyErr {
    match e {
        mgbp_core::Error::OutOfBounds { .. } => PyIndexError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Row-major grid of `height x width x channels` samples.
#[pyclass(module = "mgbp")]
#[derive(Clone)]
struct Tensor {
    inner: CoreTensor,
}

#[pymethods]
impl Tensor {
    #[new]
    fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> PyResult<Tensor> {
        let inner = CoreTensor::from_vec(height, width, channels, data).map_err(to_py)?;
        Ok(Tensor { inner })
    }

    #[staticmethod]
    fn zeros(height: usize, width: usize, channels: usize) -> Tensor {
        Tensor {
            inner: CoreTensor::zeros(height, width, channels),
        }
    }

    /// Reads a tensor file (`.mgt`, `.png`, `.pgm`, `.ppm`).
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: read_tensor(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_tensor(&path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        self.inner.dims()
    }

    fn get(&self, r: usize, c: usize, ch: usize) -> PyResult<f64> {
        let (h, w, chs) = self.inner.dims();
        if r >= h || c >= w || ch >= chs {
            return Err(PyIndexError::new_err(format!(
                "index ({r}, {c}, {ch}) out of bounds for {h}x{w}x{chs}"
            )));
        }
        Ok(self.inner.get(r, c, ch))
    }

    fn to_list(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn l1_norm(&self) -> f64 {
        self.inner.l1_norm()
    }

    fn linf_norm(&self) -> f64 {
        self.inner.linf_norm()
    }

    fn __add__(&self, other: &Tensor) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: self.inner.add(&other.inner).map_err(to_py)?,
        })
    }

    fn __sub__(&self, other: &Tensor) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: self.inner.sub(&other.inner).map_err(to_py)?,
        })
    }

    fn __mul__(&self, factor: f64) -> Tensor {
        Tensor {
            inner: self.inner.scale(factor),
        }
    }

    fn __rmul__(&self, factor: f64) -> Tensor {
        self.__mul__(factor)
    }

    fn __repr__(&self) -> String {
        let (h, w, c) = self.inner.dims();
        format!("Tensor({h}x{w}x{c})")
    }
}

/// Downscale/upscale pair: scale factor, blur and interpolation kernels by
/// name, boundary rule.
#[pyclass(module = "mgbp")]
#[derive(Clone)]
struct Spec {
    inner: resample::ResampleSpec,
}

#[pymethods]
impl Spec {
    #[new]
    #[pyo3(signature = (scale=2, blur="gaussian", interp="bicubic", boundary="replicate"))]
    fn new(scale: usize, blur: &str, interp: &str, boundary: &str) -> PyResult<Spec> {
        Ok(Spec {
            inner: resample::ResampleSpec::from_names(scale, blur, interp, boundary)
                .map_err(to_py)?,
        })
    }

    #[getter]
    fn scale(&self) -> usize {
        self.inner.scale()
    }

    /// Contraction certificate on the grid whose low-resolution side is
    /// `height x width x channels`; convergence is certified when < 1.
    #[pyo3(signature = (height, width, channels=1))]
    fn certify(&self, height: usize, width: usize, channels: usize) -> PyResult<f64> {
        backprojection::certify(&self.inner, (height, width, channels)).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Spec(scale={})", self.inner.scale())
    }
}

/// Sequential network of strided, transposed, and plain convolutions.
#[pyclass(module = "mgbp")]
struct Network {
    inner: ConvNet,
}

#[pymethods]
impl Network {
    /// Reads a manifest written by `save`.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Network> {
        Ok(Network {
            inner: load_network(&path).map_err(to_py)?,
        })
    }

    /// Deterministic small random network for a given seed.
    #[staticmethod]
    fn toy(seed: u64, in_channels: usize, out_channels: usize) -> Network {
        Network {
            inner: toy_net(seed, in_channels, out_channels),
        }
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_network(&self.inner, &path).map_err(to_py)
    }

    #[getter]
    fn in_channels(&self) -> usize {
        self.inner.in_channels()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.layers().len()
    }

    fn forward(&self, x: &Tensor) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: self.inner.forward_output(&x.inner).map_err(to_py)?,
        })
    }

    /// Freezes every activation at its state under `x`, yielding the
    /// linearized system valid at that input.
    fn freeze(&self, x: &Tensor) -> PyResult<Frozen> {
        Ok(Frozen {
            inner: freeze(&self.inner, &x.inner).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(in_channels={}, depth={})",
            self.inner.in_channels(),
            self.inner.layers().len()
        )
    }
}

/// Activation-frozen network: an affine map `u -> F u + R` agreeing with the
/// network at the freezing input.
#[pyclass(module = "mgbp")]
struct Frozen {
    inner: FrozenSystem,
}

#[pymethods]
impl Frozen {
    #[getter]
    fn input_dims(&self) -> (usize, usize, usize) {
        self.inner.input_dims()
    }

    #[getter]
    fn output_dims(&self) -> (usize, usize, usize) {
        self.inner.output_dims()
    }

    /// Response to the zero input.
    #[getter]
    fn residual(&self) -> Tensor {
        Tensor {
            inner: self.inner.effective_residual().clone(),
        }
    }

    fn forward(&self, u: &Tensor) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: self.inner.frozen_forward(&u.inner).map_err(to_py)?,
        })
    }

    /// Impulse response at one input pixel, shaped as the output.
    fn effective_filter(&self, r: usize, c: usize, ch: usize) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: self.inner.effective_filter((r, c, ch)).map_err(to_py)?,
        })
    }

    /// Contribution weights of every input pixel to one output pixel, shaped
    /// as the input.
    fn effective_filter_row(&self, r: usize, c: usize, ch: usize) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: self.inner.effective_filter_row((r, c, ch)).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        let (h, w, c) = self.inner.input_dims();
        let (oh, ow, oc) = self.inner.output_dims();
        format!("Frozen({h}x{w}x{c} -> {oh}x{ow}x{oc})")
    }
}

#[pyfunction]
#[pyo3(signature = (x, spec, levels=1))]
fn downscale(x: &Tensor, spec: &Spec, levels: usize) -> PyResult<Tensor> {
    Ok(Tensor {
        inner: resample::multi_level_downscale(&x.inner, &spec.inner, levels).map_err(to_py)?,
    })
}

#[pyfunction]
fn upscale(x: &Tensor, spec: &Spec) -> PyResult<Tensor> {
    Ok(Tensor {
        inner: resample::upscale(&x.inner, &spec.inner).map_err(to_py)?,
    })
}

/// Iterative back-projection from `spec`'s plain upscale of `x` (or from
/// `y0`). Returns the refined image and the mismatch-error norm per step.
#[pyfunction]
#[pyo3(signature = (x, spec, iterations, y0=None))]
fn ibp(x: &Tensor, spec: &Spec, iterations: usize, y0: Option<&Tensor>) -> PyResult<(Tensor, Vec<f64>)> {
    let start = match y0 {
        Some(y) => y.inner.clone(),
        None => resample::upscale(&x.inner, &spec.inner).map_err(to_py)?,
    };
    let (y, trace) = backprojection::ibp(&x.inner, &start, &spec.inner, iterations).map_err(to_py)?;
    let errors = trace.entries().iter().map(|e| e.error_l1).collect();
    Ok((Tensor { inner: y }, errors))
}

/// Multigrid back-projection over `levels` grids with `mu` corrective passes
/// per level. Returns every level (coarsest first) and the per-level
/// mismatch-error norms against `x`.
#[pyfunction]
fn mgbp(x: &Tensor, spec: &Spec, mu: usize, levels: usize) -> PyResult<(Vec<Tensor>, Vec<f64>)> {
    let (stack, trace) = backprojection::mgbp(&x.inner, &spec.inner, mu, levels).map_err(to_py)?;
    let tensors = stack
        .into_levels()
        .into_iter()
        .map(|inner| Tensor { inner })
        .collect();
    let errors = trace.entries().iter().map(|e| e.error_l1).collect();
    Ok((tensors, errors))
}

#[pyfunction]
fn psnr(a: &Tensor, b: &Tensor) -> PyResult<f64> {
    metrics::psnr(&a.inner, &b.inner).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (a, b, window=None))]
fn ssim(a: &Tensor, b: &Tensor, window: Option<usize>) -> PyResult<f64> {
    let mode = match window {
        Some(w) => SsimMode::Windowed(w),
        None => SsimMode::Global,
    };
    metrics::ssim(&a.inner, &b.inner, mode).map_err(to_py)
}

/// Centered magnitude spectrum of a single-channel tensor.
#[pyfunction]
fn spectrum(t: &Tensor) -> PyResult<Tensor> {
    Ok(Tensor {
        inner: filter_spectrum(&t.inner).map_err(to_py)?,
    })
}

/// Text form of the recursion schedule for a `(mu, levels)` run.
#[pyfunction]
fn unfold(mu: usize, levels: usize) -> String {
    backprojection::schedule_text(&backprojection::unfold_schedule(mu, levels))
}

#[pymodule(name = "mgbp")]
fn bindings(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Tensor>()?;
    m.add_class::<Spec>()?;
    m.add_class::<Network>()?;
    m.add_class::<Frozen>()?;
    m.add_function(wrap_pyfunction!(downscale, m)?)?;
    m.add_function(wrap_pyfunction!(upscale, m)?)?;
    m.add_function(wrap_pyfunction!(ibp, m)?)?;
    m.add_function(wrap_pyfunction!(mgbp, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(unfold, m)?)?;
    Ok(())
}
