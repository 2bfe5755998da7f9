//! Downscaling and upscaling by an integer stride, their sparse-matrix views,
//! and the contraction certificate used by back-projection.
//!
//! Downscaling blurs with `g` and decimates at phase `(0, 0)`. Upscaling
//! zero-inserts at the stride and convolves with `p`; boundary extension is
//! applied on the source lattice, so replicate and reflect rules preserve
//! constants all the way to the border. An axis of extent 1 is passed through
//! unresampled, which gives the 1D operators used in small certificates; the
//! kernel must then have extent 1 on that axis.

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;
use crate::tensor::{convolve, Axis, BoundaryRule, Kernel, Tensor};

/// Default blur width as a fraction of the stride. Chosen so the shipped
/// Gaussian/bicubic pair is contractive (certificate below 1) on 2D grids;
/// wider blurs fail the certificate.
pub const DEFAULT_SIGMA_FACTOR: f64 = 0.3;

/// Default cubic convolution parameter.
pub const DEFAULT_BICUBIC_A: f64 = -0.5;

/// Default cap on `rows * cols` of an explicit operator matrix.
pub const DEFAULT_OPERATOR_CAP: usize = 1 << 24;

/// Cubic convolution weight with parameter `a`.
fn cubic(t: f64, a: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

fn bicubic_taps(s: usize, a: f64) -> (Vec<f64>, usize) {
    let anchor = 2 * s - 1;
    let n = 4 * s - 1;
    let taps = (0..n)
        .map(|q| cubic((q as f64 - anchor as f64) / s as f64, a))
        .collect();
    (taps, anchor)
}

/// Separable interpolation kernel sampled from the cubic convolution function
/// at phase offsets `k/s`, polyphase-normalized.
pub fn bicubic_kernel(s: usize, a: f64) -> Result<Kernel> {
    if s == 0 {
        return Err(Error::InvalidArgument {
            detail: "scale must be at least 1".to_string(),
        });
    }
    let (t1, anchor) = bicubic_taps(s, a);
    let n = t1.len();
    let mut taps = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            taps.push(t1[i] * t1[j]);
        }
    }
    Kernel::from_taps(n, n, taps, (anchor, anchor))?.normalize_polyphase(s)
}

/// One-dimensional variant of [`bicubic_kernel`] along the chosen axis.
pub fn bicubic_kernel_1d(s: usize, a: f64, axis: Axis) -> Result<Kernel> {
    let (taps, anchor) = bicubic_taps(s, a);
    let n = taps.len();
    let k = match axis {
        Axis::Vertical => Kernel::from_taps(n, 1, taps, (anchor, 0))?,
        Axis::Horizontal => Kernel::from_taps(1, n, taps, (0, anchor))?,
    };
    k.normalize_polyphase(s)
}

fn gaussian_taps(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument {
            detail: format!("gaussian sigma must be positive, got {sigma}"),
        });
    }
    let radius = (4.0 * sigma).ceil() as i64;
    Ok((-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect())
}

/// Separable Gaussian blur truncated at `4 * sigma`, sum-normalized.
pub fn gaussian_kernel(sigma: f64) -> Result<Kernel> {
    let t1 = gaussian_taps(sigma)?;
    let n = t1.len();
    let mut taps = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            taps.push(t1[i] * t1[j]);
        }
    }
    Kernel::from_taps(n, n, taps, (n / 2, n / 2))?.normalize_sum()
}

/// One-dimensional variant of [`gaussian_kernel`] along the chosen axis.
pub fn gaussian_kernel_1d(sigma: f64, axis: Axis) -> Result<Kernel> {
    let taps = gaussian_taps(sigma)?;
    let n = taps.len();
    let k = match axis {
        Axis::Vertical => Kernel::from_taps(n, 1, taps, (n / 2, 0))?,
        Axis::Horizontal => Kernel::from_taps(1, n, taps, (0, n / 2))?,
    };
    k.normalize_sum()
}

/// `s x s` block-mean blur; paired with [`nearest_kernel`] it makes the
/// downscale-of-upscale map the exact identity.
pub fn box_kernel(s: usize) -> Result<Kernel> {
    Kernel::from_taps(s, s, vec![1.0; s * s], (s - 1, s - 1))?.normalize_sum()
}

/// One-dimensional variant of [`box_kernel`].
pub fn box_kernel_1d(s: usize, axis: Axis) -> Result<Kernel> {
    let k = match axis {
        Axis::Vertical => Kernel::from_taps(s, 1, vec![1.0; s], (s - 1, 0))?,
        Axis::Horizontal => Kernel::from_taps(1, s, vec![1.0; s], (0, s - 1))?,
    };
    k.normalize_sum()
}

/// Nearest-neighbor duplication filter: `s x s` unit taps anchored at `(0, 0)`.
pub fn nearest_kernel(s: usize) -> Result<Kernel> {
    Kernel::from_taps(s, s, vec![1.0; s * s], (0, 0))?.normalize_polyphase(s)
}

/// One-dimensional variant of [`nearest_kernel`].
pub fn nearest_kernel_1d(s: usize, axis: Axis) -> Result<Kernel> {
    let k = match axis {
        Axis::Vertical => Kernel::from_taps(s, 1, vec![1.0; s], (0, 0))?,
        Axis::Horizontal => Kernel::from_taps(1, s, vec![1.0; s], (0, 0))?,
    };
    k.normalize_polyphase(s)
}

/// Scale factor, blur kernel `g`, interpolation kernel `p`, and boundary rule
/// shared by one down/up operator pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleSpec {
    scale: usize,
    blur: Kernel,
    interp: Kernel,
    boundary: BoundaryRule,
}

impl ResampleSpec {
    /// Validates that the blur is sum-normalized and the interpolation kernel
    /// is polyphase-normalized at the scale.
    pub fn new(scale: usize, blur: Kernel, interp: Kernel, boundary: BoundaryRule) -> Result<ResampleSpec> {
        if scale == 0 {
            return Err(Error::InvalidArgument {
                detail: "scale must be at least 1".to_string(),
            });
        }
        if !blur.is_normalized() {
            return Err(Error::InvalidArgument {
                detail: "blur kernel must be normalized".to_string(),
            });
        }
        let blur_sum: f64 = blur.taps().iter().sum();
        if (blur_sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument {
                detail: format!("blur kernel taps sum to {blur_sum}, expected 1"),
            });
        }
        if !interp.is_normalized() {
            return Err(Error::InvalidArgument {
                detail: "interpolation kernel must be polyphase-normalized".to_string(),
            });
        }
        for (i, sum) in interp.polyphase_sums(scale).iter().enumerate() {
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument {
                    detail: format!("interpolation polyphase class {i} sums to {sum}, expected 1"),
                });
            }
        }
        Ok(ResampleSpec {
            scale,
            blur,
            interp,
            boundary,
        })
    }

    /// Builds a pair from textual kernel names: blur `gaussian[:sigma]`,
    /// `delta`, or `average`; interpolation `bicubic[:a]` or `nearest`.
    pub fn from_names(scale: usize, blur: &str, interp: &str, boundary: &str) -> Result<ResampleSpec> {
        let split = |spec: &str| -> (String, Option<String>) {
            match spec.split_once(':') {
                Some((name, param)) => (name.to_string(), Some(param.to_string())),
                None => (spec.to_string(), None),
            }
        };
        let param = |p: Option<String>, what: &str| -> Result<Option<f64>> {
            p.map(|p| {
                p.parse::<f64>().map_err(|_| Error::InvalidArgument {
                    detail: format!("{what} parameter {p:?} is not a number"),
                })
            })
            .transpose()
        };
        let blur = match split(blur) {
            (name, p) if name == "gaussian" => {
                let sigma = param(p, "gaussian")?.unwrap_or(DEFAULT_SIGMA_FACTOR * scale as f64);
                gaussian_kernel(sigma)?
            }
            (name, None) if name == "delta" => Kernel::identity(),
            (name, None) if name == "average" => box_kernel(scale)?,
            (other, _) => {
                return Err(Error::InvalidArgument {
                    detail: format!(
                        "unknown blur kernel {other:?} (expected gaussian[:sigma], delta, or average)"
                    ),
                })
            }
        };
        let interp = match split(interp) {
            (name, p) if name == "bicubic" => {
                let a = param(p, "bicubic")?.unwrap_or(DEFAULT_BICUBIC_A);
                bicubic_kernel(scale, a)?
            }
            (name, None) if name == "nearest" => nearest_kernel(scale)?,
            (other, _) => {
                return Err(Error::InvalidArgument {
                    detail: format!(
                        "unknown interpolation kernel {other:?} (expected bicubic[:a] or nearest)"
                    ),
                })
            }
        };
        ResampleSpec::new(scale, blur, interp, boundary.parse()?)
    }

    /// Gaussian blur at `DEFAULT_SIGMA_FACTOR * scale`, bicubic interpolation
    /// at `a = -0.5`, replicate boundary.
    pub fn with_defaults(scale: usize) -> Result<ResampleSpec> {
        ResampleSpec::new(
            scale,
            gaussian_kernel(DEFAULT_SIGMA_FACTOR * scale as f64)?,
            bicubic_kernel(scale, DEFAULT_BICUBIC_A)?,
            BoundaryRule::Replicate,
        )
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn blur(&self) -> &Kernel {
        &self.blur
    }

    pub fn interp(&self) -> &Kernel {
        &self.interp
    }

    pub fn boundary(&self) -> BoundaryRule {
        self.boundary
    }
}

/// Which direction an explicit operator matrix acts in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorDirection {
    Down,
    Up,
}

fn check_unit_axis(k: &Kernel, dims: (usize, usize, usize)) -> Result<()> {
    if dims.0 == 1 && k.height() != 1 {
        return Err(Error::UnitAxisKernel {
            axis: "vertical",
            extent: k.height(),
        });
    }
    if dims.1 == 1 && k.width() != 1 {
        return Err(Error::UnitAxisKernel {
            axis: "horizontal",
            extent: k.width(),
        });
    }
    Ok(())
}

fn down_extent(n: usize, s: usize, axis: &'static str) -> Result<usize> {
    if n == 1 {
        return Ok(1);
    }
    if n % s != 0 {
        return Err(Error::NotDivisible {
            axis,
            size: n,
            divisor: s,
            pad: (s - n % s) % s,
        });
    }
    Ok(n / s)
}

/// Blur with `spec`'s blur kernel under its boundary rule, then decimate at
/// phase `(0, 0)`.
pub fn downscale(y: &Tensor, spec: &ResampleSpec) -> Result<Tensor> {
    check_unit_axis(spec.blur(), y.dims())?;
    let (h, w, c) = y.dims();
    let s = spec.scale();
    let oh = down_extent(h, s, "height")?;
    let ow = down_extent(w, s, "width")?;
    let blurred = convolve(y, spec.blur(), spec.boundary())?;
    let sr = if h == 1 { 1 } else { s };
    let sc = if w == 1 { 1 } else { s };
    Ok(Tensor::from_fn(oh, ow, c, |r, cc, ch| {
        blurred.get(r * sr, cc * sc, ch)
    }))
}

/// Source index that a virtual position on the zero-inserted lattice reads,
/// with the boundary rule applied on the source lattice.
#[inline]
fn up_source(out: isize, n: usize, s: usize, rule: BoundaryRule) -> Option<usize> {
    if n == 1 {
        // Unit axes are passed through; tap extent 1 is enforced upstream.
        return Some(0);
    }
    let si = s as isize;
    if out.rem_euclid(si) != 0 {
        return None;
    }
    rule.fold(out.div_euclid(si), n)
}

/// Zero-insert at the stride and convolve with `p`. Boundary extension acts on
/// the source lattice before insertion.
pub fn upscale(x: &Tensor, spec: &ResampleSpec) -> Result<Tensor> {
    check_unit_axis(spec.interp(), x.dims())?;
    let (h, w, c) = x.dims();
    let s = spec.scale();
    let oh = if h == 1 { 1 } else { h * s };
    let ow = if w == 1 { 1 } else { w * s };
    let k = spec.interp();
    let (ar, ac) = k.anchor();
    let rule = spec.boundary();
    let mut out = Tensor::zeros(oh, ow, c);
    for r in 0..oh {
        for cc in 0..ow {
            for ch in 0..c {
                let mut acc = 0.0;
                for i in 0..k.height() {
                    let pr = r as isize - (i as isize - ar as isize);
                    let Some(fr) = up_source(pr, h, s, rule) else { continue };
                    for j in 0..k.width() {
                        let pc = cc as isize - (j as isize - ac as isize);
                        let Some(fc) = up_source(pc, w, s, rule) else { continue };
                        acc += k.tap(i, j) * x.get(fr, fc, ch);
                    }
                }
                out.set(r, cc, ch, acc);
            }
        }
    }
    Ok(out)
}

/// `levels`-fold composition of [`downscale`]; `levels = 0` is the identity.
pub fn multi_level_downscale(y: &Tensor, spec: &ResampleSpec, levels: usize) -> Result<Tensor> {
    let mut t = y.clone();
    for _ in 0..levels {
        t = downscale(&t, spec)?;
    }
    Ok(t)
}

/// Explicit sparse matrix of [`downscale`] or [`upscale`] on `in_dims`,
/// capped at [`DEFAULT_OPERATOR_CAP`] entries.
pub fn operator_matrix(spec: &ResampleSpec, direction: OperatorDirection, in_dims: (usize, usize, usize)) -> Result<SparseOperator> {
    operator_matrix_with_cap(spec, direction, in_dims, DEFAULT_OPERATOR_CAP)
}

/// [`operator_matrix`] with an explicit `rows * cols` cap.
pub fn operator_matrix_with_cap(
    spec: &ResampleSpec,
    direction: OperatorDirection,
    in_dims: (usize, usize, usize),
    cap: usize,
) -> Result<SparseOperator> {
    let (h, w, c) = in_dims;
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::EmptyInput {
            context: "operator matrix input dims",
        });
    }
    let s = spec.scale();
    let in_len = h * w * c;
    let in_idx = |r: usize, cc: usize, ch: usize| (r * w + cc) * c + ch;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let (rows, cols);
    match direction {
        OperatorDirection::Down => {
            let k = spec.blur();
            check_unit_axis(k, in_dims)?;
            let oh = down_extent(h, s, "height")?;
            let ow = down_extent(w, s, "width")?;
            rows = oh * ow * c;
            cols = in_len;
            check_cap(rows, cols, cap)?;
            let (ar, ac) = k.anchor();
            let rule = spec.boundary();
            let sr = if h == 1 { 1 } else { s };
            let sc = if w == 1 { 1 } else { s };
            for r in 0..oh {
                for cc in 0..ow {
                    for i in 0..k.height() {
                        let src_r = (r * sr) as isize - (i as isize - ar as isize);
                        let Some(fr) = rule.fold(src_r, h) else { continue };
                        for j in 0..k.width() {
                            let src_c = (cc * sc) as isize - (j as isize - ac as isize);
                            let Some(fc) = rule.fold(src_c, w) else { continue };
                            for ch in 0..c {
                                entries.push(((r * ow + cc) * c + ch, in_idx(fr, fc, ch), k.tap(i, j)));
                            }
                        }
                    }
                }
            }
        }
        OperatorDirection::Up => {
            let k = spec.interp();
            check_unit_axis(k, in_dims)?;
            let oh = if h == 1 { 1 } else { h * s };
            let ow = if w == 1 { 1 } else { w * s };
            rows = oh * ow * c;
            cols = in_len;
            check_cap(rows, cols, cap)?;
            let (ar, ac) = k.anchor();
            let rule = spec.boundary();
            for r in 0..oh {
                for cc in 0..ow {
                    for i in 0..k.height() {
                        let pr = r as isize - (i as isize - ar as isize);
                        let Some(fr) = up_source(pr, h, s, rule) else { continue };
                        for j in 0..k.width() {
                            let pc = cc as isize - (j as isize - ac as isize);
                            let Some(fc) = up_source(pc, w, s, rule) else { continue };
                            for ch in 0..c {
                                entries.push(((r * ow + cc) * c + ch, in_idx(fr, fc, ch), k.tap(i, j)));
                            }
                        }
                    }
                }
            }
        }
    }
    SparseOperator::from_entries(rows, cols, entries)
}

fn check_cap(rows: usize, cols: usize, cap: usize) -> Result<()> {
    let required = rows.saturating_mul(cols);
    if required > cap {
        return Err(Error::CapExceeded {
            context: "operator matrix",
            required,
            cap,
        });
    }
    Ok(())
}

/// Contraction certificate `||I - D U||_1`, the maximum absolute column sum.
///
/// Back-projection iterations contract the mismatch error at this rate per
/// step whenever the value is below 1.
pub fn contraction_norm(d: &SparseOperator, u: &SparseOperator) -> Result<f64> {
    if d.cols() != u.rows() || d.rows() != u.cols() {
        return Err(Error::DimMismatch {
            context: "contraction norm operands".to_string(),
            expected: format!("D {}x{} against U {}x{}", d.rows(), d.cols(), d.cols(), d.rows()),
            actual: format!("U {}x{}", u.rows(), u.cols()),
        });
    }
    let m = d.matmul(u)?;
    let n = m.rows();
    let mut off_diag = vec![0.0_f64; n];
    let mut diag = vec![0.0_f64; n];
    for &(i, j, v) in m.entries() {
        if i == j {
            diag[j] = v;
        } else {
            off_diag[j] += v.abs();
        }
    }
    Ok((0..n)
        .map(|j| off_diag[j] + (1.0 - diag[j]).abs())
        .fold(0.0, f64::max))
}
