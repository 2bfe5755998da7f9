//! Dense row-major image tensors, convolution kernels, and boundary rules.
//!
//! A [`Tensor`] holds `height * width * channels` samples of `f64` laid out
//! row-major as `(row, col, channel)`. All linear operators in this crate act
//! on that fixed vectorization, so sparse-matrix views and direct tensor code
//! agree index for index.

use crate::error::{Error, Result};

/// How samples outside the image are read during convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryRule {
    /// Clamp to the nearest edge sample.
    Replicate,
    /// Mirror about the edge sample (whole-sample symmetry).
    Reflect,
    /// Out-of-range samples read as zero.
    ZeroPad,
}

impl BoundaryRule {
    /// Folds index `i` into `[0, n)`. `None` means the sample reads as zero.
    pub fn fold(self, i: isize, n: usize) -> Option<usize> {
        let ni = n as isize;
        if (0..ni).contains(&i) {
            return Some(i as usize);
        }
        match self {
            BoundaryRule::ZeroPad => None,
            BoundaryRule::Replicate => Some(i.clamp(0, ni - 1) as usize),
            BoundaryRule::Reflect => {
                if n == 1 {
                    return Some(0);
                }
                let mut i = i;
                while !(0..ni).contains(&i) {
                    if i < 0 {
                        i = -i;
                    } else {
                        i = 2 * (ni - 1) - i;
                    }
                }
                Some(i as usize)
            }
        }
    }
}

impl std::str::FromStr for BoundaryRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replicate" => Ok(BoundaryRule::Replicate),
            "reflect" => Ok(BoundaryRule::Reflect),
            "zero" => Ok(BoundaryRule::ZeroPad),
            _ => Err(Error::UnknownName {
                what: "boundary rule",
                name: s.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for BoundaryRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            BoundaryRule::Replicate => "replicate",
            BoundaryRule::Reflect => "reflect",
            BoundaryRule::ZeroPad => "zero",
        };
        f.write_str(name)
    }
}

/// Image axis selector for one-dimensional kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Vertical,
    Horizontal,
}

/// 2D convolution kernel with an explicit anchor tap.
///
/// Convolution uses the signal-processing orientation: tap `(i, j)` of a
/// kernel anchored at `(ar, ac)` scatters input sample `(r, c)` onto output
/// `(r + i - ar, c + j - ac)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    height: usize,
    width: usize,
    anchor: (usize, usize),
    taps: Vec<f64>,
    normalized: bool,
}

impl Kernel {
    /// Builds a kernel from row-major tap rows.
    pub fn from_rows(rows: &[Vec<f64>], anchor: (usize, usize)) -> Result<Kernel> {
        let height = rows.len();
        if height == 0 {
            return Err(Error::EmptyInput { context: "kernel taps" });
        }
        let width = rows[0].len();
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Malformed {
                format: "kernel",
                field: "taps",
                detail: "rows must be non-empty and of equal length".to_string(),
            });
        }
        let taps: Vec<f64> = rows.iter().flatten().copied().collect();
        Kernel::from_taps(height, width, taps, anchor)
    }

    /// Builds a kernel from a flat row-major tap vector.
    pub fn from_taps(height: usize, width: usize, taps: Vec<f64>, anchor: (usize, usize)) -> Result<Kernel> {
        if taps.len() != height * width {
            return Err(Error::DimMismatch {
                context: "kernel taps".to_string(),
                expected: format!("{}", height * width),
                actual: format!("{}", taps.len()),
            });
        }
        if anchor.0 >= height || anchor.1 >= width {
            return Err(Error::OutOfBounds {
                context: "kernel anchor",
                index: format!("({}, {})", anchor.0, anchor.1),
                bounds: format!("{}x{}", height, width),
            });
        }
        if !taps.iter().all(|t| t.is_finite()) {
            return Err(Error::NonFinite {
                context: "kernel taps".to_string(),
            });
        }
        Ok(Kernel {
            height,
            width,
            anchor,
            taps,
            normalized: false,
        })
    }

    /// Single unit tap; convolution with it is the identity.
    pub fn identity() -> Kernel {
        Kernel {
            height: 1,
            width: 1,
            anchor: (0, 0),
            taps: vec![1.0],
            normalized: true,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn anchor(&self) -> (usize, usize) {
        self.anchor
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn tap(&self, r: usize, c: usize) -> f64 {
        self.taps[r * self.width + c]
    }

    /// Whether a normalization step marked this kernel as sum- or
    /// polyphase-normalized.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Divides all taps by their sum and marks the kernel normalized.
    pub fn normalize_sum(mut self) -> Result<Kernel> {
        let sum: f64 = self.taps.iter().sum();
        if sum == 0.0 {
            return Err(Error::InvalidArgument {
                detail: "cannot normalize kernel with zero tap sum".to_string(),
            });
        }
        for t in &mut self.taps {
            *t /= sum;
        }
        self.normalized = true;
        Ok(self)
    }

    /// Per-class tap sums for the polyphase decomposition at stride `s`.
    ///
    /// Classes are residues of `(index - anchor) mod s` per axis; an axis of
    /// extent 1 contributes a single class (it is never resampled). Returned
    /// row-major over `(row_class, col_class)`.
    pub fn polyphase_sums(&self, s: usize) -> Vec<f64> {
        let sr = if self.height == 1 { 1 } else { s };
        let sc = if self.width == 1 { 1 } else { s };
        let mut sums = vec![0.0; sr * sc];
        for r in 0..self.height {
            for c in 0..self.width {
                let cr = (r as isize - self.anchor.0 as isize).rem_euclid(sr as isize) as usize;
                let cc = (c as isize - self.anchor.1 as isize).rem_euclid(sc as isize) as usize;
                sums[cr * sc + cc] += self.tap(r, c);
            }
        }
        sums
    }

    /// Divides each polyphase class by its sum so every class sums to 1.
    pub fn normalize_polyphase(mut self, s: usize) -> Result<Kernel> {
        let sr = if self.height == 1 { 1 } else { s };
        let sc = if self.width == 1 { 1 } else { s };
        let sums = self.polyphase_sums(s);
        if sums.iter().any(|&v| v == 0.0) {
            return Err(Error::InvalidArgument {
                detail: format!("polyphase class with zero sum at stride {}", s),
            });
        }
        for r in 0..self.height {
            for c in 0..self.width {
                let cr = (r as isize - self.anchor.0 as isize).rem_euclid(sr as isize) as usize;
                let cc = (c as isize - self.anchor.1 as isize).rem_euclid(sc as isize) as usize;
                self.taps[r * self.width + c] /= sums[cr * sc + cc];
            }
        }
        self.normalized = true;
        Ok(self)
    }
}

/// Dense `height x width x channels` tensor of finite `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Tensor {
        Tensor {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn zeros_like(other: &Tensor) -> Tensor {
        Tensor::zeros(other.height, other.width, other.channels)
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Tensor {
        Tensor {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Builds a tensor from row-major `(row, col, channel)` data.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Tensor> {
        if data.len() != height * width * channels {
            return Err(Error::DimMismatch {
                context: "tensor data".to_string(),
                expected: format!("{}", height * width * channels),
                actual: format!("{}", data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "tensor data".to_string(),
            });
        }
        Ok(Tensor {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Tensor {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Tensor {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, r: usize, c: usize, ch: usize) -> usize {
        (r * self.width + c) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.data[self.idx(r, c, ch)]
    }

    pub fn set(&mut self, r: usize, c: usize, ch: usize, v: f64) {
        let i = self.idx(r, c, ch);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_map(&self, other: &Tensor, context: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.dims() != other.dims() {
            return Err(Error::DimMismatch {
                context: context.to_string(),
                expected: format!("{:?}", self.dims()),
                actual: format!("{:?}", other.dims()),
            });
        }
        Ok(Tensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "tensor add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "tensor sub", |a, b| a - b)
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "tensor elementwise product", |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    /// Sum of absolute sample values.
    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// Largest absolute sample value.
    pub fn linf_norm(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        Ok(self.sub(other)?.linf_norm())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks channels of `other` after the channels of `self`.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::DimMismatch {
                context: "channel concatenation".to_string(),
                expected: format!("{}x{}", self.height, self.width),
                actual: format!("{}x{}", other.height, other.width),
            });
        }
        let channels = self.channels + other.channels;
        let mut t = Tensor::zeros(self.height, self.width, channels);
        for r in 0..self.height {
            for c in 0..self.width {
                for ch in 0..self.channels {
                    t.set(r, c, ch, self.get(r, c, ch));
                }
                for ch in 0..other.channels {
                    t.set(r, c, self.channels + ch, other.get(r, c, ch));
                }
            }
        }
        Ok(t)
    }

    /// Extracts a single channel as a `HxWx1` tensor.
    pub fn channel(&self, ch: usize) -> Result<Tensor> {
        if ch >= self.channels {
            return Err(Error::OutOfBounds {
                context: "channel extraction",
                index: format!("{}", ch),
                bounds: format!("{}", self.channels),
            });
        }
        Ok(Tensor::from_fn(self.height, self.width, 1, |r, c, _| self.get(r, c, ch)))
    }
}

/// Unit impulse at `at = (row, col, channel)`.
pub fn delta(height: usize, width: usize, channels: usize, at: (usize, usize, usize)) -> Result<Tensor> {
    let (r, c, ch) = at;
    if r >= height || c >= width || ch >= channels {
        return Err(Error::OutOfBounds {
            context: "delta position",
            index: format!("({}, {}, {})", r, c, ch),
            bounds: format!("{}x{}x{}", height, width, channels),
        });
    }
    let mut t = Tensor::zeros(height, width, channels);
    t.set(r, c, ch, 1.0);
    Ok(t)
}

/// Row-major copy of the sample data; the inverse of [`devectorize`].
pub fn vectorize(t: &Tensor) -> Vec<f64> {
    t.data().to_vec()
}

/// Rebuilds a tensor from its row-major vectorization.
pub fn devectorize(data: &[f64], dims: (usize, usize, usize)) -> Result<Tensor> {
    Tensor::from_vec(dims.0, dims.1, dims.2, data.to_vec())
}

/// Per-channel 2D convolution of `x` with `k` under boundary rule `rule`.
///
/// Output sample `(r, c)` is `sum_{i,j} taps[i][j] * x(r - (i - ar), c - (j - ac))`
/// with out-of-range reads resolved by `rule`.
pub fn convolve(x: &Tensor, k: &Kernel, rule: BoundaryRule) -> Result<Tensor> {
    if rule == BoundaryRule::Reflect && (k.height() > 2 * x.height() || k.width() > 2 * x.width()) {
        return Err(Error::ReflectExtent {
            kh: k.height(),
            kw: k.width(),
            h: x.height(),
            w: x.width(),
        });
    }
    let (h, w, channels) = x.dims();
    let (ar, ac) = k.anchor();
    let mut out = Tensor::zeros(h, w, channels);
    for r in 0..h {
        for c in 0..w {
            for ch in 0..channels {
                let mut acc = 0.0;
                for i in 0..k.height() {
                    let sr = r as isize - (i as isize - ar as isize);
                    let Some(fr) = rule.fold(sr, h) else { continue };
                    for j in 0..k.width() {
                        let sc = c as isize - (j as isize - ac as isize);
                        let Some(fc) = rule.fold(sc, w) else { continue };
                        acc += k.tap(i, j) * x.get(fr, fc, ch);
                    }
                }
                out.set(r, c, ch, acc);
            }
        }
    }
    Ok(out)
}
