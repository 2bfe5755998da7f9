//! Rendering of effective filters: centered frequency-magnitude spectra,
//! unit-range normalization, and atlas export with a sidecar recording each
//! image's original value range.

use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::freeze::FrozenSystem;
use crate::io::{write_atomic, write_tensor};
use crate::tensor::Tensor;

/// Centered magnitude of the 2D discrete Fourier transform; the
/// zero-frequency bin lands at `(height/2, width/2)`.
pub fn filter_spectrum(filter: &Tensor) -> Result<Tensor> {
    let (h, w, c) = filter.dims();
    if c != 1 {
        return Err(Error::InvalidArgument {
            detail: format!("spectrum input must be single-channel, got {c} channels"),
        });
    }
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);
    let mut grid: Vec<Complex<f64>> = filter
        .data()
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    for r in 0..h {
        row_fft.process(&mut grid[r * w..(r + 1) * w]);
    }
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for cc in 0..w {
        for r in 0..h {
            col[r] = grid[r * w + cc];
        }
        col_fft.process(&mut col);
        for r in 0..h {
            grid[r * w + cc] = col[r];
        }
    }
    Ok(Tensor::from_fn(h, w, 1, |r, cc, _| {
        let src_r = (r + h - h / 2) % h;
        let src_c = (cc + w - w / 2) % w;
        grid[src_r * w + src_c].norm()
    }))
}

/// Affine map of the samples onto `[0, 1]`, returning the original
/// `(min, max)` range. A constant input maps to all zeros.
pub fn normalize_unit(t: &Tensor) -> (Tensor, f64, f64) {
    let min = t.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        (t.map(|v| (v - min) / (max - min)), min, max)
    } else {
        (Tensor::zeros_like(t), min, max)
    }
}

/// Which slice of the effective filter an atlas renders per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterView {
    /// Response of every output pixel to an impulse at the given input pixel.
    Column,
    /// Contribution of every input pixel to the given output pixel.
    Row,
}

/// One written atlas image and the affine range that was normalized away.
#[derive(Debug, Clone, PartialEq)]
pub struct AtlasEntry {
    /// The queried pixel, or `None` for the residual image.
    pub pixel: Option<(usize, usize, usize)>,
    pub path: PathBuf,
    pub min: f64,
    pub max: f64,
}

/// Writes one normalized PNG per queried pixel plus `residual.png`, and an
/// `atlas.txt` sidecar with lines `row col ch min max` (the residual line
/// starts with `residual`). Returns the written entries in file order.
pub fn filter_atlas(
    sys: &FrozenSystem,
    pixels: &[(usize, usize, usize)],
    view: FilterView,
    dir: &Path,
) -> Result<Vec<AtlasEntry>> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(pixels.len() + 1);
    let mut sidecar = String::new();
    for &p in pixels {
        let filter = match view {
            FilterView::Column => sys.effective_filter(p)?,
            FilterView::Row => sys.effective_filter_row(p)?,
        };
        let (normalized, min, max) = normalize_unit(&filter);
        let path = dir.join(format!("filter_r{}_c{}_ch{}.png", p.0, p.1, p.2));
        write_tensor(&path, &normalized)?;
        sidecar.push_str(&format!("{} {} {} {:.16e} {:.16e}\n", p.0, p.1, p.2, min, max));
        entries.push(AtlasEntry {
            pixel: Some(p),
            path,
            min,
            max,
        });
    }
    let (normalized, min, max) = normalize_unit(sys.effective_residual());
    let path = dir.join("residual.png");
    write_tensor(&path, &normalized)?;
    sidecar.push_str(&format!("residual {:.16e} {:.16e}\n", min, max));
    entries.push(AtlasEntry {
        pixel: None,
        path,
        min,
        max,
    });
    write_atomic(&dir.join("atlas.txt"), sidecar.as_bytes())?;
    Ok(entries)
}
