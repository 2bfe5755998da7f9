//! Image quality metrics: peak signal-to-noise ratio, structural similarity,
//! and a multi-level mean absolute error over pyramid outputs.

use crate::backprojection::LevelStack;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const SSIM_C1: f64 = 6.5025;
const SSIM_C2: f64 = 58.5225;

fn check_pair(context: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimMismatch {
            context: context.to_string(),
            expected: format!("{:?}", a.dims()),
            actual: format!("{:?}", b.dims()),
        });
    }
    Ok(())
}

/// 255 when both images sit entirely inside `[0, 1]`, otherwise 1: metrics
/// are defined on the 8-bit scale and unit-range data is promoted to it.
fn peak_scale(a: &Tensor, b: &Tensor) -> f64 {
    let unit = |t: &Tensor| t.data().iter().all(|&v| (0.0..=1.0).contains(&v));
    if unit(a) && unit(b) {
        255.0
    } else {
        1.0
    }
}

/// Peak signal-to-noise ratio in decibels against a peak of 255, jointly over
/// all channels. Identical inputs give positive infinity.
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_pair("psnr inputs", a, b)?;
    let scale = peak_scale(a, b);
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = scale * (x - y);
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// Averaging support for the structural similarity statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsimMode {
    /// One set of statistics over the whole image.
    Global,
    /// Mean similarity over every sliding square window of the given side.
    Windowed(usize),
}

/// BT.601 luma of a 3-channel image; single-channel images pass through.
pub fn luminance(t: &Tensor) -> Result<Tensor> {
    match t.channels() {
        1 => Ok(t.clone()),
        3 => {
            let (h, w, _) = t.dims();
            Ok(Tensor::from_fn(h, w, 1, |r, c, _| {
                0.299 * t.get(r, c, 0) + 0.587 * t.get(r, c, 1) + 0.114 * t.get(r, c, 2)
            }))
        }
        c => Err(Error::Unsupported {
            detail: format!("luminance needs 1 or 3 channels, got {c}"),
        }),
    }
}

fn ssim_statistic(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (ma, mb) = (mean(a), mean(b));
    let mut va = 0.0;
    let mut vb = 0.0;
    let mut cov = 0.0;
    for (x, y) in a.iter().zip(b) {
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
        cov += (x - ma) * (y - mb);
    }
    va /= n;
    vb /= n;
    cov /= n;
    ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
}

/// Structural similarity on the 8-bit scale, computed on luma. Identical
/// inputs give exactly 1.
pub fn ssim(a: &Tensor, b: &Tensor, mode: SsimMode) -> Result<f64> {
    check_pair("ssim inputs", a, b)?;
    let scale = peak_scale(a, b);
    let la = luminance(a)?.scale(scale);
    let lb = luminance(b)?.scale(scale);
    let (h, w, _) = la.dims();
    match mode {
        SsimMode::Global => Ok(ssim_statistic(la.data(), lb.data())),
        SsimMode::Windowed(win) => {
            if win == 0 || win > h || win > w {
                return Err(Error::WindowTooLarge { window: win, h, w });
            }
            let mut total = 0.0;
            let mut count = 0usize;
            let mut wa = vec![0.0; win * win];
            let mut wb = vec![0.0; win * win];
            for r0 in 0..=h - win {
                for c0 in 0..=w - win {
                    for i in 0..win {
                        for j in 0..win {
                            wa[i * win + j] = la.get(r0 + i, c0 + j, 0);
                            wb[i * win + j] = lb.get(r0 + i, c0 + j, 0);
                        }
                    }
                    total += ssim_statistic(&wa, &wb);
                    count += 1;
                }
            }
            Ok(total / count as f64)
        }
    }
}

/// One term of the multi-level error: mean absolute difference between the
/// output at `level` of run `k` and its target.
#[derive(Debug, Clone, PartialEq)]
pub struct Ms1Term {
    pub level: usize,
    pub run: usize,
    pub mean_abs: f64,
}

/// Sum over runs and levels of the mean absolute difference between each
/// stack level and the matching target pyramid level. `targets[l - 1]` is
/// the target for level `l`; a stack shorter than the target list, or vice
/// versa, is reported as the first missing term.
pub fn multiscale_l1(stacks: &[LevelStack], targets: &[Tensor]) -> Result<(f64, Vec<Ms1Term>)> {
    let mut total = 0.0;
    let mut terms = Vec::new();
    for (k, stack) in stacks.iter().enumerate() {
        for l in 1..=targets.len() {
            if l > stack.len() {
                return Err(Error::MissingTerm { l, k: k + 1 });
            }
            let got = stack.level(l)?;
            let want = &targets[l - 1];
            check_pair("multiscale term", want, got)?;
            let mean_abs = got.sub(want)?.l1_norm() / got.len() as f64;
            total += mean_abs;
            terms.push(Ms1Term {
                level: l,
                run: k + 1,
                mean_abs,
            });
        }
    }
    Ok((total, terms))
}

/// Bundle of the three metrics for one image pair, renderable as the
/// `key=value` report block.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub msl1: Option<f64>,
}

impl MetricReport {
    /// Computes psnr and global ssim for a pair; the multi-level term is
    /// filled in by pyramid-aware callers.
    pub fn for_pair(a: &Tensor, b: &Tensor) -> Result<MetricReport> {
        Ok(MetricReport {
            psnr_db: psnr(a, b)?,
            ssim: ssim(a, b, SsimMode::Global)?,
            msl1: None,
        })
    }

    /// One `key=value` line per metric; infinity renders as `inf`.
    pub fn to_text(&self) -> String {
        let mut out = format!("psnr_db={}\nssim={}\n", self.psnr_db, self.ssim);
        if let Some(m) = self.msl1 {
            out.push_str(&format!("msl1={m}\n"));
        }
        out
    }
}
