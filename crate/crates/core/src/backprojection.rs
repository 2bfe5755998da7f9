//! Iterative back-projection, its multigrid extension, and the diagnostics
//! that certify and trace their convergence.
//!
//! The classic iteration alternates a measured mismatch at low resolution
//! with an interpolated correction at high resolution. The multigrid variant
//! runs the same correction recursively across a stack of resolutions; with
//! `mu` corrections per level the recursion fans out geometrically, visiting
//! level `j` exactly `mu^(k-j)` times while refining level `k`. Operators are
//! pluggable per level, so learned modules can replace the classic
//! blur-decimate / zero-insert-interpolate pair without changing the
//! recursion.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::convnet::ConvNet;
use crate::error::{Error, Result};
use crate::resample::{self, contraction_norm, operator_matrix, OperatorDirection, ResampleSpec};
use crate::tensor::Tensor;

/// One recorded refinement step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub level: usize,
    pub error_l1: f64,
    /// Ratio to the previously recorded norm; absent for the first record or
    /// when the previous norm is too small to divide by.
    pub ratio: Option<f64>,
}

/// Per-run record of mismatch-error norms and their step-to-step ratios.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    entries: Vec<TraceEntry>,
    certified_norm: Option<f64>,
}

impl ConvergenceTrace {
    pub fn new() -> ConvergenceTrace {
        ConvergenceTrace::default()
    }

    fn record(&mut self, iter: usize, level: usize, error_l1: f64) {
        let ratio = match self.entries.last() {
            Some(prev) if prev.error_l1 > 1e-300 => Some(error_l1 / prev.error_l1),
            _ => None,
        };
        self.entries.push(TraceEntry {
            iter,
            level,
            error_l1,
            ratio,
        });
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    /// Contraction certificate attached to this run, when one was computed.
    pub fn certified_norm(&self) -> Option<f64> {
        self.certified_norm
    }

    pub fn set_certified_norm(&mut self, norm: f64) {
        self.certified_norm = Some(norm);
    }

    /// The recorded ratios, skipping entries that have none.
    pub fn ratios(&self) -> Vec<f64> {
        self.entries.iter().filter_map(|e| e.ratio).collect()
    }

    /// CSV export; the ratio column is empty where no ratio was recorded.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,level,error_l1,ratio\n");
        for e in &self.entries {
            let ratio = e.ratio.map(|r| r.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", e.iter, e.level, e.error_l1, ratio));
        }
        out
    }
}

/// Ordered tensors `Y_1 .. Y_L`, one per resolution level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStack {
    levels: Vec<Tensor>,
}

impl LevelStack {
    pub fn new(y1: Tensor) -> LevelStack {
        LevelStack { levels: vec![y1] }
    }

    pub fn push(&mut self, y: Tensor) {
        self.levels.push(y);
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Level `k`, counted from 1 at the base resolution.
    pub fn level(&self, k: usize) -> Result<&Tensor> {
        if k == 0 || k > self.levels.len() {
            return Err(Error::OutOfBounds {
                context: "level stack",
                index: k.to_string(),
                bounds: format!("1..={}", self.levels.len()),
            });
        }
        Ok(&self.levels[k - 1])
    }

    /// Highest-resolution level.
    pub fn top(&self) -> &Tensor {
        self.levels.last().expect("stack holds at least one level")
    }

    pub fn levels(&self) -> &[Tensor] {
        &self.levels
    }

    pub fn into_levels(self) -> Vec<Tensor> {
        self.levels
    }
}

/// How an operator pair folds the reference image into the correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineTag {
    /// Correction is `upscale(reference - d)`.
    ClassicSubtract,
    /// Correction is a network applied to the channel concatenation of
    /// reference and `d`.
    NetworkConcat,
}

type DownFn = dyn Fn(&Tensor) -> Result<Tensor> + Send + Sync;
type UpFn = dyn Fn(&Tensor, &Tensor) -> Result<Tensor> + Send + Sync;

/// Downscale map plus a correction map taking `(reference, d)`, used between
/// two adjacent levels of the recursion.
#[derive(Clone)]
pub struct OperatorPair {
    down: Arc<DownFn>,
    up: Arc<UpFn>,
    tag: CombineTag,
}

impl fmt::Debug for OperatorPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorPair").field("tag", &self.tag).finish()
    }
}

impl OperatorPair {
    /// Blur-decimate down map and `upscale(reference - d)` correction.
    pub fn classic(spec: &ResampleSpec) -> OperatorPair {
        let down_spec = spec.clone();
        let up_spec = spec.clone();
        OperatorPair {
            down: Arc::new(move |u| resample::downscale(u, &down_spec)),
            up: Arc::new(move |reference, d| {
                resample::upscale(&reference.sub(d)?, &up_spec)
            }),
            tag: CombineTag::ClassicSubtract,
        }
    }

    /// Learned modules: `down` maps a level to the one below; `up` consumes
    /// the channel concatenation of the reference and `d`.
    pub fn network(down: Arc<ConvNet>, up: Arc<ConvNet>) -> OperatorPair {
        OperatorPair {
            down: Arc::new(move |u| down.forward_output(u)),
            up: Arc::new(move |reference, d| up.forward_output(&reference.concat_channels(d)?)),
            tag: CombineTag::NetworkConcat,
        }
    }

    pub fn from_fns(down: Arc<DownFn>, up: Arc<UpFn>, tag: CombineTag) -> OperatorPair {
        OperatorPair { down, up, tag }
    }

    pub fn down(&self, u: &Tensor) -> Result<Tensor> {
        (self.down)(u)
    }

    /// Correction to add at the upper level, given the stored reference for
    /// the lower level and the refined downscale `d`.
    pub fn correction(&self, reference: &Tensor, d: &Tensor) -> Result<Tensor> {
        (self.up)(reference, d)
    }

    pub fn tag(&self) -> CombineTag {
        self.tag
    }
}

/// One step kind in an unfolded refinement schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleAction {
    Upscale,
    Downscale,
    Correct,
}

impl fmt::Display for ScheduleAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ScheduleAction::Upscale => "upscale",
            ScheduleAction::Downscale => "downscale",
            ScheduleAction::Correct => "correct",
        };
        f.write_str(name)
    }
}

/// Hook receiving the live recursion events of a run.
pub trait RunObserver {
    fn action(&mut self, _level: usize, _action: ScheduleAction) {}
    fn enter_bp(&mut self, _level: usize) {}
}

/// Observer that ignores everything.
pub struct NullObserver;

impl RunObserver for NullObserver {}

/// Observer that collects the action sequence and per-level call counts.
#[derive(Debug, Default)]
pub struct RecordingObserver {
    pub actions: Vec<(usize, ScheduleAction)>,
    pub bp_calls: BTreeMap<usize, usize>,
}

impl RunObserver for RecordingObserver {
    fn action(&mut self, level: usize, action: ScheduleAction) {
        self.actions.push((level, action));
    }

    fn enter_bp(&mut self, level: usize) {
        *self.bp_calls.entry(level).or_insert(0) += 1;
    }
}

/// Grid dims after one upscale by `s`; unit axes stay unit.
pub fn up_dims(dims: (usize, usize, usize), s: usize) -> (usize, usize, usize) {
    let (h, w, c) = dims;
    (
        if h == 1 { 1 } else { h * s },
        if w == 1 { 1 } else { w * s },
        c,
    )
}

/// Classic back-projection: repeat `iters` times the update
/// `y += upscale(x - downscale(y))`, tracing the mismatch norm per step.
pub fn ibp(
    x: &Tensor,
    y0: &Tensor,
    spec: &ResampleSpec,
    iters: usize,
) -> Result<(Tensor, ConvergenceTrace)> {
    let expected = up_dims(x.dims(), spec.scale());
    if y0.dims() != expected {
        return Err(Error::DimMismatch {
            context: "back-projection start image".to_string(),
            expected: format!("{:?}", expected),
            actual: format!("{:?}", y0.dims()),
        });
    }
    let mut trace = ConvergenceTrace::new();
    let mut y = y0.clone();
    let mut e = x.sub(&resample::downscale(&y, spec)?)?;
    trace.record(0, 2, e.l1_norm());
    for t in 1..=iters {
        y = y.add(&resample::upscale(&e, spec)?)?;
        e = x.sub(&resample::downscale(&y, spec)?)?;
        trace.record(t, 2, e.l1_norm());
    }
    Ok((y, trace))
}

/// Contraction certificate of `spec`'s operator pair on the grid whose
/// low-resolution side has `lo_dims`.
pub fn certify(spec: &ResampleSpec, lo_dims: (usize, usize, usize)) -> Result<f64> {
    let hi = up_dims(lo_dims, spec.scale());
    let d = operator_matrix(spec, OperatorDirection::Down, hi)?;
    let u = operator_matrix(spec, OperatorDirection::Up, lo_dims)?;
    contraction_norm(&d, &u)
}

/// [`ibp`] with the contraction certificate computed first and attached to
/// the trace.
pub fn ibp_certified(
    x: &Tensor,
    y0: &Tensor,
    spec: &ResampleSpec,
    iters: usize,
) -> Result<(Tensor, ConvergenceTrace)> {
    let c = certify(spec, x.dims())?;
    let (y, mut trace) = ibp(x, y0, spec, iters)?;
    trace.set_certified_norm(c);
    Ok((y, trace))
}

/// `mu` recursive correction rounds refining `u` at level `k` against the
/// stored lower levels. Level 1 returns `u` unchanged.
pub fn bp_step(
    u: &Tensor,
    k: usize,
    mu: usize,
    stack: &LevelStack,
    ops: &[OperatorPair],
) -> Result<Tensor> {
    bp_step_observed(u, k, mu, stack, ops, &mut NullObserver)
}

/// [`bp_step`] reporting every invocation and action to the observer.
pub fn bp_step_observed(
    u: &Tensor,
    k: usize,
    mu: usize,
    stack: &LevelStack,
    ops: &[OperatorPair],
    obs: &mut dyn RunObserver,
) -> Result<Tensor> {
    obs.enter_bp(k);
    if k <= 1 {
        return Ok(u.clone());
    }
    if stack.len() < k - 1 {
        return Err(Error::InvalidArgument {
            detail: format!(
                "refining level {k} needs {} stored levels, stack holds {}",
                k - 1,
                stack.len()
            ),
        });
    }
    if ops.len() < k - 1 {
        return Err(Error::InvalidArgument {
            detail: format!(
                "refining level {k} needs {} operator pairs, got {}",
                k - 1,
                ops.len()
            ),
        });
    }
    let pair = &ops[k - 2];
    let mut u = u.clone();
    for _ in 0..mu {
        obs.action(k, ScheduleAction::Downscale);
        let d = bp_step_observed(&pair.down(&u)?, k - 1, mu, stack, ops, obs)?;
        obs.action(k, ScheduleAction::Correct);
        u = u.add(&pair.correction(stack.level(k - 1)?, &d)?)?;
    }
    Ok(u)
}

/// Multigrid back-projection with pluggable per-level operators and optional
/// latent-space transfer nets. Level 1 is `analysis(x)`; each further level
/// starts from the correction map applied with a zero refinement (for the
/// classic pair this is exactly the plain upscale of the level below) and is
/// then refined by [`bp_step`]. The returned stack is mapped through
/// `synthesis` per level.
pub fn mgbp_generic(
    x: &Tensor,
    ops: &[OperatorPair],
    analysis: Option<&ConvNet>,
    synthesis: Option<&ConvNet>,
    mu: usize,
    levels: usize,
) -> Result<LevelStack> {
    mgbp_generic_observed(x, ops, analysis, synthesis, mu, levels, &mut NullObserver)
}

/// [`mgbp_generic`] reporting recursion events to the observer.
pub fn mgbp_generic_observed(
    x: &Tensor,
    ops: &[OperatorPair],
    analysis: Option<&ConvNet>,
    synthesis: Option<&ConvNet>,
    mu: usize,
    levels: usize,
    obs: &mut dyn RunObserver,
) -> Result<LevelStack> {
    if levels == 0 {
        return Err(Error::InvalidArgument {
            detail: "level count must be at least 1".to_string(),
        });
    }
    if ops.len() < levels - 1 {
        return Err(Error::InvalidArgument {
            detail: format!(
                "{levels} levels need {} operator pairs, got {}",
                levels - 1,
                ops.len()
            ),
        });
    }
    let y1 = match analysis {
        Some(net) => net.forward_output(x)?,
        None => x.clone(),
    };
    let mut stack = LevelStack::new(y1);
    for k in 2..=levels {
        let pair = &ops[k - 2];
        obs.action(k, ScheduleAction::Upscale);
        let u0 = {
            let prev = stack.level(k - 1)?;
            pair.correction(prev, &Tensor::zeros_like(prev))?
        };
        let yk = bp_step_observed(&u0, k, mu, &stack, ops, obs)?;
        stack.push(yk);
    }
    match synthesis {
        None => Ok(stack),
        Some(net) => {
            let mut out = Vec::with_capacity(levels);
            for y in stack.into_levels() {
                out.push(net.forward_output(&y)?);
            }
            let mut stack = LevelStack::new(out.remove(0));
            for y in out {
                stack.push(y);
            }
            Ok(stack)
        }
    }
}

/// Multigrid back-projection with the classic operator pair at every level.
/// The trace holds one entry per level: the base-resolution mismatch of that
/// level's output.
pub fn mgbp(
    x: &Tensor,
    spec: &ResampleSpec,
    mu: usize,
    levels: usize,
) -> Result<(LevelStack, ConvergenceTrace)> {
    mgbp_observed(x, spec, mu, levels, &mut NullObserver)
}

/// [`mgbp`] reporting recursion events to the observer.
pub fn mgbp_observed(
    x: &Tensor,
    spec: &ResampleSpec,
    mu: usize,
    levels: usize,
    obs: &mut dyn RunObserver,
) -> Result<(LevelStack, ConvergenceTrace)> {
    let ops: Vec<OperatorPair> = (1..levels).map(|_| OperatorPair::classic(spec)).collect();
    let stack = mgbp_generic_observed(x, &ops, None, None, mu, levels, obs)?;
    let mut trace = ConvergenceTrace::new();
    for k in 1..=levels {
        let err = mismatch_error(x, stack.level(k)?, spec, k - 1)?;
        trace.record(k - 1, k, err);
    }
    Ok((stack, trace))
}

/// `||x - downscale^levels(y)||_1`, the base-resolution mismatch of `y`.
pub fn mismatch_error(x: &Tensor, y: &Tensor, spec: &ResampleSpec, levels: usize) -> Result<f64> {
    let down = resample::multi_level_downscale(y, spec, levels)?;
    if down.dims() != x.dims() {
        return Err(Error::DimMismatch {
            context: format!("mismatch error after {levels} downscales"),
            expected: format!("{:?}", x.dims()),
            actual: format!("{:?}", down.dims()),
        });
    }
    Ok(x.sub(&down)?.l1_norm())
}

/// The deterministic action sequence an observed run with the same `mu` and
/// level count produces.
pub fn unfold_schedule(mu: usize, levels: usize) -> Vec<(usize, ScheduleAction)> {
    let mut out = Vec::new();
    for k in 2..=levels {
        out.push((k, ScheduleAction::Upscale));
        schedule_bp(k, mu, &mut out);
    }
    out
}

fn schedule_bp(k: usize, mu: usize, out: &mut Vec<(usize, ScheduleAction)>) {
    if k <= 1 {
        return;
    }
    for _ in 0..mu {
        out.push((k, ScheduleAction::Downscale));
        schedule_bp(k - 1, mu, out);
        out.push((k, ScheduleAction::Correct));
    }
}

/// Schedule export: one `level action` pair per line.
pub fn schedule_text(schedule: &[(usize, ScheduleAction)]) -> String {
    let mut out = String::new();
    for (level, action) in schedule {
        out.push_str(&format!("{level} {action}\n"));
    }
    out
}
