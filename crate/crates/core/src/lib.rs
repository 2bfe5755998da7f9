//! Multigrid back-projection upscaling.
//!
//! The crate builds up from dense tensors and small sparse operators to:
//!
//! - classic iterative back-projection with a computable per-step
//!   contraction certificate (`resample`, `backprojection`),
//! - a recursive multigrid driver over exchangeable downscale/upscale
//!   operator pairs, classic or network-backed (`backprojection`, `convnet`),
//! - activation freezing that linearizes a network at one input into an
//!   effective filter and residual, with atlas and spectrum rendering
//!   (`freeze`, `vis`),
//! - reconstruction metrics (`metrics`) and deterministic on-disk formats
//!   for tensors, sparse operators, and networks (`io`, `convnet`).
//!
//! All floating point work is `f64` and deterministic: fixed summation
//! orders, ordered maps for sparse accumulation, and seeded generators.

pub mod backprojection;
pub mod convnet;
pub mod error;
pub mod freeze;
pub mod io;
pub mod metrics;
pub mod resample;
pub mod sparse;
pub mod tensor;
pub mod vis;

pub use backprojection::{
    certify, ibp, ibp_certified, mgbp, mgbp_generic, mgbp_generic_observed, mgbp_observed,
    mismatch_error, schedule_text, unfold_schedule, up_dims, CombineTag, ConvergenceTrace,
    LevelStack, NullObserver, OperatorPair, RecordingObserver, RunObserver, ScheduleAction,
    TraceEntry,
};
pub use convnet::{
    load_network, save_network, toy_net, toy_network_pair, Activation, ConvNet, ForwardRecord,
    LayerOp, LayerSpec, LinearLayer,
};
pub use error::{Error, Result};
pub use freeze::{
    activation_gain, explicit_fr, explicit_fr_with_cap, freeze, freeze_equivalence, FrozenSystem,
    GainRecord, DEFAULT_EXPLICIT_CAP,
};
pub use io::{read_tensor, write_atomic, write_tensor};
pub use metrics::{luminance, multiscale_l1, psnr, ssim, MetricReport, Ms1Term, SsimMode};
pub use resample::{
    bicubic_kernel, box_kernel, contraction_norm, downscale, gaussian_kernel, multi_level_downscale,
    nearest_kernel, operator_matrix, upscale, OperatorDirection, ResampleSpec, DEFAULT_BICUBIC_A,
    DEFAULT_OPERATOR_CAP, DEFAULT_SIGMA_FACTOR,
};
pub use sparse::{DenseMatrix, SparseOperator};
pub use tensor::{
    convolve, delta, devectorize, vectorize, Axis, BoundaryRule, Kernel, Tensor,
};
pub use vis::{filter_atlas, filter_spectrum, normalize_unit, AtlasEntry, FilterView};
