//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {expected} vs {actual}")]
    DimMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("{axis} {size} is not divisible by {divisor}: pad by {pad}")]
    NotDivisible {
        axis: &'static str,
        size: usize,
        divisor: usize,
        pad: usize,
    },

    #[error("{context}: index {index} out of bounds {bounds}")]
    OutOfBounds {
        context: &'static str,
        index: String,
        bounds: String,
    },

    #[error("kernel exceeds reflectable extent: kernel {kh}x{kw} on image {h}x{w}")]
    ReflectExtent {
        kh: usize,
        kw: usize,
        h: usize,
        w: usize,
    },

    #[error("{axis} kernel extent {extent} on unit axis must be 1")]
    UnitAxisKernel { axis: &'static str, extent: usize },

    #[error("no matrix for nonlinear layer {index}")]
    NonlinearLayer { index: usize },

    #[error("weights blob truncated: expected {expected} bytes, found {actual} bytes")]
    TruncatedBlob { expected: usize, actual: usize },

    #[error("{context} needs {required} entries, cap is {cap}: raise the cap to at least {required}")]
    CapExceeded {
        context: &'static str,
        required: usize,
        cap: usize,
    },

    #[error("layer {layer}: expected {expected} channels, got {actual}")]
    ChannelMismatch {
        layer: usize,
        expected: usize,
        actual: usize,
    },

    #[error("malformed {format} data: field {field}: {detail}")]
    Malformed {
        format: &'static str,
        field: &'static str,
        detail: String,
    },

    #[error("unknown {what} name {name:?}")]
    UnknownName { what: &'static str, name: String },

    #[error("missing term (L={l}, k={k}) in multi-scale loss inputs")]
    MissingTerm { l: usize, k: usize },

    #[error("non-finite sample in {context}")]
    NonFinite { context: String },

    #[error("window {window} exceeds image extent {h}x{w}")]
    WindowTooLarge { window: usize, h: usize, w: usize },

    #[error("empty input: {context}")]
    EmptyInput { context: &'static str },

    #[error("unsupported input: {detail}")]
    Unsupported { detail: String },

    #[error("invalid argument: {detail}")]
    InvalidArgument { detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}
