use alloc::string::String;

/// Errors raised by the core crate.
///
/// Programming errors (mismatched tensor shapes between layers that were
/// built together) panic instead; these variants cover inputs a caller can
/// legitimately get wrong.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain index {index} out of range for {count} domains")]
    DomainOutOfRange { index: usize, count: usize },

    #[error("expected {expected} landmarks, found {found}")]
    LandmarkCount { expected: usize, found: usize },

    #[error("landmark {index} at ({x}, {y}) lies outside the {width}x{height} image")]
    PointOutOfBounds {
        index: usize,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("landmarks are in native coordinates; resize them before encoding")]
    NativeSpace,

    #[error("sigma must be positive, got {0}")]
    InvalidSigma(f64),

    #[error("heatmap channel {channel} contains NaN")]
    NaNInChannel { channel: usize },

    #[error("spatial size {height}x{width} is not divisible by {divisor}")]
    Indivisible {
        height: usize,
        width: usize,
        divisor: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("wrist calibration endpoints coincide")]
    DegenerateCalibration,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown model variant `{0}`")]
    UnknownVariant(String),

    #[error("non-finite loss at step {step} on domain `{domain}`")]
    NonFiniteLoss { step: usize, domain: String },

    #[error("checkpoint parameter mismatch: {0}")]
    ParamMismatch(String),

    #[error("training observer failed: {0}")]
    Observer(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
