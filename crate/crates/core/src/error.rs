use std::io;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("trajectory has no frames")]
    EmptyTrajectory,
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    PixelOutOfBounds {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },
    #[error("invalid frame count {0}: at least 2 frames required")]
    InvalidFrameCount(usize),
    #[error("rotation endpoints are 180 degrees apart; geodesic is ambiguous")]
    AmbiguousGeodesic,
    #[error("step {step} out of range for schedule with {total} steps")]
    StepOutOfRange { step: usize, total: usize },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("camera baseline is zero; epipolar geometry is degenerate")]
    DegenerateBaseline,
    #[error("query pixel is the epipole")]
    EpipoleQuery,
    #[error("only {found} usable points, need at least {required}")]
    InsufficientOverlap { found: usize, required: usize },
    #[error("no finite depth ratios")]
    DegenerateDepth,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("token layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("optimization diverged at iteration {iteration}: loss {loss} > 10x initial {initial}")]
    Divergence {
        iteration: usize,
        loss: f64,
        initial: f64,
    },
    #[error("trajectory length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("all translations are zero; trajectory scale is undefined")]
    StaticTrajectory,
    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
