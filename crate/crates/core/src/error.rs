use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular system (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("degenerate autocorrelation: r[0] = {0}")]
    DegenerateAutocorrelation(f64),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("geometry violation: {0}")]
    Geometry(String),

    #[error("sample-rate mismatch: scene runs at {scene} Hz, signal at {signal} Hz")]
    SampleRateMismatch { scene: u32, signal: u32 },

    #[error("trajectory underrun: trajectory ends at {available:.3} s, signal lasts {needed:.3} s")]
    TrajectoryUnderrun { available: f64, needed: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no active segments in reference signal")]
    NoActiveSegments,

    #[error("impulse response is identically zero")]
    ZeroResponse,

    #[error("filter log: {0}")]
    FilterLog(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that come from the numbers rather than the inputs'
    /// shape or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. } | Error::DegenerateAutocorrelation(_) | Error::ZeroResponse
        )
    }
}
