use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown parameter `{name}` for system {system}")]
    UnknownParameter { system: String, name: String },

    #[error("trajectory too short: {len} samples, need at least {required}")]
    TrajectoryTooShort { len: usize, required: usize },

    #[error("non-finite state encountered at recorded index {index}")]
    BlowUp { index: usize },

    #[error("degenerate bandwidth: the {eta}-quantile of pairwise squared distances is zero")]
    DegenerateBandwidth { eta: f64 },

    #[error("row {row} has no kernel entry above the zero threshold; enlarge the bandwidth")]
    IsolatedPoint { row: usize },

    #[error("least-squares solve failed: {0}")]
    Solver(String),

    #[error("truth field is identically zero on the test points")]
    ZeroDenominator,

    #[error("invalid stencil: {0}")]
    InvalidStencil(String),

    #[error("coordinate {coordinate}: {source}")]
    Coordinate {
        coordinate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or IO).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::BlowUp { .. }
            | Error::DegenerateBandwidth { .. }
            | Error::IsolatedPoint { .. }
            | Error::Solver(_)
            | Error::ZeroDenominator => true,
            Error::Coordinate { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
