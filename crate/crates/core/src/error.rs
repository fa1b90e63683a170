use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("rank {rank} out of range 0..={max} for dimension {dim}")]
    RankOutOfRange { dim: usize, rank: usize, max: usize },

    #[error("matrix contains non-finite entries ({0})")]
    NonFinite(&'static str),

    #[error("{0} must be square")]
    NotSquare(&'static str),

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("{0} is rank deficient")]
    RankDeficient(&'static str),

    #[error(
        "bottom {size}x{size} block of {which} is singular; reorder the {which_axis} so that \
         the last {size} are linearly independent (see `rrmar_to_pseudo_reordered`)"
    )]
    NonRotatable {
        which: &'static str,
        which_axis: &'static str,
        size: usize,
    },

    #[error("process is not stationary (spectral radius {radius:.6} >= 1)")]
    NonStationary { radius: f64 },

    #[error("cannot rescale a zero coefficient to a signal-to-noise ratio")]
    ZeroCoefficient,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough observations: {0}")]
    TooFewObservations(String),

    #[error("estimation failed: {message}")]
    EstimationFailed {
        message: String,
        starts: Vec<crate::estimate::StartDiagnostic>,
    },

    #[error("selection failed: every candidate fit failed")]
    SelectionFailed,

    #[error("could not draw a stationary data-generating process in {attempts} attempts")]
    RejectedDraw { attempts: usize },

    #[error("experiment failed: {failed} of {total} fits failed (limit 10%)")]
    ExperimentFailed { failed: usize, total: usize },

    #[error("density of constant draws (value {value}) is a degenerate spike")]
    DegenerateDensity { value: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures, as opposed to malformed input or usage problems.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite(_)
                | Error::RankDeficient(_)
                | Error::NonRotatable { .. }
                | Error::NonStationary { .. }
                | Error::ZeroCoefficient
                | Error::EstimationFailed { .. }
                | Error::SelectionFailed
                | Error::RejectedDraw { .. }
                | Error::ExperimentFailed { .. }
                | Error::DegenerateDensity { .. }
                | Error::NonFinite(_)
        )
    }
}

pub(crate) fn shape_err(
    context: &'static str,
    expected: impl std::fmt::Display,
    found: impl std::fmt::Display,
) -> Error {
    Error::Shape {
        context,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
