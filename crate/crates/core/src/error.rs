use thiserror::Error;

/// Every failure the solver can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index {index} out of range (limit {limit}) for {what}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("parse failure at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: expected {expected_nx}x{expected_ny}, found {found}")]
    DimensionMismatch {
        expected_nx: usize,
        expected_ny: usize,
        found: String,
    },

    #[error("nonpositive permeability {value} at cell ({ix}, {iy})")]
    NonPositivePermeability { ix: usize, iy: usize, value: f64 },

    #[error("non-finite source value at ({x}, {y})")]
    NonFiniteSource { x: f64, y: f64 },

    #[error("matrix is not positive definite (pivot {pivot} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("non-coercive bilinear form: v^T A v = {energy} for |v|^2 = {norm_sq}")]
    NonCoercive { energy: f64, norm_sq: f64 },

    #[error("empty region")]
    EmptyRegion,

    #[error("multiscale space is empty")]
    EmptySpace,

    #[error("zero reference norm")]
    ZeroReference,

    #[error("not enough usable states to compute a rate")]
    InsufficientStates,

    #[error("{stage}: {source}")]
    Context {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps the error with a description of where it happened.
    pub fn context(self, stage: impl Into<String>) -> Self {
        Error::Context {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::NotPositiveDefinite { .. }
                | Error::Solver(_)
                | Error::NonCoercive { .. }
                | Error::EmptySpace
                | Error::ZeroReference
                | Error::InsufficientStates
                | Error::NonFiniteSource { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait ResultExt<T> {
    fn stage(self, stage: impl FnOnce() -> String) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn stage(self, stage: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| e.context(stage()))
    }
}
