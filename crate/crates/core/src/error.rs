use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not Schur stable (spectral radius {radius:.6})")]
    Unstable { radius: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{solver} did not converge within {iterations} iterations")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
    },

    #[error("biconjugation breakdown at vector pair {index} (|p^T q| = {pivot:.3e})")]
    Breakdown { index: usize, pivot: f64 },

    #[error(
        "no stable reduced model up to rank {max_rank} (last rank {rank}, spectral radius {radius:.6})"
    )]
    EscalationFailed {
        max_rank: usize,
        rank: usize,
        radius: f64,
    },

    #[error("projection violates the port conditions: {0}")]
    ConditionViolated(String),

    #[error("retrofit port sets overlap on input {port}")]
    OverlappingPorts { port: usize },

    #[error("sequence energy does not converge")]
    Divergent,

    #[error("network: {0}")]
    Network(String),

    #[error("{source_name}:{line}:{column}: {message}")]
    Schema {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    /// Schema error located at the start of `span` within `text`.
    pub(crate) fn schema(text: &str, source_name: &str, span: Option<std::ops::Range<usize>>, message: impl Into<String>) -> Self {
        let offset = span.map_or(0, |s| s.start.min(text.len()));
        let before = &text[..offset];
        Error::Schema {
            source_name: source_name.to_string(),
            line: before.matches('\n').count() + 1,
            column: before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1,
            message: message.into(),
        }
    }

    pub(crate) fn dim(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

