use thiserror::Error;

/// Errors raised anywhere in the estimation stack.
#[derive(Debug, Error)]
pub enum MpeError {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration cannot be resolved (bad bandwidth rule, missing column, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A required evaluation point fell below a density or design floor.
    #[error("trimmed: {reason} ({count} point(s))")]
    Trimmed { reason: String, count: usize },

    /// The estimator could not produce a value.
    #[error("estimation failure: {0}")]
    Estimation(String),

    /// Input data could not be loaded.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// A named preset does not exist.
    #[error("lookup error: unknown preset `{0}`")]
    Lookup(String),

    /// A failure inside a Monte Carlo replication, tagged for exact reproduction.
    #[error("replication {replication} (seed {seed}, stream {replication}) failed: {source}")]
    Replication {
        replication: usize,
        seed: u64,
        #[source]
        source: Box<MpeError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl MpeError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        MpeError::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        MpeError::Config(msg.into())
    }

    pub(crate) fn estimation(msg: impl Into<String>) -> Self {
        MpeError::Estimation(msg.into())
    }

    pub(crate) fn trimmed(reason: impl Into<String>, count: usize) -> Self {
        MpeError::Trimmed {
            reason: reason.into(),
            count,
        }
    }

    /// Process exit code used by the CLI: 1 for estimation failures, 2 for
    /// configuration or ingestion problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            MpeError::Trimmed { .. } | MpeError::Estimation(_) | MpeError::Domain(_) => 1,
            MpeError::Replication { source, .. } => source.exit_code(),
            MpeError::Config(_)
            | MpeError::Ingestion(_)
            | MpeError::Lookup(_)
            | MpeError::Io(_)
            | MpeError::Csv(_)
            | MpeError::Json(_) => 2,
        }
    }

    pub fn is_trimmed(&self) -> bool {
        matches!(self, MpeError::Trimmed { .. })
    }
}

pub type Result<T> = std::result::Result<T, MpeError>;
