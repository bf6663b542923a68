use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Mismatched vector shapes or missing state components.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A state or drift entry became NaN or infinite.
    #[error("non-finite value produced{}", match .step { Some(k) => format!(" at step {k}"), None => String::new() })]
    NonFinite { step: Option<u64> },

    /// An operation was called outside its precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Bridge drift evaluated within `eps_bound` of its pinning time.
    #[error("bridge drift is singular at t = {t} (pin time {pin})")]
    Singularity { t: f64, pin: f64 },

    /// The noise schedule does not vary at the probe point, so the drift/noise ratio is undefined.
    #[error("degenerate scaling probe: {0}")]
    DegenerateProbe(String),

    #[error("sampler did not reach the horizon within {limit} steps (stopped at t = {t})")]
    RunawayLoop { limit: u64, t: f64 },

    #[error("chain {chain} aborted: {source}")]
    Chain {
        chain: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Attach a step index to a step-kernel failure.
    pub fn at_step(self, k: u64) -> Self {
        match self {
            Error::NonFinite { .. } => Error::NonFinite { step: Some(k) },
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
