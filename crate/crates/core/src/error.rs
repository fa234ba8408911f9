use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A simulator reached a non-finite state.
    #[error("simulation fault at frame {frame}: {reason}")]
    SimulationFault { frame: usize, reason: String },

    /// A rejection sampler gave up.
    #[error("sampler gave up after {attempts} consecutive rejections: {reason}")]
    SamplerExhausted { attempts: usize, reason: String },

    /// Rejection sampling from the metamodel proposal accepted nothing.
    #[error("proposal starvation: {attempts} consecutive rejections (normalization is pathologically small)")]
    ProposalStarvation { attempts: usize },

    /// An importance weight was NaN or infinite.
    #[error("non-finite importance weight at run {run}: {detail}")]
    NonFiniteWeight { run: usize, detail: String },

    /// The GP system could not be factorized.
    #[error("metamodel fit failed: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
