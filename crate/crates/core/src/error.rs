use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The SINR targets cannot be met by any beamformer for the given channels.
    #[error("beamforming problem is infeasible (best normalized min-slack {min_slack:.3e})")]
    Infeasible { min_slack: f64 },

    #[error("solver did not converge after {iterations} iterations: {reason}")]
    NonConvergence { iterations: usize, reason: String },

    /// The DC loop ran out of penalty escalations with a rank residual above tolerance.
    #[error("rank-one penalty did not converge (residual {residual:.3e})")]
    RankResidual { residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible { .. })
    }
}
