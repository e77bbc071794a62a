use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("SBS {sbs} has no candidate UE in its coverage area")]
    EmptyCell { sbs: usize },

    #[error("zero distance between SBS {from} and the UE of SBS {to}")]
    ZeroDistance { from: usize, to: usize },

    #[error("quadrature did not converge: estimate {estimate:e}, error estimate {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("effective capacity undefined: {0}")]
    Capacity(String),

    #[error("infeasible: queue of SBS {sbs:?} is unstable (capacity below arrival rate)")]
    Infeasible { sbs: Vec<usize> },

    #[error("no sign change while bracketing the root for SBS {sbs}")]
    NoBracket { sbs: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
