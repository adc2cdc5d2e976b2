use thiserror::Error;

/// Errors surfaced by the physics and analysis routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A parameter fell outside its physical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The Fock-space cutoff is too small for the requested propagation:
    /// probability leaked into the top two layers exceeds the tolerance.
    #[error("cutoff too small: leakage {leakage:.3e} into layers n = {cutoff}, {} exceeds 1e-6", cutoff - 1)]
    CutoffTooSmall { cutoff: usize, leakage: f64 },

    /// A heralded source with unit gain never triggers.
    #[error("degenerate source: trigger probability is zero at gain 1")]
    DegenerateSource,

    /// More coincidence orders were requested than the stats contain.
    #[error("insufficient orders: requested m = {requested}, stats provide M = {available}")]
    InsufficientOrders { requested: usize, available: usize },

    /// A fit stage failed to converge within its iteration cap.
    #[error("fit did not converge within {0} iterations")]
    NonConvergence(u32),

    /// A spectral filter window does not intersect the frequency grid.
    #[error("empty passband: filter [{lo:.6e}, {hi:.6e}] misses the grid")]
    EmptyPassband { lo: f64, hi: f64 },

    /// Malformed binary or CSV payload.
    #[error("format error: {0}")]
    Format(String),

    /// Underlying I/O failure, with the offending path.
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn io(path: impl Into<String>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
