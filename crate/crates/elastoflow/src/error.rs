use thiserror::Error;

/// Errors surfaced by field algebra, operators, and the iteration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("rank mismatch: expected {expected}, got {got}")]
    RankMismatch { expected: &'static str, got: &'static str },

    #[error("input must be mean-zero (|mean| = {0:.3e})")]
    NotMeanZero(f64),

    #[error("input must be divergence-free (relative div = {0:.3e})")]
    NotDivergenceFree(f64),

    #[error("wavenumber {required} exceeds the grid band {band} (Nyquist overflow)")]
    NyquistOverflow { required: i64, band: i64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mollification scale {scale} below resolvable scale {min}")]
    UnresolvableScale { scale: f64, min: f64 },

    #[error("direction family search exhausted after {0} attempts")]
    FamilySearchExhausted(usize),

    #[error("amplitude argument left the certified ball (|arg| = {got:.3e} > {radius:.3e}); this indicates a bug")]
    GammaDomain { got: f64, radius: f64 },

    #[error("state invariant violated: {0}")]
    StateInvariant(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed snapshot or table: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
