use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetroError {
    #[error("invalid Fock cutoff: {0}")]
    InvalidDims(String),

    /// The truncated space does not hold enough of the probe.
    #[error("cutoff too small for {probe}: tail probability {tail:.3e} exceeds threshold {threshold:.1e}")]
    CutoffTooSmall { probe: String, tail: f64, threshold: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state is not path-symmetric: mode values {0:.9} and {1:.9} differ")]
    NotPathSymmetric(f64, f64),

    #[error("undefined for zero mean photon number")]
    ZeroPhotonNumber,

    #[error("zero number variance in mode {0}; J parameter undefined")]
    ZeroVariance(usize),

    #[error("no eigenvalue of the averaged state exceeds the support cutoff {0:.1e}")]
    EmptySupport(f64),

    #[error("observed outcome sequence has zero evidence")]
    ZeroEvidence,

    #[error("tensor-power dimension {dim} exceeds limit {limit}")]
    DimensionOverflow { dim: usize, limit: usize },

    #[error("criterion not reached on the supplied curve")]
    NotReached,

    #[error("unknown {kind}: {name}")]
    Unknown { kind: &'static str, name: String },
}

pub type MetroResult<T> = Result<T, MetroError>;
