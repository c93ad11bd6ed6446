use thiserror::Error;

/// Errors produced by the compute modules.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("matrix is not symmetric positive semidefinite: min eigenvalue {0:e}")]
    NotPsd(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unstable drift: spectrum of B is not contained in the open left half-plane")]
    UnstableDrift,
    #[error("hypoellipticity fails: Kalman rank {rank} < {n}")]
    HypoellipticityFails { rank: usize, n: usize },
    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),
    #[error("domain escape: transported stencil leaves the grid by more than the boundary margin")]
    DomainEscape,
    #[error("aliasing: spectral tail energy {0:e} exceeds the band-limit tolerance")]
    Aliasing(f64),
    #[error("under-resolved region: refinement changed Gram entries by {0:e}")]
    UnderResolvedRegion(f64),
    #[error("no admissible tau: condition {condition} has no admissible bracket in (0, t0)")]
    NoAdmissibleTau { condition: usize },
    #[error("unobservable truncation: Gramian min eigenvalue {0:e}")]
    UnobservableTruncation(f64),
    #[error("ill-conditioned solve: residual {0:e}")]
    IllConditioned(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("propagator failure: {0}")]
    Propagator(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
