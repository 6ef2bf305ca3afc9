use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("operation requires a {expected} space, got {found}")]
    SpaceKind {
        expected: &'static str,
        found: String,
    },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error(
        "coherent label ({p}, {q}) has radius {radius:.4} beyond the trust radius {trust:.4} \
         of cutoff {cutoff} (truncation norm deficit {deficit:.3e})"
    )]
    TrustRadius {
        p: f64,
        q: f64,
        radius: f64,
        trust: f64,
        cutoff: usize,
        deficit: f64,
    },

    #[error("matrix is not hermitian: max |M - M†| = {0:.3e}")]
    NotHermitian(f64),

    #[error("constraint set is empty")]
    EmptyConstraints,

    #[error("spectrum has no gap above its lowest eigenvalue cluster")]
    DegenerateGap,

    #[error(
        "threshold δ² = {delta_sq} lies within {tolerance:.1e} of eigenvalue {eigenvalue}; \
         move δ² away from the spectrum"
    )]
    BoundaryCollision {
        delta_sq: f64,
        eigenvalue: f64,
        tolerance: f64,
    },

    #[error("projector has rank 0; the physical space is empty")]
    EmptyPhysicalSpace,

    #[error("coherent-state window is empty for cutoff {cutoff}")]
    EmptyWindow { cutoff: usize },

    #[error("Newton projection failed for {failed} of {total} seeds")]
    IllConditionedSurface { failed: usize, total: usize },

    #[error("bracket matrix is singular (min singular value {0:.3e}); constraints are not second class")]
    NotSecondClass(f64),

    #[error("constraint drift {drift:.3e} exceeded {limit:.1e} at step {step}; reduce dt")]
    DriftExplosion { drift: f64, limit: f64, step: usize },

    #[error("polynomial parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("quadrature did not converge: residual {0:.3e}")]
    QuadratureNonConvergence(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
