//! Default numerical tolerances, collected in one record so a run can
//! override any of them.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Max-entry deviation allowed for an operator flagged hermitian.
    pub hermitian: f64,
    /// Allowed |‖ψ‖ − 1| for states reported as normalized.
    pub normalization: f64,
    /// Truncation norm deficit that defines the coherent-state trust radius.
    pub trust_deficit: f64,
    /// Per-pair residual ‖Mv − λv‖ accepted from the eigensolver.
    pub eigen_residual: f64,
    /// ‖E² − E‖ bound for constructed projectors.
    pub idempotence: f64,
    /// |rank − tr E| bound.
    pub rank_trace: f64,
    /// Minimum distance between δ² and any eigenvalue.
    pub boundary: f64,
    /// Relative gap below which neighbouring eigenvalues form one cluster.
    pub cluster_rel_gap: f64,
    /// Commutator residual below which an operator counts as observable.
    pub observable: f64,
    /// Step used by finite-difference metric estimates.
    pub fd_step: f64,
    /// Constraint satisfaction demanded of Newton surface samples.
    pub surface: f64,
    /// On-surface bracket residual treated as zero (first class).
    pub first_class: f64,
    /// Smallest bracket-matrix singular value accepted as invertible (second class).
    pub second_class: f64,
    /// Singular-value floor for solving the multiplier system.
    pub multiplier_min_sv: f64,
    /// Constraint drift at which a trajectory is abandoned.
    pub drift_limit: f64,
    /// Fraction of failed Newton seeds that marks a surface ill-conditioned.
    pub newton_failure_rate: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermitian: 1e-12,
            normalization: 1e-10,
            trust_deficit: 1e-10,
            eigen_residual: 1e-10,
            idempotence: 1e-10,
            rank_trace: 1e-8,
            boundary: 1e-9,
            cluster_rel_gap: 1e-6,
            observable: 1e-9,
            fd_step: 1e-4,
            surface: 1e-10,
            first_class: 1e-8,
            second_class: 1e-6,
            multiplier_min_sv: 1e-10,
            drift_limit: 1e-3,
            newton_failure_rate: 0.5,
        }
    }
}
