//! Numerical tolerances shared by every module.

use serde::Serialize;

/// Read-only tolerance record. All checks in the crate read from [`TOLERANCES`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Hermiticity check, entrywise.
    pub hermitian: f64,
    /// Idempotence check for projectors, entrywise.
    pub projector: f64,
    /// Unit norm of pure states and unit trace of density matrices.
    pub normalization: f64,
    /// Smallest admissible eigenvalue of a density matrix.
    pub eigenvalue_floor: f64,
    /// Allowed deviation of a branch table's total probability from one.
    pub branch_sum: f64,
    /// Branches below this probability are pruned.
    pub zero_probability: f64,
    /// Max-norm of a commutator below which two observables count as commuting.
    pub commutation: f64,
    /// Probabilities below this are not reported as condition-(i) violations.
    pub audit_floor: f64,
    /// Margin required for an exact inequality verdict of "violates".
    pub exact_verdict: f64,
    /// Number of standard errors required for a Monte Carlo verdict of "violates".
    pub monte_carlo_sigmas: f64,
    /// Maximum number of steps in a measurement sequence.
    pub max_sequence_len: usize,
    /// Maximum Hilbert-space dimension.
    pub max_dim: usize,
}

pub const TOLERANCES: Tolerances = Tolerances {
    hermitian: 1e-12,
    projector: 1e-10,
    normalization: 1e-12,
    eigenvalue_floor: -1e-10,
    branch_sum: 1e-9,
    zero_probability: 1e-14,
    commutation: 1e-12,
    audit_floor: 1e-12,
    exact_verdict: 1e-9,
    monte_carlo_sigmas: 3.0,
    max_sequence_len: 12,
    max_dim: 16,
};
