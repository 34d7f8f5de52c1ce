//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-side precondition or invariant was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Point evaluation requested on a grid too small to resolve the
    /// truncated series without aliasing.
    #[error("grid size {grid} is below the alias-free minimum {min} for cutoff {cutoff}")]
    GridTooSmall {
        grid: usize,
        min: usize,
        cutoff: usize,
    },

    /// A flow state stopped being finite during integration.
    #[error("non-finite state encountered at integration step {step}")]
    NonFiniteState { step: usize },

    /// The exact gauge map could not meet its spectral tail target at the
    /// configured maximum output cutoff.
    #[error(
        "spectral tail target unreachable: achieved tail mass {achieved:e} \
         (target {target:e}) at maximum cutoff {max_cutoff}"
    )]
    TailMassUnreachable {
        achieved: f64,
        target: f64,
        max_cutoff: usize,
    },

    /// Rejection sampling against the mass ball is starving.
    #[error(
        "ball-restriction acceptance rate is below ~1e-6 ({attempts} consecutive \
         rejections); increase the radius R"
    )]
    AcceptanceTooLow { attempts: u64 },

    /// The double-sum and closed-form divergence disagree: a logic fault,
    /// not a numerical tolerance issue.
    #[error("divergence dual-form mismatch: double sum {double_sum:e} vs closed form {closed_form:e}")]
    DivergenceMismatch { double_sum: f64, closed_form: f64 },

    /// The truncated series of the low-frequency split cannot certify the
    /// requested tolerance within the configured maximum order.
    #[error(
        "series tolerance {tol:e} unreachable within k <= {max_k} \
         (certified bound {achieved:e})"
    )]
    SeriesTruncationUnreachable {
        tol: f64,
        max_k: usize,
        achieved: f64,
    },

    /// Guard against runaway enumeration in the exact moment engine.
    #[error("cutoff {given} exceeds the Wick engine complexity guard {guard}")]
    ComplexityGuard { given: usize, guard: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
