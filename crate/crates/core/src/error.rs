use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Most variants flag a caller bug or a singular parameter point; none of
/// them are expected on validated inputs away from the documented edge cases.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max |M - M^dagger| = {max_dev:e})")]
    NonHermitianInput { max_dev: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid protocol spec: field `{field}`: {reason}")]
    InvalidSpec { field: &'static str, reason: String },

    #[error("degenerate branch frequency mu_{branch} = {value:e}")]
    DegenerateFrequency { branch: usize, value: f64 },

    #[error("size guard: {what} = {value} exceeds the dense limit {limit}")]
    SizeGuard {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("invalid Bloch vector (|v| = {norm})")]
    InvalidBloch { norm: f64 },

    #[error("singular family: near-pure state with r.dr = {r_dot_dr:e} (state would leave the Bloch ball)")]
    SingularFamily { r_dot_dr: f64 },

    #[error("zero sensitivity: |d_omega k| = {norm:e}, the state carries no information about omega")]
    ZeroSensitivity { norm: f64 },

    #[error("integrator failure: {0}")]
    IntegratorFailure(String),

    #[error("range guard: {0}")]
    RangeGuard(String),

    #[error("domain error: {0}")]
    DomainError(String),
}

pub type Result<T> = std::result::Result<T, Error>;
