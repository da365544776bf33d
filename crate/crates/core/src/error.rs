use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quadrature for {what} did not converge: estimated error {achieved:.3e} > tolerance {tol:.3e}")]
    Quadrature { what: &'static str, achieved: f64, tol: f64 },

    #[error("spectral gap {gap:.3e} below minimum {min:.3e} at t = {time}")]
    GapViolation { time: f64, gap: f64, min: f64 },

    #[error("atomic level {level} has non-positive energy {value} at t = {time}")]
    NonPositiveLevel { time: f64, level: usize, value: f64 },

    #[error("matrix is not Hermitian at t = {time} (defect {defect:.3e})")]
    NotHermitian { time: f64, defect: f64 },

    #[error("frame smoothness check failed: {0}")]
    FrameSmoothness(String),

    #[error("propagator lost unitarity: defect {defect:.3e} at t = {time}; reduce the step size")]
    StepSize { time: f64, defect: f64 },

    #[error("norm defect {defect:.3e} exceeds {limit:.1e} at t = {time}")]
    Integrator { time: f64, defect: f64, limit: f64 },

    #[error("step size underflow ({step:.3e}) at t = {time}; use a larger epsilon or a coarser output resolution")]
    Stiffness { time: f64, step: f64 },

    #[error("mode discretization reached error {achieved:.3e} > {tol:.3e} after {modes} modes")]
    Discretization { achieved: f64, tol: f64, modes: usize },

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("cannot match perturbed eigenvalue to unperturbed level {level}")]
    Matching { level: usize },

    #[error("contour integration failed: {0}")]
    Contour(String),

    #[error("level {level} is not well coupled: γ̂(α) vanishes")]
    WellCoupledness { level: usize },

    #[error("coupling smallness violated: 4λ²‖v‖²‖γ‖₁/Δ₀ = {value:.4} ≥ 1")]
    Smallness { value: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
