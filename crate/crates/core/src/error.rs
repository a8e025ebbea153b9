use thiserror::Error;

/// Errors surfaced by the numerical engines.
#[derive(Debug, Error)]
pub enum CoreError {
    /// An argument sits outside the operation's domain (negative rate, point
    /// off the grid, window outside the grid, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The computed principal eigenvalue is not strictly positive, so the
    /// standing spectral assumption fails for this potential.
    #[error("assumption (A1) violated: principal eigenvalue {lambda1} <= 0")]
    AssumptionA1Violated { lambda1: f64 },

    /// An iterative solver failed to converge within its iteration budget.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// Two independent computation routes disagree beyond tolerance.
    #[error("consistency failure: {0}")]
    Consistency(String),

    /// A nonlinear solve collapsed onto the trivial zero solution.
    #[error("degenerate solution: {0}")]
    Degenerate(String),

    /// The horizon-doubling certificate failed to stabilize.
    #[error("horizon error: {0}")]
    Horizon(String),

    /// A derived offspring law failed its structural checks.
    #[error("mechanism inconsistency: {0}")]
    MechanismInconsistency(String),

    /// Monte Carlo population exceeded the configured cap.
    #[error("population explosion at t = {t_reached}: {population} particles exceed cap {cap}")]
    Explosion { t_reached: f64, population: usize, cap: usize },

    /// The Monte Carlo path only supports quadratic mechanisms.
    #[error("unsupported mechanism: {0}")]
    UnsupportedMechanism(String),

    /// Too few surviving trials to run a statistical gate.
    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    /// A saturation or reflection guard tripped.
    #[error("precision error: {0}")]
    Precision(String),
}
