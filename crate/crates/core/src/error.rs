use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}: requires {requirement}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("declared b(0) = {declared} but the drift evaluates to {evaluated} at zero")]
    DriftAtZeroMismatch { declared: f64, evaluated: f64 },
    #[error("insufficient metadata: missing {}", .missing.join(", "))]
    InsufficientMetadata { missing: Vec<&'static str> },
    #[error("unknown named drift `{0}`")]
    UnknownDrift(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("refinement level {0} is too fine")]
    LevelTooFine(u32),
    #[error("need at least {required} trajectories, got {got}")]
    TooFewTrajectories { required: usize, got: usize },
    #[error("all {0} trajectories diverged")]
    AllDiverged(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("endpoint exponent {exponent} at r = {endpoint} is not integrable (must exceed -1)")]
    NonIntegrable { endpoint: f64, exponent: f64 },
    #[error("quadrature not converged: estimate {estimate} with error bound {error_bound} > tolerance {tolerance}")]
    NotConverged {
        estimate: f64,
        error_bound: f64,
        tolerance: f64,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("divergent integral: exponent {exponent} of (1 - r) is <= -1")]
    DivergentIntegral { exponent: f64 },
    #[error("analytic moment requires {0}")]
    UnsupportedModel(&'static str),
    #[error("gamma function domain error: x = {0} must be positive")]
    GammaDomain(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("reference untrustworthy: {diverged} of {total} trajectories diverged")]
    TooManyDiverged { diverged: usize, total: usize },
    #[error("analytic value {analytic} disagrees with Monte Carlo {monte_carlo} beyond {allowed}")]
    CrossCheckFailed {
        analytic: f64,
        monte_carlo: f64,
        allowed: f64,
    },
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error("cache i/o: {0}")]
    Cache(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("insufficient data: {usable} usable rows in p = {p_min}..={p_max}, need 2")]
    InsufficientData {
        usable: usize,
        p_min: u32,
        p_max: u32,
    },
}
