//! Weak approximation of one-dimensional SDEs
//! `dX = b(X)dt + σX^α dW` with superlinear coefficients.
//!
//! The main scheme is the exponential-Euler step ([`SchemeKind::ExpEs`]),
//! which keeps every iterate above `b(0)·Δt`. Comparison schemes, Monte
//! Carlo weak-error estimation, reference values and rate fits are built
//! around it.

// `!(x > y)` is used deliberately so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod analysis;
pub mod error;
pub mod models;
pub mod montecarlo;
pub mod paths;
pub mod reference;
pub mod schemes;
pub mod summation;

pub use analysis::{
    build_case_table, fit_points, fit_rate, CaseInput, RateFit, TableReport, TableSettings,
};
pub use error::{AnalysisError, ModelError, QuadratureError, ReferenceError, SimulationError};
pub use models::{
    check_hypotheses, kappa, GeneralDriftModel, GrowthMetadata, HypothesisReport, PowerConvention,
    PrototypeModel, Sde,
};
pub use montecarlo::{
    estimate_expectation, estimate_many, weak_error_sweep, DivergencePolicy, Ensemble, Estimate,
    TestFunction, WeakErrorRow, WeakErrorTable, Workers,
};
pub use paths::{make_stream, GaussianStream, IncrementSource, StreamPurpose};
pub use reference::{
    fine_grid_reference, resolve_reference, FineGridSpec, ReferenceCache, ReferenceMethod,
    ReferencePreference, ReferenceValue,
};
pub use schemes::{
    simulate_path, simulate_terminal, Scheme, SchemeKind, SchemeOptions, SchemeState, StepInput,
    TimeGrid,
};
