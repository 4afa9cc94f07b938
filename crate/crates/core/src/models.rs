//! Model class `dX = b(X) dt + σ X^α dW` on the positive half-line.
//!
//! Two concrete models are provided: [`PrototypeModel`], the polynomial
//! family `b(x) = B₀ + B₁x − B₂x^{2α−1}` used by every built-in case, and
//! [`GeneralDriftModel`], which wraps an arbitrary drift together with the
//! growth metadata needed to run the hypothesis checker.

use std::fmt;
use std::sync::Arc;

use crate::error::ModelError;

/// How `x^β` is evaluated when the base is negative.
///
/// The positivity-preserving schemes never produce negative states. The
/// comparison schemes (TES, STES) can, and the convention decides whether a
/// negative excursion survives (`SignPreserving`) or poisons the trajectory
/// with a NaN (`RealDomain`, the behaviour of a real-valued `pow`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PowerConvention {
    #[default]
    RealDomain,
    SignPreserving,
}

impl PowerConvention {
    #[inline]
    pub fn pow(self, x: f64, exponent: f64) -> f64 {
        match self {
            PowerConvention::RealDomain => pos_pow(x, exponent),
            PowerConvention::SignPreserving => {
                if x < 0.0 {
                    -pos_pow(-x, exponent)
                } else {
                    pos_pow(x, exponent)
                }
            }
        }
    }
}

/// `x^exponent` with `0^β = 0` for `β > 0`. Negative bases follow `f64::powf`,
/// so they yield NaN unless the exponent is an integer.
#[inline]
pub fn pos_pow(x: f64, exponent: f64) -> f64 {
    if x == 0.0 && exponent > 0.0 {
        0.0
    } else {
        x.powf(exponent)
    }
}

/// Shared contract between models and the time-stepping code.
pub trait Sde: Send + Sync {
    /// Drift `b(x)`, with powers of negative states evaluated under `conv`.
    fn drift_with(&self, x: f64, conv: PowerConvention) -> f64;

    /// `b(0)`.
    fn drift_at_zero(&self) -> f64;

    fn sigma(&self) -> f64;
    fn alpha(&self) -> f64;
    fn x0(&self) -> f64;
    fn horizon(&self) -> f64;

    /// Declared `B₂` of the growth bound, when known.
    fn damping_constant(&self) -> Option<f64> {
        None
    }

    /// Stable textual identity, used to key cached reference values.
    fn model_key(&self) -> String;

    fn as_prototype(&self) -> Option<&PrototypeModel> {
        None
    }

    #[inline]
    fn drift(&self, x: f64) -> f64 {
        self.drift_with(x, PowerConvention::RealDomain)
    }

    /// `b(x)/x` for `x > 0`.
    #[inline]
    fn drift_ratio(&self, x: f64) -> f64 {
        self.drift(x) / x
    }

    /// `(b(x) − b(0))/x` for `x > 0`.
    #[inline]
    fn drift_excess_ratio(&self, x: f64) -> f64 {
        (self.drift(x) - self.drift_at_zero()) / x
    }
}

/// `dX = (B₀ + B₁X − B₂X^{2α−1}) dt + σX^α dW`, `X₀ = x0`, on `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrototypeModel {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl PrototypeModel {
    /// Validated constructor; rejects anything outside `α > 1, σ > 0, x0 > 0,
    /// horizon > 0, B₀, B₁, B₂ ≥ 0`.
    pub fn new(
        b0: f64,
        b1: f64,
        b2: f64,
        sigma: f64,
        alpha: f64,
        x0: f64,
        horizon: f64,
    ) -> Result<Self, ModelError> {
        let model = Self::unchecked(b0, b1, b2, sigma, alpha, x0, horizon);
        model.validate()?;
        Ok(model)
    }

    /// Builds the parameter tuple without validation. Useful for feeding
    /// degenerate parameters to the hypothesis checker.
    pub const fn unchecked(
        b0: f64,
        b1: f64,
        b2: f64,
        sigma: f64,
        alpha: f64,
        x0: f64,
        horizon: f64,
    ) -> Self {
        Self {
            b0,
            b1,
            b2,
            sigma,
            alpha,
            x0,
            horizon,
        }
    }

    /// Unit horizon and unit initial condition, the setting of every
    /// built-in case.
    pub fn unit(b0: f64, b1: f64, b2: f64, sigma: f64, alpha: f64) -> Result<Self, ModelError> {
        Self::new(b0, b1, b2, sigma, alpha, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let checks: [(&'static str, f64, bool); 7] = [
            ("alpha", self.alpha, self.alpha > 1.0),
            ("sigma", self.sigma, self.sigma > 0.0),
            ("x0", self.x0, self.x0 > 0.0),
            ("horizon", self.horizon, self.horizon > 0.0),
            ("b0", self.b0, self.b0 >= 0.0),
            ("b1", self.b1, self.b1 >= 0.0),
            ("b2", self.b2, self.b2 >= 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(ModelError::InvalidParameter {
                    name,
                    value,
                    requirement: requirement_for(name),
                });
            }
        }
        Ok(())
    }

    /// `b(x) = B₀ + B₁x − B₂x^{2α−1}`.
    #[inline]
    pub fn drift_eval(&self, x: f64) -> f64 {
        self.b0 + self.b1 * x - self.b2 * pos_pow(x, 2.0 * self.alpha - 1.0)
    }

    /// Stable textual identity of the parameter tuple (shortest round-trip
    /// float formatting), used to key cached reference values.
    pub fn canonical_key(&self) -> String {
        format!(
            "prototype(b0={:?},b1={:?},b2={:?},sigma={:?},alpha={:?},x0={:?},T={:?})",
            self.b0, self.b1, self.b2, self.sigma, self.alpha, self.x0, self.horizon
        )
    }
}

fn requirement_for(name: &str) -> &'static str {
    match name {
        "alpha" => "alpha > 1",
        "sigma" => "sigma > 0",
        "x0" => "x0 > 0",
        "horizon" => "horizon > 0",
        _ => "coefficient >= 0",
    }
}

impl Sde for PrototypeModel {
    fn model_key(&self) -> String {
        self.canonical_key()
    }

    fn as_prototype(&self) -> Option<&PrototypeModel> {
        Some(self)
    }

    #[inline]
    fn drift_with(&self, x: f64, conv: PowerConvention) -> f64 {
        self.b0 + self.b1 * x - self.b2 * conv.pow(x, 2.0 * self.alpha - 1.0)
    }

    fn drift_at_zero(&self) -> f64 {
        self.b0
    }

    fn damping_constant(&self) -> Option<f64> {
        Some(self.b2)
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn x0(&self) -> f64 {
        self.x0
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    // b0/x is added first so that, for b0 = 0, drift_ratio and
    // drift_excess_ratio are bit-identical.
    #[inline]
    fn drift_ratio(&self, x: f64) -> f64 {
        self.b0 / x + (self.b1 - self.b2 * pos_pow(x, 2.0 * self.alpha - 2.0))
    }

    #[inline]
    fn drift_excess_ratio(&self, x: f64) -> f64 {
        self.b1 - self.b2 * pos_pow(x, 2.0 * self.alpha - 2.0)
    }
}

/// Growth and local-Lipschitz constants declared for a general drift.
///
/// Every field is optional so that partially described drifts can still be
/// simulated; the hypothesis checker reports which fields it needed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GrowthMetadata {
    pub b1: Option<f64>,
    pub b2: Option<f64>,
    pub b1_prime: Option<f64>,
    pub b2_prime: Option<f64>,
    pub gamma_up: Option<[f64; 4]>,
    pub gamma_down: Option<[f64; 4]>,
}

impl GrowthMetadata {
    pub fn complete(
        b1: f64,
        b2: f64,
        b1_prime: f64,
        b2_prime: f64,
        gamma_up: [f64; 4],
        gamma_down: [f64; 4],
    ) -> Self {
        Self {
            b1: Some(b1),
            b2: Some(b2),
            b1_prime: Some(b1_prime),
            b2_prime: Some(b2_prime),
            gamma_up: Some(gamma_up),
            gamma_down: Some(gamma_down),
        }
    }

    pub fn missing_fields(&self) -> Vec<&'static str> {
        let mut missing = Vec::new();
        if self.b1.is_none() {
            missing.push("B1");
        }
        if self.b2.is_none() {
            missing.push("B2");
        }
        if self.b1_prime.is_none() {
            missing.push("B1'");
        }
        if self.b2_prime.is_none() {
            missing.push("B2'");
        }
        if self.gamma_up.is_none() {
            missing.push("gamma_up");
        }
        if self.gamma_down.is_none() {
            missing.push("gamma_down");
        }
        missing
    }

    fn validate(&self) -> Result<(), ModelError> {
        let scalars = [
            ("B1", self.b1),
            ("B2", self.b2),
            ("B1'", self.b1_prime),
            ("B2'", self.b2_prime),
        ];
        for (name, value) in scalars {
            if let Some(v) = value {
                if !(v >= 0.0) {
                    return Err(ModelError::InvalidParameter {
                        name,
                        value: v,
                        requirement: "growth constant >= 0",
                    });
                }
            }
        }
        for (name, list) in [("gamma_up", self.gamma_up), ("gamma_down", self.gamma_down)] {
            if let Some(list) = list {
                if let Some(&v) = list.iter().find(|v| !(**v >= 0.0)) {
                    return Err(ModelError::InvalidParameter {
                        name,
                        value: v,
                        requirement: "exponent >= 0",
                    });
                }
            }
        }
        Ok(())
    }
}

pub type DriftFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// SDE with a user-supplied drift.
#[derive(Clone)]
pub struct GeneralDriftModel {
    name: String,
    drift: DriftFn,
    drift_deriv: Option<DriftFn>,
    b_at_zero: f64,
    growth: GrowthMetadata,
    sigma: f64,
    alpha: f64,
    x0: f64,
    horizon: f64,
}

impl fmt::Debug for GeneralDriftModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralDriftModel")
            .field("name", &self.name)
            .field("b_at_zero", &self.b_at_zero)
            .field("growth", &self.growth)
            .field("sigma", &self.sigma)
            .field("alpha", &self.alpha)
            .field("x0", &self.x0)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl GeneralDriftModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        drift: DriftFn,
        drift_deriv: Option<DriftFn>,
        b_at_zero: f64,
        growth: GrowthMetadata,
        sigma: f64,
        alpha: f64,
        x0: f64,
        horizon: f64,
    ) -> Result<Self, ModelError> {
        PrototypeModel::unchecked(b_at_zero, 0.0, 0.0, sigma, alpha, x0, horizon).validate()?;
        growth.validate()?;
        let at_zero = drift(0.0);
        if at_zero.is_finite() && (at_zero - b_at_zero).abs() > 1e-12 {
            return Err(ModelError::DriftAtZeroMismatch {
                declared: b_at_zero,
                evaluated: at_zero,
            });
        }
        Ok(Self {
            name: name.into(),
            drift,
            drift_deriv,
            b_at_zero,
            growth,
            sigma,
            alpha,
            x0,
            horizon,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn growth(&self) -> &GrowthMetadata {
        &self.growth
    }

    pub fn drift_deriv(&self, x: f64) -> Option<f64> {
        self.drift_deriv.as_ref().map(|d| d(x))
    }

    /// Points of the log-spaced grid on `[1e-6, 1e6]` where the declared bound
    /// `b(x) ≤ B₁x − B₂x^{2α−1} + b(0)` fails. Returns `None` when `B₁` or
    /// `B₂` is not declared.
    pub fn growth_bound_violations(&self) -> Option<Vec<f64>> {
        let (b1, b2) = (self.growth.b1?, self.growth.b2?);
        let exponent = 2.0 * self.alpha - 1.0;
        let violations = log_grid(1e-6, 1e6, 1000)
            .filter(|&x| {
                let bound = b1 * x - b2 * pos_pow(x, exponent) + self.b_at_zero;
                let value = (self.drift)(x);
                value.is_finite() && value > bound + 1e-9 * bound.abs().max(1.0)
            })
            .collect();
        Some(violations)
    }
}

fn log_grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..points).map(move |i| (llo + (lhi - llo) * i as f64 / (points - 1) as f64).exp())
}

impl Sde for GeneralDriftModel {
    // The user drift decides its own extension to negative states.
    #[inline]
    fn drift_with(&self, x: f64, _conv: PowerConvention) -> f64 {
        (self.drift)(x)
    }

    fn drift_at_zero(&self) -> f64 {
        self.b_at_zero
    }

    fn damping_constant(&self) -> Option<f64> {
        self.growth.b2
    }

    fn model_key(&self) -> String {
        format!(
            "general(name={},b0={:?},sigma={:?},alpha={:?},x0={:?},T={:?},growth={:?})",
            self.name, self.b_at_zero, self.sigma, self.alpha, self.x0, self.horizon, self.growth
        )
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn x0(&self) -> f64 {
        self.x0
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Named drifts beyond the prototype family.
///
/// * `saturating`: `b(x) = B₀ + B₁·x/(1+x) − B₂x^{2α−1}`. Satisfies the
///   growth bound with the same `B₁, B₂`.
/// * `cubic-damped`: `b(x) = B₀ + B₁x − B₂x^{2α−1} − c·x³` with `c = B₂`,
///   extra damping that keeps the bound with unchanged constants.
pub fn named_drift(name: &str, base: &PrototypeModel) -> Result<GeneralDriftModel, ModelError> {
    base.validate()?;
    let PrototypeModel {
        b0,
        b1,
        b2,
        sigma,
        alpha,
        x0,
        horizon,
    } = *base;
    let e = 2.0 * alpha - 1.0;
    match name {
        "saturating" => {
            let drift: DriftFn = Arc::new(move |x| b0 + b1 * x / (1.0 + x) - b2 * pos_pow(x, e));
            let deriv: DriftFn =
                Arc::new(move |x| b1 / ((1.0 + x) * (1.0 + x)) - b2 * e * pos_pow(x, e - 1.0));
            let growth = GrowthMetadata {
                b1: Some(b1),
                b2: Some(b2),
                b1_prime: Some(b1),
                b2_prime: Some(e * b2),
                ..prototype_growth(base)
            };
            GeneralDriftModel::new(
                name,
                drift,
                Some(deriv),
                b0,
                growth,
                sigma,
                alpha,
                x0,
                horizon,
            )
        }
        "cubic-damped" => {
            let drift: DriftFn =
                Arc::new(move |x| b0 + b1 * x - b2 * pos_pow(x, e) - b2 * x * x * x);
            let deriv: DriftFn =
                Arc::new(move |x| b1 - b2 * e * pos_pow(x, e - 1.0) - 3.0 * b2 * x * x);
            let mut growth = prototype_growth(base);
            // x³ adds up to x-powers 2, 1, 0 in the first three derivatives.
            if let Some(up) = growth.gamma_up.as_mut() {
                up[0] = up[0].max(1.0);
                up[1] = up[1].max(0.0);
            }
            GeneralDriftModel::new(
                name,
                drift,
                Some(deriv),
                b0,
                growth,
                sigma,
                alpha,
                x0,
                horizon,
            )
        }
        other => Err(ModelError::UnknownDrift(other.to_string())),
    }
}

/// Growth metadata of the prototype drift.
///
/// `b^{(i)}` is proportional to `x^{2α−1−i}`. Its local-Lipschitz exponents
/// follow from the sign of `2α−2−i`; derivatives of an integer power beyond
/// its degree vanish and contribute nothing.
pub fn prototype_growth(model: &PrototypeModel) -> GrowthMetadata {
    let e = 2.0 * model.alpha - 1.0;
    let mut gamma_up = [0.0; 4];
    let mut gamma_down = [0.0; 4];
    if model.b2 > 0.0 {
        for i in 1..=4 {
            let vanishes = e.fract() == 0.0 && ((i + 1) as f64) > e;
            if vanishes {
                continue;
            }
            let slope_exp = e - 1.0 - i as f64;
            if slope_exp >= 0.0 {
                gamma_up[i - 1] = slope_exp;
            } else {
                gamma_down[i - 1] = -slope_exp;
            }
        }
    }
    GrowthMetadata {
        b1: Some(model.b1),
        b2: Some(model.b2),
        b1_prime: Some(model.b1),
        b2_prime: Some((2.0 * model.alpha - 1.0) * model.b2),
        gamma_up: Some(gamma_up),
        gamma_down: Some(gamma_down),
    }
}

/// Which form of the parameter constraint produced `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaConstraint {
    /// Prototype drift with `B₀ = 0`.
    PrototypeZeroConstant,
    /// Prototype drift with `B₀ > 0` (also requires `α > 3/2`).
    PrototypePositiveConstant,
    /// General drift: minimum of the `B₂` and `B₂′` slacks.
    GeneralDrift,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub h1_ok: bool,
    pub h4_ok: bool,
    pub h5_ok: bool,
    pub kappa: f64,
    pub kappa_constraint_used: KappaConstraint,
    /// Largest `2p` with `E[X_t^{2p}]` bounded: `1 + 2B₂/σ²`.
    pub max_moment_order: f64,
    pub notes: Vec<String>,
}

/// Bracket `(12α−19) ∨ (8α−10) ∨ 5α²/(2α−1)` shared by both prototype
/// constraints.
fn prototype_bracket(alpha: f64) -> f64 {
    (12.0 * alpha - 19.0)
        .max(8.0 * alpha - 10.0)
        .max(5.0 * alpha * alpha / (2.0 * alpha - 1.0))
}

/// Slack `κ` of the prototype's order-one parameter constraint. `κ ≥ 0` means
/// the constraint holds.
pub fn kappa(model: &PrototypeModel) -> f64 {
    let PrototypeModel {
        b0,
        b2,
        sigma,
        alpha,
        ..
    } = *model;
    let s2 = sigma * sigma;
    let spread = 0.5 * s2 * prototype_bracket(alpha);
    if b0 > 0.0 {
        b2 - 3.0 * s2 * alpha - (0.5 * alpha * alpha).max(spread)
    } else {
        b2 - 3.0 * s2 * alpha - spread
    }
}

/// Slack of the general `B₂` constraint built from the declared `γ̄₍ᵢ₎`.
fn general_b2_slack(b2: f64, sigma: f64, alpha: f64, b0: f64, gamma_up: &[f64; 4]) -> f64 {
    let s2 = sigma * sigma;
    let [_, g2, g3, g4] = *gamma_up;
    let beta = (3.0 * (g2 + 1.0)).max(g2 + g3 + 2.0).max(g4 + 1.0);
    let spread = 0.5 * s2 * ((2.0 * beta).max(beta + 2.0 * alpha) - 1.0);
    if b0 > 0.0 {
        b2 - 3.0 * s2 * alpha - (0.5 * alpha * alpha).max(spread)
    } else {
        b2 - 3.0 * s2 * alpha - spread
    }
}

fn b2_prime_slack(b2_prime: f64, sigma: f64, alpha: f64) -> f64 {
    b2_prime - sigma * sigma * alpha * (8.5 * alpha - 3.0)
}

fn h4_holds(gamma_down: &[f64; 4]) -> bool {
    gamma_down[0] <= 0.0 && gamma_down[1] <= 1.0 && gamma_down[2] <= 2.0 && gamma_down[3] <= 4.0
}

/// Anything the checker accepts.
pub enum ModelRef<'a> {
    Prototype(&'a PrototypeModel),
    General(&'a GeneralDriftModel),
}

impl<'a> From<&'a PrototypeModel> for ModelRef<'a> {
    fn from(m: &'a PrototypeModel) -> Self {
        ModelRef::Prototype(m)
    }
}

impl<'a> From<&'a GeneralDriftModel> for ModelRef<'a> {
    fn from(m: &'a GeneralDriftModel) -> Self {
        ModelRef::General(m)
    }
}

/// Evaluates the well-posedness and order-one hypotheses from the model's
/// parameters and declared metadata.
pub fn check_hypotheses<'a>(
    model: impl Into<ModelRef<'a>>,
) -> Result<HypothesisReport, ModelError> {
    match model.into() {
        ModelRef::Prototype(m) => Ok(check_prototype(m)),
        ModelRef::General(m) => check_general(m),
    }
}

fn h1_notes(sigma: f64, alpha: f64, x0: f64, notes: &mut Vec<String>) -> bool {
    let mut ok = true;
    if !(alpha > 1.0) {
        notes.push(format!("H1 violated: alpha = {alpha} must exceed 1"));
        ok = false;
    }
    if !(sigma > 0.0) {
        notes.push(format!("H1 violated: sigma = {sigma} must be positive"));
        ok = false;
    }
    if !(x0 > 0.0) {
        notes.push(format!("H1 violated: x0 = {x0} must be positive"));
        ok = false;
    }
    ok
}

fn check_prototype(m: &PrototypeModel) -> HypothesisReport {
    let mut notes = Vec::new();
    let h1_ok = h1_notes(m.sigma, m.alpha, m.x0, &mut notes);
    let growth = prototype_growth(m);
    let gamma_down = growth.gamma_down.unwrap_or_default();
    let h4_ok = h4_holds(&gamma_down);
    if !h4_ok {
        notes.push(format!(
            "H4 not met by the derivative exponents {gamma_down:?}; the prototype constraint on kappa governs the order-one guarantee"
        ));
    }
    let k = kappa(m);
    let (constraint, mut h5_ok) = if m.b0 > 0.0 {
        (KappaConstraint::PrototypePositiveConstant, k >= 0.0)
    } else {
        (KappaConstraint::PrototypeZeroConstant, k >= 0.0)
    };
    if m.b0 > 0.0 && !(m.alpha > 1.5) {
        h5_ok = false;
        notes.push(format!(
            "H5 violated: a positive constant drift b(0) = {} requires alpha > 3/2 (alpha = {})",
            m.b0, m.alpha
        ));
    }
    let b2p = growth.b2_prime.unwrap_or(0.0);
    let b2p_slack = b2_prime_slack(b2p, m.sigma, m.alpha);
    if b2p_slack < 0.0 {
        notes.push(format!(
            "B2' = {b2p} is below sigma^2 alpha (17 alpha/2 - 3); slack {b2p_slack:.6}"
        ));
    }
    notes.push(format!(
        "kappa = {k:.6} ({})",
        if k >= 0.0 {
            "constraint holds"
        } else {
            "constraint fails"
        }
    ));
    let max_moment_order = 1.0 + 2.0 * m.b2 / (m.sigma * m.sigma);
    HypothesisReport {
        h1_ok,
        h4_ok,
        h5_ok,
        kappa: k,
        kappa_constraint_used: constraint,
        max_moment_order,
        notes,
    }
}

fn check_general(m: &GeneralDriftModel) -> Result<HypothesisReport, ModelError> {
    let missing = m.growth.missing_fields();
    if !missing.is_empty() {
        return Err(ModelError::InsufficientMetadata { missing });
    }
    let g = &m.growth;
    let (b2, b2p) = (g.b2.unwrap_or_default(), g.b2_prime.unwrap_or_default());
    let (gamma_up, gamma_down) = (
        g.gamma_up.unwrap_or_default(),
        g.gamma_down.unwrap_or_default(),
    );
    let mut notes = Vec::new();
    let h1_ok = h1_notes(m.sigma, m.alpha, m.x0, &mut notes);
    let h4_ok = h4_holds(&gamma_down);
    if !h4_ok {
        notes.push(format!("H4 violated: gamma_down = {gamma_down:?}"));
    }
    let slack_b2 = general_b2_slack(b2, m.sigma, m.alpha, m.b_at_zero, &gamma_up);
    let slack_b2p = b2_prime_slack(b2p, m.sigma, m.alpha);
    let k = slack_b2.min(slack_b2p);
    let mut h5_ok = k >= 0.0;
    notes.push(format!(
        "B2 slack = {slack_b2:.6}, B2' slack = {slack_b2p:.6}"
    ));
    if m.b_at_zero > 0.0 && !(m.alpha > 1.5) {
        h5_ok = false;
        notes.push(format!(
            "H5 violated: b(0) = {} > 0 requires alpha > 3/2 (alpha = {})",
            m.b_at_zero, m.alpha
        ));
    }
    if let Some(violations) = m.growth_bound_violations() {
        if !violations.is_empty() {
            notes.push(format!(
                "warning: declared growth bound fails at {} of 1000 sampled points (first at x = {:e})",
                violations.len(),
                violations[0]
            ));
        }
    }
    Ok(HypothesisReport {
        h1_ok,
        h4_ok,
        h5_ok,
        kappa: k,
        kappa_constraint_used: KappaConstraint::GeneralDrift,
        max_moment_order: 1.0 + 2.0 * b2 / (m.sigma * m.sigma),
        notes,
    })
}

/// Largest `2p` for which `sup_t E[X_t^{2p}]` is bounded: `1 + 2B₂/σ²`.
pub fn max_moment_order<M: Sde + ?Sized>(model: &M) -> Option<f64> {
    let s = model.sigma();
    model.damping_constant().map(|b2| 1.0 + 2.0 * b2 / (s * s))
}

/// Bound on `μ` for which `E exp{μ∫₀ᵗ X^{2α−2} ds}` is finite:
/// `(σ²+2B₂)²/(8σ²)` when `b(0) = 0` (inclusive), `B₂σ²` otherwise (strict).
/// Returns `(bound, inclusive)`.
pub fn exp_moment_mu_bound<M: Sde + ?Sized>(model: &M) -> Option<(f64, bool)> {
    let b2 = model.damping_constant()?;
    let s2 = model.sigma() * model.sigma();
    if model.drift_at_zero() > 0.0 {
        Some((b2 * s2, false))
    } else {
        let t = s2 + 2.0 * b2;
        Some((t * t / (8.0 * s2), true))
    }
}
