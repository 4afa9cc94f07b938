//! One-step update rules and path simulation.
//!
//! Every rule maps `(state, Δt, ΔW)` to the next state. The exponential
//! rules keep the state strictly positive; the symmetrized rules keep it
//! non-negative; the tamed rules may go negative. A state is flagged as
//! diverged once its value is non-finite or exceeds the divergence cap in
//! absolute value, and stepping a diverged state is a no-op.

use std::fmt;
use std::str::FromStr;

use crate::error::SimulationError;
use crate::models::{pos_pow, PowerConvention, Sde};
use crate::paths::IncrementSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    /// Exponential-Euler scheme with the additive `b(0)Δt` correction.
    ExpEs,
    /// Plain exponential Euler: `X exp{(b(X)/X − σ²X^{2(α−1)}/2)Δt + σX^{α−1}ΔW}`.
    ExplicitExpEuler,
    /// Symmetrized Euler.
    Ses,
    /// Symmetrized Milstein.
    Sms,
    /// Tamed Euler.
    Tes,
    /// Stopped tamed Euler.
    Stes,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::ExpEs,
        SchemeKind::ExplicitExpEuler,
        SchemeKind::Ses,
        SchemeKind::Sms,
        SchemeKind::Tes,
        SchemeKind::Stes,
    ];

    /// The five schemes of the comparison table, in its row order.
    pub const COMPARISON: [SchemeKind; 5] = [
        SchemeKind::ExpEs,
        SchemeKind::Ses,
        SchemeKind::Sms,
        SchemeKind::Stes,
        SchemeKind::Tes,
    ];

    pub fn id(self) -> &'static str {
        match self {
            SchemeKind::ExpEs => "exp-es",
            SchemeKind::ExplicitExpEuler => "exp-euler",
            SchemeKind::Ses => "ses",
            SchemeKind::Sms => "sms",
            SchemeKind::Tes => "tes",
            SchemeKind::Stes => "stes",
        }
    }

    /// Whether the rule keeps states strictly positive from a positive start.
    pub fn preserves_positivity(self) -> bool {
        matches!(self, SchemeKind::ExpEs | SchemeKind::ExplicitExpEuler)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match norm.as_str() {
            "exp-es" | "expes" => SchemeKind::ExpEs,
            "exp-euler" | "explicit-exp-euler" => SchemeKind::ExplicitExpEuler,
            "ses" => SchemeKind::Ses,
            "sms" => SchemeKind::Sms,
            "tes" => SchemeKind::Tes,
            "stes" => SchemeKind::Stes,
            _ => return Err(format!("unknown scheme `{s}`")),
        })
    }
}

/// Coefficient of the Milstein correction `(ΔW² − Δt)` in SMS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MilsteinFactor {
    /// `ασ² X^{2α−1}`, as printed for the benchmarked scheme.
    #[default]
    Printed,
    /// `(ασ²/2) X^{2α−1}`, the textbook Milstein term.
    Standard,
}

impl MilsteinFactor {
    fn multiplier(self) -> f64 {
        match self {
            MilsteinFactor::Printed => 1.0,
            MilsteinFactor::Standard => 0.5,
        }
    }
}

pub const DEFAULT_DIVERGENCE_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOptions {
    pub milstein: MilsteinFactor,
    pub power: PowerConvention,
    pub divergence_cap: f64,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            milstein: MilsteinFactor::Printed,
            power: PowerConvention::RealDomain,
            divergence_cap: DEFAULT_DIVERGENCE_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeState {
    pub time: f64,
    pub value: f64,
    pub diverged: bool,
}

impl SchemeState {
    pub fn initial(x0: f64) -> Self {
        Self {
            time: 0.0,
            value: x0,
            diverged: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInput {
    pub dt: f64,
    pub dw: f64,
}

#[inline]
fn advance(state: SchemeState, value: f64, dt: f64, cap: f64) -> SchemeState {
    SchemeState {
        time: state.time + dt,
        value,
        diverged: !value.is_finite() || value.abs() > cap,
    }
}

/// The exponential steps are strictly above `floor` in exact arithmetic;
/// when underflow or rounding lands the result on or below it, the next
/// representable value is returned instead.
#[inline]
fn positive_above(floor: f64, value: f64) -> f64 {
    if value > floor || value.is_nan() {
        value
    } else {
        floor.next_up()
    }
}

/// `b(0)Δt + X exp{σX^{α−1}ΔW + ((b(X)−b(0))/X − σ²X^{2(α−1)}/2)Δt}`.
#[inline]
pub fn step_exp_es<M: Sde + ?Sized>(
    model: &M,
    state: SchemeState,
    input: StepInput,
) -> SchemeState {
    step_exp_es_capped(model, state, input, DEFAULT_DIVERGENCE_CAP)
}

#[inline]
fn step_exp_es_capped<M: Sde + ?Sized>(
    model: &M,
    state: SchemeState,
    input: StepInput,
    cap: f64,
) -> SchemeState {
    if state.diverged {
        return state;
    }
    let x = state.value;
    let sigma = model.sigma();
    let xa1 = pos_pow(x, model.alpha() - 1.0);
    let arg = sigma * xa1 * input.dw
        + (model.drift_excess_ratio(x) - 0.5 * sigma * sigma * xa1 * xa1) * input.dt;
    let floor = model.drift_at_zero() * input.dt;
    let value = positive_above(floor, floor + x * arg.exp());
    advance(state, value, input.dt, cap)
}

/// `X exp{(b(X)/X − σ²X^{2(α−1)}/2)Δt + σX^{α−1}ΔW}`.
#[inline]
pub fn step_explicit_exp_euler<M: Sde + ?Sized>(
    model: &M,
    state: SchemeState,
    input: StepInput,
) -> SchemeState {
    step_explicit_capped(model, state, input, DEFAULT_DIVERGENCE_CAP)
}

#[inline]
fn step_explicit_capped<M: Sde + ?Sized>(
    model: &M,
    state: SchemeState,
    input: StepInput,
    cap: f64,
) -> SchemeState {
    if state.diverged {
        return state;
    }
    let x = state.value;
    let sigma = model.sigma();
    let xa1 = pos_pow(x, model.alpha() - 1.0);
    let arg = sigma * xa1 * input.dw
        + (model.drift_ratio(x) - 0.5 * sigma * sigma * xa1 * xa1) * input.dt;
    let value = positive_above(0.0, x * arg.exp());
    advance(state, value, input.dt, cap)
}

#[inline]
fn euler_inner<M: Sde + ?Sized>(model: &M, x: f64, input: StepInput, conv: PowerConvention) -> f64 {
    x + model.drift_with(x, conv) * input.dt + model.sigma() * conv.pow(x, model.alpha()) * input.dw
}

/// `|X + b(X)Δt + σX^αΔW|`.
#[inline]
pub fn step_ses<M: Sde + ?Sized>(
    model: &M,
    state: SchemeState,
    input: StepInput,
    opts: &SchemeOptions,
) -> SchemeState {
    if state.diverged {
        return state;
    }
    let value = euler_inner(model, state.value, input, opts.power).abs();
    advance(state, value, input.dt, opts.divergence_cap)
}

/// `|X + b(X)Δt + σX^αΔW + c·ασ²X^{2α−1}(ΔW² − Δt)|` with `c` from
/// [`MilsteinFactor`].
#[inline]
pub fn step_sms<M: Sde + ?Sized>(
    model: &M,
    state: SchemeState,
    input: StepInput,
    opts: &SchemeOptions,
) -> SchemeState {
    if state.diverged {
        return state;
    }
    let x = state.value;
    let alpha = model.alpha();
    let sigma = model.sigma();
    let correction = opts.milstein.multiplier()
        * alpha
        * sigma
        * sigma
        * opts.power.pow(x, 2.0 * alpha - 1.0)
        * (input.dw * input.dw - input.dt);
    let value = (euler_inner(model, x, input, opts.power) + correction).abs();
    advance(state, value, input.dt, opts.divergence_cap)
}

/// `X + b(X)Δt/(1 + |b(X)|Δt) + σX^αΔW`.
#[inline]
pub fn step_tes<M: Sde + ?Sized>(
    model: &M,
    state: SchemeState,
    input: StepInput,
    opts: &SchemeOptions,
) -> SchemeState {
    if state.diverged {
        return state;
    }
    let x = state.value;
    let drift = model.drift_with(x, opts.power) * input.dt;
    let value = x
        + drift / (1.0 + drift.abs())
        + model.sigma() * opts.power.pow(x, model.alpha()) * input.dw;
    advance(state, value, input.dt, opts.divergence_cap)
}

/// `X + y/(1 + y²)·1{|X| < exp(√|ln Δt|)}` with `y = b(X)Δt + σX^αΔW`.
#[inline]
pub fn step_stes<M: Sde + ?Sized>(
    model: &M,
    state: SchemeState,
    input: StepInput,
    opts: &SchemeOptions,
) -> SchemeState {
    if state.diverged {
        return state;
    }
    let x = state.value;
    let threshold = input.dt.ln().abs().sqrt().exp();
    let value = if x.abs() < threshold {
        let y = model.drift_with(x, opts.power) * input.dt
            + model.sigma() * opts.power.pow(x, model.alpha()) * input.dw;
        x + y / (1.0 + y * y)
    } else {
        x
    };
    advance(state, value, input.dt, opts.divergence_cap)
}

/// A scheme kind bundled with its options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scheme {
    pub kind: SchemeKind,
    pub opts: SchemeOptions,
}

impl Scheme {
    pub fn new(kind: SchemeKind) -> Self {
        Self {
            kind,
            opts: SchemeOptions::default(),
        }
    }

    pub fn with_options(kind: SchemeKind, opts: SchemeOptions) -> Self {
        Self { kind, opts }
    }

    #[inline]
    pub fn step<M: Sde + ?Sized>(
        &self,
        model: &M,
        state: SchemeState,
        input: StepInput,
    ) -> SchemeState {
        let cap = self.opts.divergence_cap;
        match self.kind {
            SchemeKind::ExpEs => step_exp_es_capped(model, state, input, cap),
            SchemeKind::ExplicitExpEuler => step_explicit_capped(model, state, input, cap),
            SchemeKind::Ses => step_ses(model, state, input, &self.opts),
            SchemeKind::Sms => step_sms(model, state, input, &self.opts),
            SchemeKind::Tes => step_tes(model, state, input, &self.opts),
            SchemeKind::Stes => step_stes(model, state, input, &self.opts),
        }
    }
}

impl From<SchemeKind> for Scheme {
    fn from(kind: SchemeKind) -> Self {
        Scheme::new(kind)
    }
}

/// Finest supported refinement level.
pub const MAX_LEVEL: u32 = 40;

/// Uniform grid with `2^level` steps over `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub level: u32,
    pub steps: u64,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, level: u32) -> Result<Self, SimulationError> {
        if level > MAX_LEVEL {
            return Err(SimulationError::LevelTooFine(level));
        }
        let steps = 1u64 << level;
        Ok(Self {
            level,
            steps,
            dt: horizon / steps as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terminal {
    pub terminal: f64,
    pub diverged: bool,
}

/// Runs the scheme over the grid, calling `observer` with the state before
/// each step. Stops at the first diverged state.
#[inline]
pub fn simulate_observed<M, S, F>(
    model: &M,
    scheme: &Scheme,
    grid: TimeGrid,
    source: &mut S,
    mut observer: F,
) -> SchemeState
where
    M: Sde + ?Sized,
    S: IncrementSource + ?Sized,
    F: FnMut(&SchemeState),
{
    let mut state = SchemeState::initial(model.x0());
    let dt = grid.dt;
    for _ in 0..grid.steps {
        observer(&state);
        let dw = source.next_increment(dt);
        state = scheme.step(model, state, StepInput { dt, dw });
        if state.diverged {
            break;
        }
    }
    state
}

/// Terminal value after `2^p` steps of size `horizon/2^p` from `x0`.
pub fn simulate_terminal<M, S>(
    model: &M,
    scheme: impl Into<Scheme>,
    p: u32,
    source: &mut S,
) -> Result<Terminal, SimulationError>
where
    M: Sde + ?Sized,
    S: IncrementSource + ?Sized,
{
    let grid = TimeGrid::new(model.horizon(), p)?;
    let state = simulate_observed(model, &scheme.into(), grid, source, |_| {});
    Ok(Terminal {
        terminal: state.value,
        diverged: state.diverged,
    })
}

/// Full path as `(t, value)` pairs, including the initial point.
pub fn simulate_path<M, S>(
    model: &M,
    scheme: impl Into<Scheme>,
    p: u32,
    source: &mut S,
) -> Result<Vec<(f64, f64)>, SimulationError>
where
    M: Sde + ?Sized,
    S: IncrementSource + ?Sized,
{
    let grid = TimeGrid::new(model.horizon(), p)?;
    let mut path = Vec::with_capacity(grid.steps as usize + 1);
    let last = simulate_observed(model, &scheme.into(), grid, source, |s| {
        path.push((s.time, s.value))
    });
    path.push((last.time, last.value));
    Ok(path)
}
