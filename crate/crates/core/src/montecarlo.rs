//! Monte Carlo estimation of `E f(X̄_T)` and weak-error sweeps.
//!
//! Trajectories are grouped into fixed-size chunks. Each chunk accumulates
//! compensated sums, and chunk results are merged pairwise in index order,
//! so estimates are bit-identical whatever the worker count.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::SimulationError;
use crate::models::{exp_moment_mu_bound, max_moment_order, pos_pow, Sde};
use crate::paths::{make_stream, GaussianStream, StreamPurpose};
use crate::reference::ReferenceValue;
use crate::schemes::{simulate_observed, Scheme, TimeGrid};
use crate::summation::{pairwise_reduce, CompensatedSum};

/// Trajectories per accumulation chunk.
pub const CHUNK_SIZE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// `f(x) = x`
    Identity,
    /// `f(x) = x²`
    Square,
    /// `f(x) = 1/x`
    Reciprocal,
    /// `f(x) = exp(−x²)`
    GaussianBump,
    /// `f(x) = 1`
    Constant,
    /// `f(x) = x^q`
    Power(f64),
}

impl TestFunction {
    pub const STANDARD_SET: [TestFunction; 4] = [
        TestFunction::Identity,
        TestFunction::Square,
        TestFunction::Reciprocal,
        TestFunction::GaussianBump,
    ];

    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            TestFunction::Identity => x,
            TestFunction::Square => x * x,
            TestFunction::Reciprocal => 1.0 / x,
            TestFunction::GaussianBump => (-x * x).exp(),
            TestFunction::Constant => 1.0,
            TestFunction::Power(q) => {
                if q == 0.0 {
                    1.0
                } else {
                    pos_pow(x, q)
                }
            }
        }
    }

    pub fn id(self) -> String {
        match self {
            TestFunction::Identity => "x".into(),
            TestFunction::Square => "x2".into(),
            TestFunction::Reciprocal => "inv_x".into(),
            TestFunction::GaussianBump => "exp_neg_x2".into(),
            TestFunction::Constant => "one".into(),
            TestFunction::Power(q) => format!("pow{q:?}"),
        }
    }

    /// `sup |f|` when finite.
    pub fn sup_abs(self) -> Option<f64> {
        match self {
            TestFunction::GaussianBump | TestFunction::Constant => Some(1.0),
            _ => None,
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for TestFunction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Ok(match s {
            "x" => TestFunction::Identity,
            "x2" | "x^2" => TestFunction::Square,
            "inv_x" | "1/x" => TestFunction::Reciprocal,
            "exp_neg_x2" | "exp(-x^2)" => TestFunction::GaussianBump,
            "one" | "1" => TestFunction::Constant,
            _ => match s.strip_prefix("pow").map(str::parse::<f64>) {
                Some(Ok(q)) => TestFunction::Power(q),
                _ => return Err(format!("unknown test function `{s}`")),
            },
        })
    }
}

/// Worker pool used for trajectory-parallel loops. Results never depend on
/// the worker count.
#[derive(Clone)]
pub struct Workers {
    pool: Arc<ThreadPool>,
}

impl fmt::Debug for Workers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Workers({})", self.pool.current_num_threads())
    }
}

impl Workers {
    /// `count = 0` selects the number of available cores.
    pub fn new(count: usize) -> Self {
        let pool = ThreadPoolBuilder::new()
            .num_threads(count)
            .build()
            .expect("failed to build worker pool");
        Self {
            pool: Arc::new(pool),
        }
    }

    pub fn count(&self) -> usize {
        self.pool.current_num_threads()
    }

    fn install<R: Send>(&self, op: impl FnOnce() -> R + Send) -> R {
        self.pool.install(op)
    }
}

impl Default for Workers {
    fn default() -> Self {
        Workers::new(0)
    }
}

/// Ensemble size, seed and worker pool of a Monte Carlo run.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub n: usize,
    pub seed: u64,
    pub workers: Workers,
}

impl Ensemble {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            workers: Workers::default(),
        }
    }

    pub fn with_workers(n: usize, seed: u64, workers: Workers) -> Self {
        Self { n, seed, workers }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over `√n_effective`.
    pub stderr: f64,
    pub n_effective: usize,
    pub n_diverged: usize,
}

impl Estimate {
    pub fn n_requested(&self) -> usize {
        self.n_effective + self.n_diverged
    }

    pub fn diverged_fraction(&self) -> f64 {
        self.n_diverged as f64 / self.n_requested().max(1) as f64
    }
}

/// Shifted compensated sums for one test function.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct MomentSums {
    pub count: usize,
    pub diverged: usize,
    pub shift: f64,
    pub sum: CompensatedSum,
    pub sum_sq: CompensatedSum,
}

impl MomentSums {
    fn with_shift(shift: f64) -> Self {
        Self {
            shift,
            ..Default::default()
        }
    }

    #[inline]
    fn push(&mut self, value: f64) {
        if value.is_finite() {
            let d = value - self.shift;
            self.count += 1;
            self.sum.add(d);
            self.sum_sq.add(d * d);
        } else {
            self.diverged += 1;
        }
    }

    fn merge(mut self, other: MomentSums) -> MomentSums {
        self.count += other.count;
        self.diverged += other.diverged;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
        self
    }

    pub fn mean(&self) -> f64 {
        self.shift + self.sum.value() / self.count as f64
    }

    /// Unbiased sample variance; `+∞` with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        let n = self.count as f64;
        let s = self.sum.value();
        ((self.sum_sq.value() - s * s / n) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Runs `n` trajectories and accumulates each test function over the
/// non-diverged samples. `sample(i)` returns `None` for a diverged
/// trajectory. The shift for each function is taken from trajectory 0.
pub(crate) fn ensemble_sums<S>(
    n: usize,
    workers: &Workers,
    fs: &[TestFunction],
    sample: S,
) -> Vec<MomentSums>
where
    S: Fn(u64) -> Option<f64> + Sync,
{
    let shifts: Vec<f64> = match sample(0) {
        Some(x) => fs
            .iter()
            .map(|f| f.eval(x))
            .map(|v| if v.is_finite() { v } else { 0.0 })
            .collect(),
        None => vec![0.0; fs.len()],
    };
    let chunks = n.div_ceil(CHUNK_SIZE);
    let run_chunk = |c: usize| -> Vec<MomentSums> {
        let mut acc: Vec<MomentSums> = shifts.iter().map(|&s| MomentSums::with_shift(s)).collect();
        let start = c * CHUNK_SIZE;
        let end = (start + CHUNK_SIZE).min(n);
        for i in start..end {
            match sample(i as u64) {
                Some(x) => {
                    for (a, f) in acc.iter_mut().zip(fs) {
                        a.push(f.eval(x));
                    }
                }
                None => acc.iter_mut().for_each(|a| a.diverged += 1),
            }
        }
        acc
    };
    let per_chunk: Vec<Vec<MomentSums>> =
        workers.install(|| (0..chunks).into_par_iter().map(run_chunk).collect());
    pairwise_reduce(per_chunk, |a, b| {
        a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect()
    })
    .unwrap_or_else(|| shifts.iter().map(|&s| MomentSums::with_shift(s)).collect())
}

/// Terminal value of trajectory `i` at level `p`, `None` if it diverged.
fn terminal_sampler<'a, M: Sde + ?Sized>(
    model: &'a M,
    scheme: Scheme,
    grid: TimeGrid,
    seed: u64,
    purpose: StreamPurpose,
) -> impl Fn(u64) -> Option<f64> + Sync + 'a {
    move |i| {
        let mut stream = GaussianStream::keyed(seed, i, grid.level, purpose);
        let state = simulate_observed(model, &scheme, grid, &mut stream, |_| {});
        (!state.diverged).then_some(state.value)
    }
}

fn to_estimate(sums: &MomentSums) -> Result<Estimate, SimulationError> {
    if sums.count == 0 {
        return Err(SimulationError::AllDiverged(sums.diverged));
    }
    Ok(Estimate {
        mean: sums.mean(),
        stderr: sums.stderr(),
        n_effective: sums.count,
        n_diverged: sums.diverged,
    })
}

/// Estimates of several test functions from one ensemble at level `p`.
pub fn estimate_many<M: Sde + ?Sized>(
    model: &M,
    scheme: impl Into<Scheme>,
    fs: &[TestFunction],
    p: u32,
    ensemble: &Ensemble,
) -> Result<Vec<Result<Estimate, SimulationError>>, SimulationError> {
    if ensemble.n < 2 {
        return Err(SimulationError::TooFewTrajectories {
            required: 2,
            got: ensemble.n,
        });
    }
    let grid = TimeGrid::new(model.horizon(), p)?;
    let sampler = terminal_sampler(
        model,
        scheme.into(),
        grid,
        ensemble.seed,
        StreamPurpose::Estimate,
    );
    let sums = ensemble_sums(ensemble.n, &ensemble.workers, fs, sampler);
    Ok(sums.iter().map(to_estimate).collect())
}

/// `E f(X̄_T)` at `Δt = T/2^p` from `n` independent trajectories. Diverged
/// trajectories are excluded from the mean and counted.
pub fn estimate_expectation<M: Sde + ?Sized>(
    model: &M,
    scheme: impl Into<Scheme>,
    f: TestFunction,
    p: u32,
    ensemble: &Ensemble,
) -> Result<Estimate, SimulationError> {
    estimate_many(model, scheme, &[f], p, ensemble)?.remove(0)
}

/// When a weak-error row is shown as diverged (`-`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergencePolicy {
    /// Largest tolerated fraction of diverged trajectories; a row is marked
    /// when the fraction strictly exceeds it.
    pub tolerance: f64,
}

impl Default for DivergencePolicy {
    fn default() -> Self {
        Self { tolerance: 0.0 }
    }
}

impl DivergencePolicy {
    pub fn marks(&self, estimate: &Estimate) -> bool {
        estimate.diverged_fraction() > self.tolerance || !estimate.mean.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakErrorRow {
    pub p: u32,
    pub dt: f64,
    pub estimate: Result<Estimate, SimulationError>,
    pub reference: ReferenceValue,
    /// `|estimate − reference|`, `None` on diverged rows.
    pub abs_error: Option<f64>,
    pub diverged: bool,
}

impl WeakErrorRow {
    fn new(
        p: u32,
        dt: f64,
        estimate: Result<Estimate, SimulationError>,
        reference: &ReferenceValue,
        policy: &DivergencePolicy,
    ) -> Self {
        let diverged = match &estimate {
            Ok(e) => policy.marks(e),
            Err(_) => true,
        };
        let abs_error = match (&estimate, diverged) {
            (Ok(e), false) => Some((e.mean - reference.value).abs()),
            _ => None,
        };
        Self {
            p,
            dt,
            estimate,
            reference: reference.clone(),
            abs_error,
            diverged,
        }
    }

    /// Table cell: the absolute error in `%.3e` style, or `-`.
    pub fn cell(&self) -> String {
        match self.abs_error {
            Some(e) => format!("{e:.3e}"),
            None => "-".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeakErrorTable {
    pub rows: Vec<WeakErrorRow>,
}

impl WeakErrorTable {
    pub fn row(&self, p: u32) -> Option<&WeakErrorRow> {
        self.rows.iter().find(|r| r.p == p)
    }
}

/// One row per level, fresh streams for every `(p, trajectory)`.
pub fn weak_error_sweep<M: Sde + ?Sized>(
    model: &M,
    scheme: impl Into<Scheme>,
    f: TestFunction,
    p_list: &[u32],
    ensemble: &Ensemble,
    reference: &ReferenceValue,
    policy: &DivergencePolicy,
) -> Result<WeakErrorTable, SimulationError> {
    Ok(weak_error_sweep_many(
        model,
        scheme,
        &[(f, reference.clone())],
        p_list,
        ensemble,
        policy,
    )?
    .remove(0))
}

/// Sweeps several test functions over shared ensembles, one table each.
pub fn weak_error_sweep_many<M: Sde + ?Sized>(
    model: &M,
    scheme: impl Into<Scheme>,
    targets: &[(TestFunction, ReferenceValue)],
    p_list: &[u32],
    ensemble: &Ensemble,
    policy: &DivergencePolicy,
) -> Result<Vec<WeakErrorTable>, SimulationError> {
    if ensemble.n < 2 {
        return Err(SimulationError::TooFewTrajectories {
            required: 2,
            got: ensemble.n,
        });
    }
    let scheme = scheme.into();
    let fs: Vec<TestFunction> = targets.iter().map(|(f, _)| *f).collect();
    let mut tables = vec![WeakErrorTable::default(); targets.len()];
    for &p in p_list {
        let grid = TimeGrid::new(model.horizon(), p)?;
        let results = estimate_many(model, scheme, &fs, p, ensemble)?;
        for ((table, (_, reference)), estimate) in tables.iter_mut().zip(targets).zip(results) {
            table
                .rows
                .push(WeakErrorRow::new(p, grid.dt, estimate, reference, policy));
        }
    }
    Ok(tables)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    /// The exponent `2p`.
    pub order: f64,
    pub estimate: Result<Estimate, SimulationError>,
    /// Whether the order is within `1 + 2B₂/σ²` (true when unknown).
    pub within_bound: bool,
}

/// Empirical `E[X̄_T^{order}]` for each order from one ensemble.
pub fn moment_sweep<M: Sde + ?Sized>(
    model: &M,
    scheme: impl Into<Scheme>,
    orders: &[f64],
    p: u32,
    ensemble: &Ensemble,
) -> Result<Vec<MomentEstimate>, SimulationError> {
    let fs: Vec<TestFunction> = orders.iter().map(|&q| TestFunction::Power(q)).collect();
    let bound = max_moment_order(model);
    let estimates = estimate_many(model, scheme, &fs, p, ensemble)?;
    Ok(orders
        .iter()
        .zip(estimates)
        .map(|(&order, estimate)| MomentEstimate {
            order,
            estimate,
            within_bound: bound.is_none_or(|b| order <= b),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpMomentEstimate {
    pub estimate: Estimate,
    /// Whether `μ` respects the exponential-moment bound (true when unknown).
    pub within_bound: bool,
}

/// Empirical `E exp{μ ∫₀ᵀ X̄_s^{2α−2} ds}`, the integral taken as a
/// left-endpoint Riemann sum on the simulation grid. Trajectories whose
/// functional overflows count as diverged.
pub fn exp_moment_estimate<M: Sde + ?Sized>(
    model: &M,
    scheme: impl Into<Scheme>,
    mu: f64,
    p: u32,
    ensemble: &Ensemble,
) -> Result<ExpMomentEstimate, SimulationError> {
    if ensemble.n < 2 {
        return Err(SimulationError::TooFewTrajectories {
            required: 2,
            got: ensemble.n,
        });
    }
    let scheme = scheme.into();
    let grid = TimeGrid::new(model.horizon(), p)?;
    let power = 2.0 * model.alpha() - 2.0;
    let seed = ensemble.seed;
    let sampler = |i: u64| {
        let mut stream = make_stream(seed, i, p);
        let mut integral = CompensatedSum::new();
        let last = simulate_observed(model, &scheme, grid, &mut stream, |s| {
            integral.add(pos_pow(s.value, power) * grid.dt)
        });
        if last.diverged {
            return None;
        }
        let v = (mu * integral.value()).exp();
        v.is_finite().then_some(v)
    };
    let sums = ensemble_sums(
        ensemble.n,
        &ensemble.workers,
        &[TestFunction::Identity],
        sampler,
    );
    let estimate = to_estimate(&sums[0])?;
    let within_bound = match exp_moment_mu_bound(model) {
        Some((b, true)) => mu <= b,
        Some((b, false)) => mu < b,
        None => true,
    };
    Ok(ExpMomentEstimate {
        estimate,
        within_bound,
    })
}
