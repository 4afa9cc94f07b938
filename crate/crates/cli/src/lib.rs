//! Command-line front end: hypothesis checks, reference values, weak-error
//! tables, scheme comparisons and rate fits for the built-in cases or
//! user-supplied parameters.

pub mod catalog;
pub mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};

use clap::{Parser, Subcommand};
use expes_core::analysis::{build_case_table, CaseInput, TableReport, TableSettings};
use expes_core::models::{check_hypotheses, KappaConstraint, ModelRef};
use expes_core::montecarlo::{DivergencePolicy, Ensemble, Workers};
use expes_core::paths::make_stream;
use expes_core::reference::{resolve_references, FineGridSpec, ReferenceCache};
use expes_core::schemes::simulate_path;
use expes_core::{Scheme, SchemeKind};
use thiserror::Error;

use crate::config::{Case, CaseModel, ConfigArgs, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    /// Usage, configuration and i/o failures all exit with 2.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// More than half of the table cells diverged.
    DivergenceDominated,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::DivergenceDominated => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "expes",
    version,
    about = "Weak-error experiments for the exponential-Euler scheme"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Report the parameter hypotheses and the constraint slack κ.
    Check,
    /// Compute (or read from the cache) the reference values.
    Reference,
    /// Weak-error table in long CSV form.
    WeakError,
    /// Wide comparison table, one column per level.
    Compare,
    /// Fitted convergence slopes.
    Rate,
    /// Dump one simulated path as `t,value`.
    Simulate,
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    match run(&cli, out, err) {
        Ok(outcome) => {
            if outcome == Outcome::DivergenceDominated {
                let _ = writeln!(err, "warning: more than half of the table cells diverged");
            }
            outcome.exit_code()
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<Outcome, CliError> {
    let cfg = RunConfig::from_args(&cli.config)?;
    match cli.command {
        Command::Check => cmd_check(&cfg, out),
        Command::Reference => with_output(&cfg, out, |w| cmd_reference(&cfg, w, err)),
        Command::WeakError => with_output(&cfg, out, |w| cmd_table(&cfg, TableKind::Long, w, err)),
        Command::Compare => with_output(&cfg, out, |w| cmd_table(&cfg, TableKind::Compare, w, err)),
        Command::Rate => with_output(&cfg, out, |w| cmd_table(&cfg, TableKind::Summary, w, err)),
        Command::Simulate => with_output(&cfg, out, |w| cmd_simulate(&cfg, w)),
    }
}

fn with_output<F>(cfg: &RunConfig, out: &mut dyn Write, body: F) -> Result<Outcome, CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<Outcome, CliError>,
{
    match &cfg.output {
        Some(path) => {
            let mut w = BufWriter::new(
                File::create(path)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
            );
            let outcome = body(&mut w)?;
            w.flush()?;
            Ok(outcome)
        }
        None => body(out),
    }
}

fn describe(case: &Case) -> String {
    let m = case.model.sde();
    let params = match &case.model {
        CaseModel::Prototype(p) => format!(
            "B0={} B1={} B2={} sigma={} alpha={}",
            p.b0, p.b1, p.b2, p.sigma, p.alpha
        ),
        CaseModel::General(g) => format!(
            "drift={} b(0)={} sigma={} alpha={}",
            g.name(),
            m.drift_at_zero(),
            m.sigma(),
            m.alpha()
        ),
    };
    format!("{}: {params} x0={} T={}", case.name, m.x0(), m.horizon())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "satisfied"
    } else {
        "violated"
    }
}

pub fn cmd_check(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome, CliError> {
    for case in &cfg.cases {
        writeln!(out, "{}", describe(case))?;
        let model: ModelRef<'_> = match &case.model {
            CaseModel::Prototype(p) => p.into(),
            CaseModel::General(g) => g.into(),
        };
        match check_hypotheses(model) {
            Ok(r) => {
                writeln!(out, "  H1: {}", verdict(r.h1_ok))?;
                writeln!(out, "  H4: {}", verdict(r.h4_ok))?;
                writeln!(out, "  H5: {}, κ≈{:.2}", verdict(r.h5_ok), r.kappa)?;
                let constraint = match r.kappa_constraint_used {
                    KappaConstraint::PrototypeZeroConstant => "prototype drift, b(0) = 0",
                    KappaConstraint::PrototypePositiveConstant => "prototype drift, b(0) > 0",
                    KappaConstraint::GeneralDrift => "general drift",
                };
                writeln!(out, "  κ = {:.6} ({constraint})", r.kappa)?;
                writeln!(out, "  max moment order: {:.3}", r.max_moment_order)?;
                for note in &r.notes {
                    writeln!(out, "  note: {note}")?;
                }
            }
            Err(e) => writeln!(out, "  H5: unknown ({e})")?,
        }
    }
    Ok(Outcome::Success)
}

fn open_cache(cfg: &RunConfig) -> Result<Option<ReferenceCache>, CliError> {
    match &cfg.cache_dir {
        Some(dir) => ReferenceCache::open(dir.join(ReferenceCache::FILE_NAME))
            .map(Some)
            .map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(None),
    }
}

fn reference_spec(cfg: &RunConfig, workers: &Workers) -> FineGridSpec {
    FineGridSpec {
        workers: workers.clone(),
        ..FineGridSpec::new(cfg.n0, cfg.p_ref, cfg.seed)
    }
}

pub fn cmd_reference(
    cfg: &RunConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Outcome, CliError> {
    let workers = Workers::new(cfg.workers);
    let spec = reference_spec(cfg, &workers);
    let mut cache = open_cache(cfg)?;
    writeln!(out, "case,test_fn,value,uncertainty,method,n0,p_ref,seed")?;
    let mut failures = 0;
    for case in &cfg.cases {
        let refs = resolve_references(
            case.model.sde(),
            &cfg.test_functions,
            cfg.reference,
            &spec,
            cache.as_mut(),
        );
        for (f, r) in cfg.test_functions.iter().zip(refs) {
            match r {
                Ok(v) => {
                    let opt = |x: Option<String>| x.unwrap_or_else(|| "-".into());
                    writeln!(
                        out,
                        "{},{},{:.10e},{:.3e},{},{},{},{}",
                        case.name,
                        f.id(),
                        v.value,
                        v.uncertainty,
                        v.method.id(),
                        opt(v.meta.n0.map(|n| n.to_string())),
                        opt(v.meta.p_ref.map(|p| p.to_string())),
                        opt(v.meta.seed.map(|s| s.to_string())),
                    )?;
                    for note in &v.meta.notes {
                        writeln!(err, "{}/{}: {note}", case.name, f.id())?;
                    }
                    if v.meta.from_cache {
                        writeln!(err, "{}/{}: read from cache", case.name, f.id())?;
                    }
                }
                Err(e) => {
                    failures += 1;
                    writeln!(out, "{},{},-,-,-,-,-,-", case.name, f.id())?;
                    writeln!(err, "{}/{}: {e}", case.name, f.id())?;
                }
            }
        }
    }
    if failures > 0 && failures * 2 > cfg.cases.len() * cfg.test_functions.len() {
        return Ok(Outcome::DivergenceDominated);
    }
    Ok(Outcome::Success)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TableKind {
    Long,
    Compare,
    Summary,
}

/// Builds the case table for the configured cases, schemes and functions.
pub fn build_report(
    cfg: &RunConfig,
    default_schemes: &[SchemeKind],
    err: &mut dyn Write,
) -> Result<TableReport, CliError> {
    let workers = Workers::new(cfg.workers);
    let schemes: Vec<Scheme> = match &cfg.schemes {
        Some(s) => s.clone(),
        None => default_schemes.iter().map(|&k| Scheme::new(k)).collect(),
    };
    let settings = TableSettings {
        p_list: cfg.p_list(),
        ensemble: Ensemble::with_workers(cfg.n, cfg.seed, workers.clone()),
        reference: reference_spec(cfg, &workers),
        preference: cfg.reference,
        policy: DivergencePolicy {
            tolerance: cfg.divergence_tolerance,
        },
        fit_range: cfg.fit_range,
    };
    let inputs: Vec<CaseInput<'_>> = cfg
        .cases
        .iter()
        .map(|c| CaseInput {
            name: c.name.clone(),
            model: c.model.sde(),
        })
        .collect();
    let mut cache = open_cache(cfg)?;
    let report = build_case_table(
        &inputs,
        &schemes,
        &cfg.test_functions,
        &settings,
        cache.as_mut(),
    );
    for case in &report.cases {
        for (f, r) in &case.references {
            match r {
                Ok(v) => {
                    for note in &v.meta.notes {
                        writeln!(err, "{}/{}: {note}", case.case, f.id())?;
                    }
                }
                Err(e) => writeln!(err, "{}/{}: {e}", case.case, f.id())?,
            }
        }
    }
    Ok(report)
}

fn cmd_table(
    cfg: &RunConfig,
    kind: TableKind,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Outcome, CliError> {
    let defaults: &[SchemeKind] = match kind {
        TableKind::Compare => &SchemeKind::COMPARISON,
        _ => &[SchemeKind::ExpEs],
    };
    let report = build_report(cfg, defaults, err)?;
    match kind {
        TableKind::Long => report.write_csv(&mut *out)?,
        TableKind::Compare => report.write_compare_csv(&mut *out)?,
        TableKind::Summary => report.write_summary_csv(&mut *out)?,
    }
    if report.diverged_fraction() > 0.5 {
        Ok(Outcome::DivergenceDominated)
    } else {
        Ok(Outcome::Success)
    }
}

pub fn cmd_simulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let case = &cfg.cases[0];
    let scheme = cfg
        .schemes
        .as_ref()
        .and_then(|s| s.first().copied())
        .unwrap_or(Scheme::new(SchemeKind::ExpEs));
    let p = cfg.p_max;
    let mut stream = make_stream(cfg.seed, cfg.trajectory, p);
    let path = simulate_path(case.model.sde(), scheme, p, &mut stream)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    writeln!(out, "t,value")?;
    for (t, v) in path {
        writeln!(out, "{t:?},{v:?}")?;
    }
    Ok(Outcome::Success)
}
