//! Convergence-rate fits and case tables.

use std::io::{self, Write};

use crate::error::AnalysisError;
use crate::models::Sde;
use crate::montecarlo::{
    weak_error_sweep_many, DivergencePolicy, Ensemble, TestFunction, WeakErrorTable,
};
use crate::reference::{
    resolve_references, FineGridSpec, ReferenceCache, ReferencePreference, ReferenceValue,
};
use crate::schemes::Scheme;

/// Default level range for rate fits; finer levels are dominated by
/// Monte Carlo noise at moderate ensemble sizes.
pub const DEFAULT_FIT_RANGE: (u32, u32) = (2, 7);

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(p, error)` pairs entering the fit.
    pub points_used: Vec<(u32, f64)>,
    /// Levels in range left out because the row diverged or had error ≤ 0.
    pub excluded: Vec<u32>,
    pub p_min: u32,
    pub p_max: u32,
}

/// Least-squares fit of `log2(error)` against `log2(dt)` over the rows with
/// `p_min ≤ p ≤ p_max`. Each point is `(p, dt, error)`; `None` errors mark
/// diverged rows.
pub fn fit_points(
    points: &[(u32, f64, Option<f64>)],
    p_min: u32,
    p_max: u32,
) -> Result<RateFit, AnalysisError> {
    let mut used = Vec::new();
    let mut xy = Vec::new();
    let mut excluded = Vec::new();
    for &(p, dt, err) in points
        .iter()
        .filter(|(p, _, _)| (p_min..=p_max).contains(p))
    {
        match err {
            Some(e) if e > 0.0 && e.is_finite() && dt > 0.0 => {
                used.push((p, e));
                xy.push((dt.log2(), e.log2()));
            }
            _ => excluded.push(p),
        }
    }
    if xy.len() < 2 {
        return Err(AnalysisError::InsufficientData {
            usable: xy.len(),
            p_min,
            p_max,
        });
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = xy.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = xy.iter().map(|(_, y)| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::InsufficientData {
            usable: 1,
            p_min,
            p_max,
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xy
        .iter()
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points_used: used,
        excluded,
        p_min,
        p_max,
    })
}

/// Fit of the table's absolute errors; diverged rows are excluded.
pub fn fit_rate(table: &WeakErrorTable, p_min: u32, p_max: u32) -> Result<RateFit, AnalysisError> {
    let points: Vec<_> = table
        .rows
        .iter()
        .map(|r| (r.p, r.dt, r.abs_error))
        .collect();
    fit_points(&points, p_min, p_max)
}

/// One named model of a case table.
pub struct CaseInput<'a> {
    pub name: String,
    pub model: &'a dyn Sde,
}

/// Shared settings of a case-table run.
#[derive(Debug, Clone)]
pub struct TableSettings {
    pub p_list: Vec<u32>,
    pub ensemble: Ensemble,
    pub reference: FineGridSpec,
    pub preference: ReferencePreference,
    pub policy: DivergencePolicy,
    pub fit_range: (u32, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub scheme: Scheme,
    pub f: TestFunction,
    /// The sweep, or the message of whatever prevented it.
    pub table: Result<WeakErrorTable, String>,
    pub fit: Result<RateFit, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseReport {
    pub case: String,
    pub references: Vec<(TestFunction, Result<ReferenceValue, String>)>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TableReport {
    pub cases: Vec<CaseReport>,
    pub p_list: Vec<u32>,
}

/// Weak-error tables for every `case × scheme × f`, with references shared
/// by all schemes of a case and one estimation ensemble per `(case, scheme,
/// p)` shared by all test functions. Failures are recorded in the cell that
/// hit them.
pub fn build_case_table(
    cases: &[CaseInput<'_>],
    schemes: &[Scheme],
    fs: &[TestFunction],
    settings: &TableSettings,
    mut cache: Option<&mut ReferenceCache>,
) -> TableReport {
    let mut report = TableReport {
        cases: Vec::new(),
        p_list: settings.p_list.clone(),
    };
    for case in cases {
        let refs = resolve_references(
            case.model,
            fs,
            settings.preference,
            &settings.reference,
            cache.as_deref_mut(),
        );
        let references: Vec<(TestFunction, Result<ReferenceValue, String>)> = fs
            .iter()
            .copied()
            .zip(refs.into_iter().map(|r| r.map_err(|e| e.to_string())))
            .collect();
        let targets: Vec<(TestFunction, ReferenceValue)> = references
            .iter()
            .filter_map(|(f, r)| r.as_ref().ok().map(|r| (*f, r.clone())))
            .collect();
        let mut rows = Vec::new();
        for &scheme in schemes {
            let sweeps = if targets.is_empty() {
                Ok(Vec::new())
            } else {
                weak_error_sweep_many(
                    case.model,
                    scheme,
                    &targets,
                    &settings.p_list,
                    &settings.ensemble,
                    &settings.policy,
                )
            };
            let mut sweeps = match sweeps {
                Ok(t) => t.into_iter().map(Ok).collect::<Vec<_>>(),
                Err(e) => vec![Err(e.to_string()); targets.len()],
            }
            .into_iter();
            for (f, reference) in &references {
                let table = match reference {
                    Ok(_) => sweeps.next().expect("one sweep per resolved reference"),
                    Err(e) => Err(format!("reference unavailable: {e}")),
                };
                let fit = match &table {
                    Ok(t) => fit_rate(t, settings.fit_range.0, settings.fit_range.1)
                        .map_err(|e| e.to_string()),
                    Err(e) => Err(e.clone()),
                };
                rows.push(TableRow {
                    scheme,
                    f: *f,
                    table,
                    fit,
                });
            }
        }
        report.cases.push(CaseReport {
            case: case.name.clone(),
            references,
            rows,
        });
    }
    report
}

impl TableReport {
    /// Fraction of `(row, p)` cells that are diverged or failed.
    pub fn diverged_fraction(&self) -> f64 {
        let (mut bad, mut total) = (0usize, 0usize);
        for row in self.cases.iter().flat_map(|c| &c.rows) {
            match &row.table {
                Ok(t) => {
                    total += t.rows.len();
                    bad += t.rows.iter().filter(|r| r.diverged).count();
                }
                Err(_) => {
                    total += self.p_list.len();
                    bad += self.p_list.len();
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            bad as f64 / total as f64
        }
    }

    /// Long-form CSV, one line per `(case, scheme, f, p)` cell.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "case,scheme,test_fn,p,dt,estimate,stderr,reference,ref_method,abs_error,diverged"
        )?;
        for case in &self.cases {
            for row in &case.rows {
                let prefix = format!("{},{},{}", case.case, row.scheme.kind.id(), row.f.id());
                match &row.table {
                    Ok(table) => {
                        for r in &table.rows {
                            let (estimate, stderr) = match &r.estimate {
                                Ok(e) => (num(e.mean), num(e.stderr)),
                                Err(_) => ("-".into(), "-".into()),
                            };
                            let abs_error = r.abs_error.map(num).unwrap_or_else(|| "-".into());
                            writeln!(
                                w,
                                "{prefix},{},{},{estimate},{stderr},{},{},{abs_error},{}",
                                r.p,
                                num(r.dt),
                                num(r.reference.value),
                                r.reference.method.id(),
                                r.diverged
                            )?;
                        }
                    }
                    Err(_) => {
                        for &p in &self.p_list {
                            writeln!(w, "{prefix},{p},-,-,-,-,-,-,true")?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Slope summary, one line per `(case, scheme, f)`.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "case,scheme,test_fn,slope,r_squared,p_min,p_max")?;
        for case in &self.cases {
            for row in &case.rows {
                let prefix = format!("{},{},{}", case.case, row.scheme.kind.id(), row.f.id());
                match &row.fit {
                    Ok(fit) => writeln!(
                        w,
                        "{prefix},{:.6},{:.6},{},{}",
                        fit.slope, fit.r_squared, fit.p_min, fit.p_max
                    )?,
                    Err(_) => writeln!(w, "{prefix},-,-,-,-")?,
                }
            }
        }
        Ok(())
    }

    /// Wide comparison table: one line per `(case, scheme, f)`, one
    /// absolute-error column per level, diverged cells as `-`.
    pub fn write_compare_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "case,scheme,test_fn")?;
        for p in &self.p_list {
            write!(w, ",p{p}")?;
        }
        writeln!(w)?;
        for case in &self.cases {
            for row in &case.rows {
                write!(w, "{},{},{}", case.case, row.scheme.kind.id(), row.f.id())?;
                for &p in &self.p_list {
                    let cell = row
                        .table
                        .as_ref()
                        .ok()
                        .and_then(|t| t.row(p))
                        .map(|r| r.cell())
                        .unwrap_or_else(|| "-".into());
                    write!(w, ",{cell}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x:.10e}")
}
