//! Run configuration: a TOML file merged with command-line flags.
//!
//! Every key of the file has a flag twin, and flags win. Cases are given as
//! repeated `[[case]]` tables, either by built-in id or by parameters:
//!
//! ```toml
//! seed = 7
//! n = 100000
//! p_min = 2
//! p_max = 7
//! schemes = ["exp-es", "tes"]
//! test_functions = ["x", "x2"]
//!
//! [[case]]
//! id = "case1"
//!
//! [[case]]
//! name = "soft"
//! b0 = 0.0
//! b1 = 0.5
//! b2 = 1.0
//! sigma = 0.2
//! alpha = 1.5
//! drift = "saturating"
//! ```

use std::path::{Path, PathBuf};

use clap::Args;
use expes_core::models::named_drift;
use expes_core::schemes::MilsteinFactor;
use expes_core::{
    GeneralDriftModel, PowerConvention, PrototypeModel, ReferencePreference, Scheme, SchemeKind,
    SchemeOptions, Sde, TestFunction,
};
use serde::Deserialize;

use crate::catalog;
use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CaseEntry {
    pub id: Option<String>,
    pub name: Option<String>,
    pub b0: Option<f64>,
    pub b1: Option<f64>,
    pub b2: Option<f64>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    pub x0: Option<f64>,
    pub horizon: Option<f64>,
    pub drift: Option<String>,
}

/// Contents of a configuration file; every field is optional.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default, rename = "case")]
    pub cases: Vec<CaseEntry>,
    pub schemes: Option<Vec<String>>,
    pub test_functions: Option<Vec<String>>,
    pub p_min: Option<u32>,
    pub p_max: Option<u32>,
    pub fit_p_min: Option<u32>,
    pub fit_p_max: Option<u32>,
    pub n: Option<usize>,
    pub n0: Option<usize>,
    pub p_ref: Option<u32>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub reference: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub milstein: Option<String>,
    pub power: Option<String>,
    pub divergence_tolerance: Option<f64>,
    pub drift: Option<String>,
    pub trajectory: Option<u64>,
}

/// Flag twins of the configuration keys.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in case id (case1..case7); repeatable.
    #[arg(long = "case", global = true)]
    pub cases: Vec<String>,
    /// Inline prototype parameters `B0,B1,B2,SIGMA,ALPHA`; repeatable.
    #[arg(long = "params", global = true)]
    pub params: Vec<String>,
    /// Named drift applied to every case (`saturating`, `cubic-damped`).
    #[arg(long, global = true)]
    pub drift: Option<String>,
    /// Scheme ids, comma separated (exp-es, exp-euler, ses, sms, tes, stes).
    #[arg(long, global = true, value_delimiter = ',')]
    pub schemes: Option<Vec<String>>,
    /// Test function ids, comma separated (x, x2, inv_x, exp_neg_x2, one).
    #[arg(
        long = "test-functions",
        short = 'f',
        global = true,
        value_delimiter = ','
    )]
    pub test_functions: Option<Vec<String>>,
    #[arg(long, global = true)]
    pub p_min: Option<u32>,
    #[arg(long, global = true)]
    pub p_max: Option<u32>,
    #[arg(long, global = true)]
    pub fit_p_min: Option<u32>,
    #[arg(long, global = true)]
    pub fit_p_max: Option<u32>,
    /// Trajectories per estimate.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Trajectories of the fine-grid reference.
    #[arg(long, global = true)]
    pub n0: Option<usize>,
    /// Level of the fine-grid reference (`dt = T/2^p_ref`).
    #[arg(long, global = true)]
    pub p_ref: Option<u32>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Write CSV output here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Reference preference: `fine-grid` or `analytic`.
    #[arg(long, global = true)]
    pub reference: Option<String>,
    /// Reference cache directory (defaults to $EXPES_CACHE_DIR).
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// SMS correction coefficient: `printed` or `standard`.
    #[arg(long, global = true)]
    pub milstein: Option<String>,
    /// Powers of negative states: `real-domain` or `sign-preserving`.
    #[arg(long, global = true)]
    pub power: Option<String>,
    /// Largest diverged fraction before a row is shown as `-`.
    #[arg(long, global = true)]
    pub divergence_tolerance: Option<f64>,
    /// Trajectory index for `simulate`.
    #[arg(long, global = true)]
    pub trajectory: Option<u64>,
}

pub enum CaseModel {
    Prototype(PrototypeModel),
    General(GeneralDriftModel),
}

impl CaseModel {
    pub fn sde(&self) -> &dyn Sde {
        match self {
            CaseModel::Prototype(m) => m,
            CaseModel::General(m) => m,
        }
    }
}

pub struct Case {
    pub name: String,
    pub model: CaseModel,
}

/// Fully resolved settings of a run.
pub struct RunConfig {
    pub cases: Vec<Case>,
    /// `None` when neither file nor flags name schemes.
    pub schemes: Option<Vec<Scheme>>,
    pub test_functions: Vec<TestFunction>,
    pub p_min: u32,
    pub p_max: u32,
    pub fit_range: (u32, u32),
    pub n: usize,
    pub n0: usize,
    pub p_ref: u32,
    pub seed: u64,
    pub workers: usize,
    pub output: Option<PathBuf>,
    pub reference: ReferencePreference,
    pub cache_dir: Option<PathBuf>,
    pub divergence_tolerance: f64,
    pub trajectory: u64,
}

pub const DEFAULT_N: usize = 100_000;
pub const DEFAULT_N0: usize = 1_000_000;
pub const DEFAULT_P_REF: u32 = 14;
pub const DEFAULT_P_RANGE: (u32, u32) = (2, 9);
pub const DEFAULT_SEED: u64 = 1;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

fn build_case(entry: &CaseEntry, drift_override: Option<&str>) -> Result<Case, CliError> {
    let (name, base) = match &entry.id {
        Some(id) => {
            let m = catalog::builtin(id).ok_or_else(|| {
                usage(format!(
                    "unknown case `{id}` (known: {})",
                    catalog::ids().collect::<Vec<_>>().join(", ")
                ))
            })?;
            (
                entry
                    .name
                    .clone()
                    .unwrap_or_else(|| id.to_ascii_lowercase()),
                m,
            )
        }
        None => {
            let need = |v: Option<f64>, key: &str| {
                v.ok_or_else(|| usage(format!("inline case needs `{key}`")))
            };
            let m = PrototypeModel {
                b0: entry.b0.unwrap_or(0.0),
                b1: entry.b1.unwrap_or(0.0),
                b2: need(entry.b2, "b2")?,
                sigma: need(entry.sigma, "sigma")?,
                alpha: need(entry.alpha, "alpha")?,
                x0: 1.0,
                horizon: 1.0,
            };
            let name = entry.name.clone().unwrap_or_else(|| {
                format!(
                    "b0={:?};b1={:?};b2={:?};sigma={:?};alpha={:?}",
                    m.b0, m.b1, m.b2, m.sigma, m.alpha
                )
            });
            (name, m)
        }
    };
    let mut model = base;
    if entry.id.is_some() {
        for (slot, value) in [
            (&mut model.b0, entry.b0),
            (&mut model.b1, entry.b1),
            (&mut model.b2, entry.b2),
            (&mut model.sigma, entry.sigma),
            (&mut model.alpha, entry.alpha),
        ] {
            if let Some(v) = value {
                *slot = v;
            }
        }
    }
    model.x0 = entry.x0.unwrap_or(1.0);
    model.horizon = entry.horizon.unwrap_or(1.0);
    model
        .validate()
        .map_err(|e| usage(format!("case `{name}`: {e}")))?;
    let model = match drift_override.or(entry.drift.as_deref()) {
        None | Some("prototype") => CaseModel::Prototype(model),
        Some(d) => CaseModel::General(
            named_drift(d, &model).map_err(|e| usage(format!("case `{name}`: {e}")))?,
        ),
    };
    Ok(Case { name, model })
}

fn parse_params(s: &str) -> Result<CaseEntry, CliError> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--params `{s}`: {e}")))?;
    match vals[..] {
        [b0, b1, b2, sigma, alpha] => Ok(CaseEntry {
            b0: Some(b0),
            b1: Some(b1),
            b2: Some(b2),
            sigma: Some(sigma),
            alpha: Some(alpha),
            ..Default::default()
        }),
        _ => Err(usage(format!(
            "--params `{s}`: expected B0,B1,B2,SIGMA,ALPHA"
        ))),
    }
}

fn parse_power(s: &str) -> Result<PowerConvention, CliError> {
    match s {
        "real-domain" => Ok(PowerConvention::RealDomain),
        "sign-preserving" => Ok(PowerConvention::SignPreserving),
        _ => Err(usage(format!("unknown power convention `{s}`"))),
    }
}

fn parse_milstein(s: &str) -> Result<MilsteinFactor, CliError> {
    match s {
        "printed" => Ok(MilsteinFactor::Printed),
        "standard" => Ok(MilsteinFactor::Standard),
        _ => Err(usage(format!("unknown Milstein factor `{s}`"))),
    }
}

impl RunConfig {
    /// Merges the file named by `--config` (if any) with the flags.
    pub fn from_args(args: &ConfigArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Self::merge(file, args)
    }

    pub fn merge(file: FileConfig, args: &ConfigArgs) -> Result<Self, CliError> {
        let drift = args.drift.clone().or(file.drift.clone());
        let mut entries: Vec<CaseEntry> = Vec::new();
        if args.cases.is_empty() && args.params.is_empty() {
            entries.extend(file.cases.iter().cloned());
        } else {
            entries.extend(args.cases.iter().map(|id| CaseEntry {
                id: Some(id.clone()),
                ..Default::default()
            }));
            for p in &args.params {
                entries.push(parse_params(p)?);
            }
        }
        if entries.is_empty() {
            return Err(usage(
                "no case given (use --case, --params or [[case]] in the config)",
            ));
        }
        let cases = entries
            .iter()
            .map(|e| build_case(e, drift.as_deref()))
            .collect::<Result<Vec<_>, _>>()?;

        let mut opts = SchemeOptions::default();
        if let Some(m) = args.milstein.as_deref().or(file.milstein.as_deref()) {
            opts.milstein = parse_milstein(m)?;
        }
        if let Some(p) = args.power.as_deref().or(file.power.as_deref()) {
            opts.power = parse_power(p)?;
        }
        let schemes = match args.schemes.as_ref().or(file.schemes.as_ref()) {
            Some(list) => Some(
                list.iter()
                    .map(|s| {
                        s.parse::<SchemeKind>()
                            .map(|k| Scheme::with_options(k, opts))
                            .map_err(usage)
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            None => None,
        };
        let test_functions = match args
            .test_functions
            .as_ref()
            .or(file.test_functions.as_ref())
        {
            Some(list) => list
                .iter()
                .map(|s| s.parse::<TestFunction>().map_err(usage))
                .collect::<Result<Vec<_>, _>>()?,
            None => vec![TestFunction::Identity],
        };
        if test_functions.is_empty() {
            return Err(usage("empty test-function list"));
        }

        let p_min = args.p_min.or(file.p_min).unwrap_or(DEFAULT_P_RANGE.0);
        let p_max = args.p_max.or(file.p_max).unwrap_or(DEFAULT_P_RANGE.1);
        if p_min > p_max {
            return Err(usage(format!(
                "empty level range p_min = {p_min} > p_max = {p_max}"
            )));
        }
        let fit_range = (
            args.fit_p_min.or(file.fit_p_min).unwrap_or(p_min),
            args.fit_p_max.or(file.fit_p_max).unwrap_or(p_max),
        );
        if fit_range.0 > fit_range.1 {
            return Err(usage(format!(
                "empty fit range {}..{}",
                fit_range.0, fit_range.1
            )));
        }
        let n = args.n.or(file.n).unwrap_or(DEFAULT_N);
        if n < 2 {
            return Err(usage("n must be at least 2"));
        }
        let n0 = args.n0.or(file.n0).unwrap_or(DEFAULT_N0);
        if n0 < 1 {
            return Err(usage("n0 must be at least 1"));
        }
        let p_ref = args.p_ref.or(file.p_ref).unwrap_or(DEFAULT_P_REF);
        let reference = match args.reference.as_deref().or(file.reference.as_deref()) {
            None | Some("fine-grid") => ReferencePreference::FineGrid,
            Some("analytic") => ReferencePreference::Analytic,
            Some(other) => return Err(usage(format!("unknown reference preference `{other}`"))),
        };
        let divergence_tolerance = args
            .divergence_tolerance
            .or(file.divergence_tolerance)
            .unwrap_or(0.0);
        if !(0.0..=1.0).contains(&divergence_tolerance) {
            return Err(usage("divergence_tolerance must lie in [0, 1]"));
        }
        let cache_dir =
            args.cache_dir.clone().or(file.cache_dir).or_else(|| {
                std::env::var_os(expes_core::reference::CACHE_DIR_ENV).map(PathBuf::from)
            });

        Ok(RunConfig {
            cases,
            schemes,
            test_functions,
            p_min,
            p_max,
            fit_range,
            n,
            n0,
            p_ref,
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            workers: args.workers.or(file.workers).unwrap_or(0),
            output: args.output.clone().or(file.output),
            reference,
            cache_dir,
            divergence_tolerance,
            trajectory: args.trajectory.or(file.trajectory).unwrap_or(0),
        })
    }

    pub fn p_list(&self) -> Vec<u32> {
        (self.p_min..=self.p_max).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args() -> ConfigArgs {
        ConfigArgs::default()
    }

    #[test]
    fn parses_repeated_case_sections() {
        let file = FileConfig::parse(
            r#"
            seed = 3
            schemes = ["exp-es", "tes"]
            [[case]]
            id = "case2"
            [[case]]
            name = "mine"
            b2 = 1.0
            sigma = 0.5
            alpha = 1.5
            "#,
        )
        .unwrap();
        let cfg = RunConfig::merge(file, &args()).unwrap();
        assert_eq!(cfg.cases.len(), 2);
        assert_eq!(cfg.cases[0].name, "case2");
        assert_eq!(cfg.cases[1].name, "mine");
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.schemes.unwrap().len(), 2);
    }

    #[test]
    fn flags_override_file() {
        let file = FileConfig::parse("seed = 3\nn = 50\n[[case]]\nid = \"case1\"\n").unwrap();
        let a = ConfigArgs {
            seed: Some(9),
            cases: vec!["case4".into()],
            ..args()
        };
        let cfg = RunConfig::merge(file, &a).unwrap();
        assert_eq!((cfg.seed, cfg.n), (9, 50));
        assert_eq!(cfg.cases[0].name, "case4");
    }

    #[test]
    fn rejects_bad_inputs() {
        let with_case = |mut a: ConfigArgs| {
            a.cases = vec!["case1".into()];
            RunConfig::merge(FileConfig::default(), &a)
        };
        assert!(matches!(
            RunConfig::merge(FileConfig::default(), &args()),
            Err(CliError::Usage(_))
        ));
        assert!(with_case(ConfigArgs {
            p_min: Some(5),
            p_max: Some(4),
            ..args()
        })
        .is_err());
        assert!(with_case(ConfigArgs {
            schemes: Some(vec!["rk4".into()]),
            ..args()
        })
        .is_err());
        let alpha_one = ConfigArgs {
            params: vec!["0,0,1,1,1".into()],
            ..args()
        };
        assert!(RunConfig::merge(FileConfig::default(), &alpha_one).is_err());
        assert!(FileConfig::parse("bogus = 1").is_err());
    }

    #[test]
    fn named_drift_builds_general_model() {
        let a = ConfigArgs {
            cases: vec!["case1".into()],
            drift: Some("saturating".into()),
            ..args()
        };
        let cfg = RunConfig::merge(FileConfig::default(), &a).unwrap();
        assert!(matches!(cfg.cases[0].model, CaseModel::General(_)));
    }
}
