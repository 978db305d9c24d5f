//! Flat `key = value` run configuration.
//!
//! ```text
//! experiment = simulate
//! [solver]
//! M = 16
//! P = 64
//! dt = 1e-4
//! T = 0.1
//! [potential]
//! lambda = 0
//! n = 1
//! [run]
//! c = 0
//! seed = 1
//! ```
//!
//! Section headers only group keys for readability; every key is unique
//! across the whole file. Lines starting with `#` or `;` are comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use chc_core::dynamics::EnergyQuadrature;
use chc_core::spectral::dealiased_grid;
use chc_core::{DriftKind, MeasureKind, Observable, PotentialSpec, SolverConfig};
use serde::Serialize;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value` or `[section]`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` already set on line {first}")]
    Duplicate { line: usize, key: String, first: usize },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("line {line}: {key}: {message}")]
    Invalid { line: usize, key: String, message: String },
    #[error("config asks for experiment `{config}` but the command is `{command}`")]
    ExperimentMismatch { config: Experiment, command: Experiment },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    SampleMeasure,
    InvariantConvergence,
    Reflection,
    Semigroup,
    StrongFeller,
    Control,
    Mixing,
    Energy,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Simulate,
        Experiment::SampleMeasure,
        Experiment::InvariantConvergence,
        Experiment::Reflection,
        Experiment::Semigroup,
        Experiment::StrongFeller,
        Experiment::Control,
        Experiment::Mixing,
        Experiment::Energy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::SampleMeasure => "sample-measure",
            Experiment::InvariantConvergence => "invariant-convergence",
            Experiment::Reflection => "reflection",
            Experiment::Semigroup => "semigroup",
            Experiment::StrongFeller => "strong-feller",
            Experiment::Control => "control",
            Experiment::Mixing => "mixing",
            Experiment::Energy => "energy",
        }
    }

    /// Whether the experiment integrates in time, so `dt` and `T` are required.
    pub fn is_dynamic(self) -> bool {
        !matches!(self, Experiment::SampleMeasure | Experiment::InvariantConvergence)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

const KEYS: &[&str] = &[
    "experiment",
    "M",
    "P",
    "dt",
    "T",
    "burn_in",
    "c",
    "noise_scale",
    "drift",
    "x_max",
    "stability_margin",
    "lambda",
    "n",
    "eps_clip",
    "delta",
    "clip",
    "seed",
    "output_dir",
    "psi",
    "n_list",
    "count",
    "measure",
    "chains",
    "time_bins",
    "ensemble",
    "lags",
    "x",
    "y",
    "x_scale",
    "trajectories",
    "order",
    "quadrature",
    "snapshot_every",
    "points_list",
    "reference_points",
    "noise_scales",
    "radii",
];

/// Knobs of the individual drivers, with defaults filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentParams {
    pub psi: Vec<Observable>,
    pub n_list: Vec<usize>,
    pub count: usize,
    pub measure: MeasureKind,
    pub chains: usize,
    pub time_bins: usize,
    pub ensemble: usize,
    pub lags: Vec<f64>,
    /// Coefficients `c_1, c_2, …` of the initial condition(s); `None` draws from `μ_c`.
    pub x: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
    pub x_scale: f64,
    pub trajectories: usize,
    pub order: usize,
    pub quadrature: EnergyQuadrature,
    pub snapshot_every: Option<u64>,
    pub points_list: Vec<usize>,
    pub reference_points: Option<usize>,
    pub noise_scales: Vec<f64>,
    pub radii: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub solver: SolverConfig,
    pub master_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub params: ExperimentParams,
    /// The key/value pairs as written, for the metadata echo.
    #[serde(skip)]
    pub entries: BTreeMap<String, String>,
}

#[derive(Clone, Debug)]
struct Entry {
    path: String,
    value: String,
    line: usize,
}

struct Document {
    entries: BTreeMap<String, Entry>,
}

impl Document {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
                continue;
            }
            if let Some(name) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                let name = name.trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(ConfigError::Syntax { line, text: s.into() });
                }
                section = Some(name.to_string());
                continue;
            }
            let Some((k, v)) = s.split_once('=') else {
                return Err(ConfigError::Syntax { line, text: s.into() });
            };
            let key = k.trim();
            let path = match &section {
                Some(sec) => format!("{sec}.{key}"),
                None => key.to_string(),
            };
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line, key: path });
            }
            if let Some(first) = entries.get(key) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: path,
                    first: first.line,
                });
            }
            let value = v.split(" #").next().unwrap_or("").trim().to_string();
            entries.insert(key.to_string(), Entry { path, value, line });
        }
        Ok(Document { entries })
    }

    fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let e = &self.entries[key];
        ConfigError::Invalid {
            line: e.line,
            key: e.path.clone(),
            message: message.into(),
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        e.value
            .parse::<T>()
            .map(Some)
            .map_err(|_| self.invalid(key, format!("cannot parse `{}`", e.value)))
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.get(key)?.ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|_| self.invalid(key, format!("cannot parse list item `{s}`"))))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn check(&self, key: &str, ok: bool, message: &str) -> Result<(), ConfigError> {
        if ok || !self.entries.contains_key(key) {
            Ok(())
        } else {
            Err(self.invalid(key, message))
        }
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

/// Parse a document that names its experiment.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_for(text, None)
}

/// Parse a document for the given command; the `experiment` key may then be
/// omitted, and must agree with the command when present.
pub fn parse_config_for(text: &str, command: Option<Experiment>) -> Result<RunConfig, ConfigError> {
    let doc = Document::parse(text)?;
    let experiment = match (doc.entries.get("experiment"), command) {
        (Some(e), cmd) => {
            let exp: Experiment = e.value.parse().map_err(|m: String| doc.invalid("experiment", m))?;
            if let Some(cmd) = cmd {
                if cmd != exp {
                    return Err(ConfigError::ExperimentMismatch { config: exp, command: cmd });
                }
            }
            exp
        }
        (None, Some(cmd)) => cmd,
        (None, None) => return Err(ConfigError::Missing("experiment".into())),
    };

    let modes: usize = doc.require("M")?;
    doc.check("M", modes >= 1, "M must be at least 1")?;
    let points: usize = doc.require("P")?;
    doc.check(
        "P",
        points >= dealiased_grid(modes),
        &format!("P >= 2*(M+1) required (P = {points}, M = {modes})"),
    )?;
    let (dt, horizon) = if experiment.is_dynamic() {
        (doc.require::<f64>("dt")?, doc.require::<f64>("T")?)
    } else {
        (doc.get::<f64>("dt")?.unwrap_or(1e-4), doc.get::<f64>("T")?.unwrap_or(0.0))
    };
    doc.check("dt", dt > 0.0 && dt.is_finite(), "dt must be positive and finite")?;
    doc.check("T", horizon >= 0.0 && horizon.is_finite(), "T must be nonnegative and finite")?;
    let burn_in: f64 = doc.get("burn_in")?.unwrap_or(0.0);
    doc.check("burn_in", burn_in >= 0.0 && burn_in.is_finite(), "burn_in must be nonnegative")?;
    let mean: f64 = doc.get("c")?.unwrap_or(0.0);
    doc.check("c", mean.abs() < 1.0, "the mean c must lie in (-1, 1)")?;
    let noise_scale: f64 = doc.get("noise_scale")?.unwrap_or(1.0);
    doc.check("noise_scale", noise_scale >= 0.0 && noise_scale.is_finite(), "noise_scale must be nonnegative")?;

    let lambda: f64 = doc.require("lambda")?;
    doc.check("lambda", lambda.is_finite(), "lambda must be finite")?;
    let n: usize = doc.require("n")?;
    let defaults = PotentialSpec::default();
    let eps_clip: f64 = doc.get("eps_clip")?.unwrap_or(defaults.eps_clip);
    doc.check("eps_clip", eps_clip > 0.0 && eps_clip < 0.5, "eps_clip must lie in (0, 0.5)")?;
    let delta: f64 = doc.get("delta")?.unwrap_or(defaults.delta);
    doc.check("delta", delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)")?;
    let clip = match doc.entries.get("clip") {
        Some(e) => parse_bool(&e.value).ok_or_else(|| doc.invalid("clip", "expected true or false"))?,
        None => defaults.clip,
    };
    let spec = PotentialSpec {
        lambda,
        n,
        eps_clip,
        clip,
        delta,
    };

    let drift = match doc.entries.get("drift").map(|e| e.value.as_str()) {
        None | Some("polynomial") => DriftKind::Polynomial,
        Some("lipschitz") => DriftKind::Lipschitz,
        Some("linear") => DriftKind::Linear,
        Some("none") => DriftKind::None,
        Some(_) => return Err(doc.invalid("drift", "expected polynomial, lipschitz, linear or none")),
    };
    let mut solver = SolverConfig::new(modes, points, dt, horizon, spec)
        .map_err(|e| ConfigError::Invalid {
            line: 0,
            key: "solver".into(),
            message: e.to_string(),
        })?
        .with_burn_in(burn_in)
        .with_mean(mean)
        .with_noise_scale(noise_scale)
        .with_drift(drift);
    if let Some(x_max) = doc.get::<f64>("x_max")? {
        doc.check("x_max", x_max > 0.0, "x_max must be positive")?;
        solver.x_max = x_max;
    }
    if let Some(m) = doc.get::<f64>("stability_margin")? {
        doc.check("stability_margin", m > 0.0, "stability_margin must be positive")?;
        solver.stability_margin = m;
    }

    let master_seed: u64 = doc.require("seed")?;
    let output_dir = doc.entries.get("output_dir").map(|e| PathBuf::from(&e.value));
    let params = parse_params(&doc, experiment, horizon, points)?;
    Ok(RunConfig {
        experiment,
        solver,
        master_seed,
        output_dir,
        params,
        entries: doc.entries.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect(),
    })
}

fn default_psi(experiment: Experiment) -> &'static str {
    match experiment {
        Experiment::SampleMeasure => "one,mean,exceedance,norm2",
        Experiment::InvariantConvergence => "exceedance,norm2",
        Experiment::StrongFeller => "tanh:1:3,above:0.3",
        Experiment::Mixing => "one,tanh:1:2,above:0.5",
        _ => "tanh:1:2,above:0.5",
    }
}

fn default_n_list(experiment: Experiment) -> Vec<usize> {
    match experiment {
        Experiment::Reflection => vec![2, 4, 8],
        Experiment::Semigroup => vec![1, 2, 4],
        _ => vec![1, 2, 4, 8],
    }
}

fn parse_params(doc: &Document, experiment: Experiment, horizon: f64, points: usize) -> Result<ExperimentParams, ConfigError> {
    let psi = match doc.entries.get("psi") {
        Some(_) => doc.list::<Observable>("psi")?.unwrap_or_default(),
        None => default_psi(experiment)
            .split(',')
            .map(|s| s.parse().expect("default observables parse"))
            .collect(),
    };
    let n_list = doc.list::<usize>("n_list")?.unwrap_or_else(|| default_n_list(experiment));
    doc.check("n_list", !n_list.is_empty(), "n_list must not be empty")?;

    let measure = match doc.entries.get("measure").map(|e| e.value.as_str()) {
        None | Some("nu_n") => MeasureKind::NuN,
        Some("mu_c") => MeasureKind::MuC,
        Some("nu_limit") => MeasureKind::NuLimit,
        Some(_) => return Err(doc.invalid("measure", "expected mu_c, nu_n or nu_limit")),
    };
    let quadrature = match doc.entries.get("quadrature").map(|e| e.value.as_str()) {
        None | Some("integrator") => EnergyQuadrature::Integrator,
        Some("left_point") => EnergyQuadrature::LeftPoint,
        Some(_) => return Err(doc.invalid("quadrature", "expected integrator or left_point")),
    };

    let count: usize = doc.get("count")?.unwrap_or(10_000);
    doc.check("count", count >= 2, "count must be at least 2")?;
    let chains: usize = doc.get("chains")?.unwrap_or(8);
    doc.check("chains", chains >= 2, "chains must be at least 2")?;
    let ensemble: usize = doc.get("ensemble")?.unwrap_or(100);
    doc.check("ensemble", ensemble >= 2, "ensemble must be at least 2")?;
    let trajectories: usize = doc.get("trajectories")?.unwrap_or(50);
    doc.check("trajectories", trajectories >= 2, "trajectories must be at least 2")?;
    let time_bins: usize = doc.get("time_bins")?.unwrap_or(4);
    doc.check("time_bins", time_bins >= 1, "time_bins must be at least 1")?;
    let order: usize = doc.get("order")?.unwrap_or(4);
    doc.check("order", order >= 1, "order must be at least 1")?;
    let snapshot_every: Option<u64> = doc.get("snapshot_every")?;
    doc.check("snapshot_every", snapshot_every != Some(0), "snapshot_every must be at least 1")?;
    let x_scale: f64 = doc.get("x_scale")?.unwrap_or(0.3);
    doc.check("x_scale", x_scale >= 0.0 && x_scale.is_finite(), "x_scale must be nonnegative")?;

    let lags = match doc.list::<f64>("lags")? {
        Some(l) => {
            let ok = !l.is_empty() && l[0] >= 0.0 && l.windows(2).all(|w| w[0] < w[1]) && l.iter().all(|v| *v <= horizon);
            doc.check("lags", ok, "lags must be nonnegative, strictly increasing and at most T")?;
            l
        }
        None => (0..=10).map(|k| horizon * k as f64 / 10.0).collect(),
    };
    let points_list = doc.list::<usize>("points_list")?.unwrap_or_else(|| vec![points, 2 * points, 4 * points]);
    doc.check(
        "points_list",
        !points_list.is_empty() && points_list.windows(2).all(|w| w[0] < w[1]),
        "points_list must be strictly increasing",
    )?;
    let reference_points: Option<usize> = doc.get("reference_points")?;
    if let Some(r) = reference_points {
        doc.check(
            "reference_points",
            points_list.iter().all(|p| *p < r),
            "reference_points must exceed every entry of points_list",
        )?;
    }
    let noise_scales = doc.list::<f64>("noise_scales")?.unwrap_or_default();
    doc.check("noise_scales", noise_scales.iter().all(|s| *s >= 0.0), "noise scales must be nonnegative")?;
    let radii = doc.list::<f64>("radii")?.unwrap_or_default();
    doc.check("radii", radii.iter().all(|r| *r > 0.0), "radii must be positive")?;

    Ok(ExperimentParams {
        psi,
        n_list,
        count,
        measure,
        chains,
        time_bins,
        ensemble,
        lags,
        x: doc.list("x")?,
        y: doc.list("y")?,
        x_scale,
        trajectories,
        order,
        quadrature,
        snapshot_every,
        points_list,
        reference_points,
        noise_scales,
        radii,
    })
}
