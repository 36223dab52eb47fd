//! Experiment configuration: JSON parsing, defaults and validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fracfree_core::model::{DatumKind, ExteriorDatum, FractionalParams, GridSpec};
use fracfree_core::solver::SolverParams;
use serde::{Deserialize, Serialize};

/// Named pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Energy,
    Minimize,
    Oracle,
    Comparison,
    RemarkR,
    Plateau,
    WeissScan,
    Blowup,
    Cone2d,
    Dyda,
    EnergyBound,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::Energy,
        Experiment::Minimize,
        Experiment::Oracle,
        Experiment::Comparison,
        Experiment::RemarkR,
        Experiment::Plateau,
        Experiment::WeissScan,
        Experiment::Blowup,
        Experiment::Cone2d,
        Experiment::Dyda,
        Experiment::EnergyBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Energy => "energy",
            Experiment::Minimize => "minimize",
            Experiment::Oracle => "oracle",
            Experiment::Comparison => "comparison",
            Experiment::RemarkR => "remark-r",
            Experiment::Plateau => "plateau",
            Experiment::WeissScan => "weiss-scan",
            Experiment::Blowup => "blowup",
            Experiment::Cone2d => "cone2d",
            Experiment::Dyda => "dyda",
            Experiment::EnergyBound => "energy-bound",
        }
    }

    /// Experiments that read the configured exterior datum.
    pub fn needs_datum(self) -> bool {
        matches!(
            self,
            Experiment::Energy
                | Experiment::Minimize
                | Experiment::RemarkR
                | Experiment::WeissScan
                | Experiment::Blowup
        )
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|e| e.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Self::ALL.iter().copied().find(|e| e.name() == s).ok_or_else(|| ConfigError::UnknownExperiment {
            name: s.to_string(),
            valid: Self::valid_names(),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("unknown experiment `{name}`; valid names: {valid}")]
    UnknownExperiment { name: String, valid: String },
    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: &str, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid { path: path.to_string(), message: message.to_string() }
}

/// Box grid; the two radii default to `64 L` and `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub dimension: usize,
    pub half_width: f64,
    pub cells_per_side: usize,
    pub truncation_radius: Option<f64>,
    pub domain_radius: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dimension: 1, half_width: 1.0, cells_per_side: 32, truncation_radius: None, domain_radius: None }
    }
}

impl GridConfig {
    pub fn spec(&self) -> GridSpec {
        let mut g = GridSpec::new(self.dimension, self.half_width, self.cells_per_side);
        if let Some(r) = self.truncation_radius {
            g = g.with_truncation_radius(r);
        }
        if let Some(r) = self.domain_radius {
            g = g.with_domain_radius(r);
        }
        g
    }

    fn fill(&mut self) {
        let spec = self.spec();
        self.truncation_radius = Some(spec.truncation_radius);
        self.domain_radius = Some(spec.domain_radius);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamsConfig {
    pub s: f64,
    pub sigma: f64,
    pub c_ratio: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self { s: 0.3, sigma: 0.5, c_ratio: 1.0 }
    }
}

impl ParamsConfig {
    pub fn params(&self) -> FractionalParams {
        FractionalParams { s: self.s, sigma: self.sigma, c_ratio: self.c_ratio }
    }
}

/// Knobs of individual pipelines. Each experiment reads only its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Options {
    /// Random instances (oracle, comparison, plateau, minimize residual, energy-bound).
    pub instances: usize,
    /// Lower bounds `A` of the comparison data; each is also run mirrored.
    pub thresholds: Vec<f64>,
    /// Largest Ω handled by the brute-force oracle.
    pub oracle_limit: usize,
    /// Weiss radii; empty means nine geometric radii in `[reach/4, reach]`.
    pub radii: Vec<f64>,
    /// Top of the extension half-grid; defaults to the box half-width.
    pub extension_top: Option<f64>,
    pub level_ratio: f64,
    /// `minimizer` solves first, `datum` uses the sampled datum pair.
    pub profile_source: ProfileSource,
    /// Blow-up scales `r` of `u_r(x) = r^{σ/2-s} u(r x)`.
    pub scales: Vec<f64>,
    /// Base radius `t` at which the blow-up compares `Φ_u(r t)` with `Φ_{u_r}(t)`.
    pub blowup_radius: f64,
    /// Cells per side of the refinement ladder (dyda).
    pub refinements: Vec<usize>,
    /// Window on which the dyda residual is measured.
    pub window: [f64; 2],
    /// Cutoff radii of the cone defect.
    pub cone_radii: Vec<f64>,
    /// Fraction of `max|u|` below which cells are excluded from residual masks.
    pub residual_fraction: f64,
    /// Radius of the ball whose energy energy-bound reports.
    pub inner_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSource {
    Minimizer,
    Datum,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            instances: 10,
            thresholds: vec![-1.0, 0.5, 2.0],
            oracle_limit: fracfree_core::solver::DEFAULT_ORACLE_LIMIT,
            radii: Vec::new(),
            extension_top: None,
            level_ratio: fracfree_core::extension::LEVEL_RATIO,
            profile_source: ProfileSource::Minimizer,
            scales: vec![0.5, 0.25],
            blowup_radius: 0.5,
            refinements: vec![128, 256, 512],
            window: [0.25, 0.75],
            cone_radii: vec![4.0, 8.0, 16.0],
            residual_fraction: 0.05,
            inner_radius: 1.0,
        }
    }
}

/// One run. Every field has a default except the experiment name; the datum
/// is required by the experiments that read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub grid: GridConfig,
    pub params: ParamsConfig,
    pub datum: Option<ExteriorDatum>,
    pub solver: SolverParams,
    /// Relative quadrature tolerance of the kernel tables.
    pub quadrature_tol: f64,
    pub outdir: PathBuf,
    /// Directory of cached kernel tables; `null` disables caching.
    pub cache_dir: Option<PathBuf>,
    /// Seeds the random instances.
    pub seed: u64,
    pub options: Options,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Energy,
            grid: GridConfig::default(),
            params: ParamsConfig::default(),
            datum: None,
            solver: SolverParams::default(),
            quadrature_tol: 1e-10,
            outdir: PathBuf::from("runs"),
            cache_dir: None,
            seed: 0,
            options: Options::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn spec(&self) -> GridSpec {
        self.grid.spec()
    }

    pub fn params(&self) -> FractionalParams {
        self.params.params()
    }

    /// Checks every invariant and fills derived defaults.
    pub fn validate(&mut self) -> Result<(), ConfigError> {
        self.grid.fill();
        self.spec().validate().map_err(|e| invalid("grid", strip(e)))?;
        self.params().validate().map_err(|e| invalid("params", strip(e)))?;
        self.solver.validate().map_err(|e| invalid("solver", strip(e)))?;
        if !(self.quadrature_tol > 0.0 && self.quadrature_tol < 1e-2) {
            return Err(invalid("quadrature_tol", "must lie in (0, 0.01)"));
        }
        match &self.datum {
            Some(d) => {
                d.validate().map_err(|e| invalid("datum", strip(e)))?;
                if d.dimension != self.grid.dimension {
                    return Err(invalid(
                        "datum.dimension",
                        format!("must equal grid.dimension = {}", self.grid.dimension),
                    ));
                }
            }
            None if self.experiment.needs_datum() => {
                return Err(invalid("datum", format!("required by experiment {}", self.experiment)));
            }
            None => {}
        }
        self.validate_options()
    }

    fn validate_options(&self) -> Result<(), ConfigError> {
        let o = &self.options;
        let n = self.grid.dimension;
        let positive = |path: &str, v: &[f64]| {
            if v.iter().all(|x| *x > 0.0 && x.is_finite()) {
                Ok(())
            } else {
                Err(invalid(path, "entries must be positive and finite"))
            }
        };
        positive("options.radii", &o.radii)?;
        positive("options.scales", &o.scales)?;
        positive("options.cone_radii", &o.cone_radii)?;
        if !(o.level_ratio > 1.0) {
            return Err(invalid("options.level_ratio", "must exceed 1"));
        }
        if let Some(t) = o.extension_top {
            if !(t > 0.0) {
                return Err(invalid("options.extension_top", "must be positive"));
            }
        }
        if !(o.residual_fraction >= 0.0 && o.residual_fraction < 1.0) {
            return Err(invalid("options.residual_fraction", "must lie in [0, 1)"));
        }
        if !(o.inner_radius > 0.0) {
            return Err(invalid("options.inner_radius", "must be positive"));
        }
        if !(o.blowup_radius > 0.0) {
            return Err(invalid("options.blowup_radius", "must be positive"));
        }
        match self.experiment {
            Experiment::Oracle | Experiment::Comparison | Experiment::Plateau | Experiment::EnergyBound
                if o.instances == 0 =>
            {
                Err(invalid("options.instances", "must be at least 1"))
            }
            Experiment::Oracle if n != 1 => Err(invalid("grid.dimension", "oracle runs in one dimension")),
            Experiment::Plateau | Experiment::Dyda | Experiment::WeissScan if n != 1 => {
                Err(invalid("grid.dimension", format!("{} runs in one dimension", self.experiment)))
            }
            Experiment::Cone2d if n != 2 => Err(invalid("grid.dimension", "cone2d runs in two dimensions")),
            Experiment::Comparison if o.thresholds.is_empty() => {
                Err(invalid("options.thresholds", "must not be empty"))
            }
            Experiment::Dyda if o.refinements.len() < 2 || o.refinements.iter().any(|&m| m < 4) => {
                Err(invalid("options.refinements", "needs at least two entries of at least 4 cells"))
            }
            Experiment::Dyda if !(o.window[0] < o.window[1]) => {
                Err(invalid("options.window", "lower end must be below the upper end"))
            }
            Experiment::Cone2d if o.cone_radii.is_empty() => Err(invalid("options.cone_radii", "must not be empty")),
            Experiment::Blowup if o.scales.is_empty() => Err(invalid("options.scales", "must not be empty")),
            Experiment::WeissScan | Experiment::Blowup => match &self.datum {
                Some(ExteriorDatum { kind: DatumKind::Tabulated { .. }, .. }) => {
                    Err(invalid("datum.kind", "extensions need an analytic datum"))
                }
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

// Core errors carry a category prefix; the field path already says where.
fn strip(e: fracfree_core::Error) -> String {
    let s = e.to_string();
    match s.split_once(": ") {
        Some((head, rest)) if !head.contains(' ') || head.starts_with("invalid") => rest.to_string(),
        _ => s,
    }
}

/// Parses a JSON document, rejecting unknown keys and filling defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    match value.get("experiment") {
        Some(serde_json::Value::String(name)) => {
            name.parse::<Experiment>()?;
        }
        Some(_) => return Err(invalid("experiment", "must be a string")),
        None => return Err(invalid("experiment", format!("missing; valid names: {}", Experiment::valid_names()))),
    }
    let mut unknown = Vec::new();
    let mut cfg: ExperimentConfig = serde_ignored::deserialize(value, |path| unknown.push(path.to_string()))
        .map_err(|e| ConfigError::Parse(e.to_string()))?;
    if !unknown.is_empty() {
        return Err(ConfigError::UnknownKeys(unknown));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and validates a config file.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

/// Fully defaulted config for `experiment`, as written to the schema file.
pub fn default_config(experiment: Experiment) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { experiment, ..Default::default() };
    if experiment.needs_datum() {
        cfg.datum = Some(ExteriorDatum::indicator_halfspace(1, [1.0, 0.0], 0.0));
    }
    if experiment == Experiment::Cone2d {
        cfg.grid = GridConfig { dimension: 2, half_width: 24.0, cells_per_side: 48, ..Default::default() };
    }
    cfg.grid.fill();
    cfg
}

/// Defaults of every experiment, keyed by name.
pub fn defaults_document() -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for e in Experiment::ALL {
        map.insert(e.name().to_string(), serde_json::to_value(default_config(e)).expect("config serializes"));
    }
    serde_json::Value::Object(map)
}
