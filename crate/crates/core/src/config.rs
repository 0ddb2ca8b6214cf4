//! Run configuration: a TOML document with `geometry`, `mode` and `study`
//! sections. Every field has a default, unknown keys are rejected, and
//! command-line overrides are applied as `section.key = value` paths before
//! the document is typed.
//!
//! ```toml
//! command = "efficiency"
//! output = "results"
//!
//! [geometry]
//! N = 10
//! d = 0.6
//!
//! [mode]
//! w0 = 1.5
//! optimize_waist = true
//!
//! [study]
//! seed = 1234
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::Contraction;
use crate::error::{Error, Result};
use crate::greens::Model;

/// Default Monte Carlo seed; fixed so unconfigured runs are reproducible.
pub const DEFAULT_SEED: u64 = 20_170_301;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    #[default]
    Efficiency,
    ScanWaist,
    OptimalWaist,
    Holes,
    Disorder,
    FiniteTime,
    Isotropic,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Efficiency => "efficiency",
            Command::ScanWaist => "scan-waist",
            Command::OptimalWaist => "optimal-waist",
            Command::Holes => "holes",
            Command::Disorder => "disorder",
            Command::FiniteTime => "finite-time",
            Command::Isotropic => "isotropic",
            Command::Validate => "validate",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        toml::Value::String(s.to_string())
            .try_into()
            .map_err(|_| Error::config("command", format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Atoms per side of the square array.
    #[serde(rename = "N")]
    pub n: usize,
    /// Lattice constant in wavelengths.
    pub d: f64,
    pub model: Model,
    /// Lattice sites to leave empty.
    pub holes: Vec<usize>,
    /// Standard deviation of in-plane position disorder, in wavelengths.
    pub sigma: f64,
    pub disorder_seed: u64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            n: 10,
            d: 0.6,
            model: Model::TwoLevel,
            holes: Vec::new(),
            sigma: 0.0,
            disorder_seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeConfig {
    /// Beam waist in wavelengths.
    pub w0: f64,
    pub two_sided: bool,
    /// Replace `w0` by the waist that minimizes the error of the perfect array.
    pub optimize_waist: bool,
    pub contraction: Contraction,
    /// Relative quadrature tolerance.
    pub tolerance: f64,
}

impl Default for ModeConfig {
    fn default() -> Self {
        ModeConfig {
            w0: 1.5,
            two_sided: true,
            optimize_waist: false,
            contraction: Contraction::Full,
            tolerance: crate::detection::DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub seed: u64,
    pub samples: usize,
    /// Waists for `scan-waist`; empty picks a range from the array size.
    pub w0_list: Vec<f64>,
    /// Array sizes for `optimal-waist`, `disorder` and `isotropic`; empty
    /// uses `geometry.N` (`[6, 10]` for `isotropic`).
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    /// Hole counts for `holes`; empty means `1..=min(20, N^2 / 5)`.
    pub hole_counts: Vec<usize>,
    /// Disorder strengths in units of `d`.
    pub sigma_over_d: Vec<f64>,
    /// Detection window for `finite-time`, in units of the decay time.
    #[serde(rename = "Td")]
    pub t_d: f64,
    /// Additional windows written to the `finite-time` curve.
    #[serde(rename = "Td_list")]
    pub t_d_list: Vec<f64>,
    /// Fit window of the error model: clipping below this share of the error.
    pub clip_fraction: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            seed: DEFAULT_SEED,
            samples: 100,
            w0_list: Vec::new(),
            n_list: Vec::new(),
            hole_counts: Vec::new(),
            sigma_over_d: vec![0.01, 0.02, 0.03, 0.05, 0.07, 0.1],
            t_d: 10.0,
            t_d_list: vec![0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 50.0],
            clip_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    /// Directory receiving CSV and JSON artifacts.
    pub output: PathBuf,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    pub geometry: GeometryConfig,
    pub mode: ModeConfig,
    pub study: StudyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Efficiency,
            output: PathBuf::from("results"),
            workers: 0,
            geometry: GeometryConfig::default(),
            mode: ModeConfig::default(),
            study: StudyConfig::default(),
        }
    }
}

/// Parses an override value as TOML, falling back to a bare string.
pub fn parse_value(text: &str) -> toml::Value {
    let wrapped = format!("v = {text}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.to_string())),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::config(path, "empty override path"))?;
    let mut node = table;
    for part in parts {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(path, format!("`{part}` is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Builds a configuration from TOML text plus `(path, value)` overrides,
    /// which take precedence over the text.
    pub fn from_toml(text: &str, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        for (path, value) in overrides {
            set_path(&mut table, path, value.clone())?;
        }
        let config: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads an optional config file and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::config(p.display().to_string(), format!("cannot read config: {e}")))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Checks every constraint, reporting the first offending path.
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        let m = &self.mode;
        let s = &self.study;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if g.n == 0 {
            return Err(Error::config("geometry.N", "must be at least 1"));
        }
        if !positive(g.d) {
            return Err(Error::config("geometry.d", "must be positive"));
        }
        if !(g.sigma >= 0.0 && g.sigma.is_finite()) {
            return Err(Error::config("geometry.sigma", "must be non-negative"));
        }
        if let Some(h) = g.holes.iter().find(|&&h| h >= g.n * g.n) {
            return Err(Error::config("geometry.holes", format!("site {h} is outside the array")));
        }
        if !positive(m.w0) {
            return Err(Error::config("mode.w0", "must be positive"));
        }
        if !(m.tolerance > 0.0 && m.tolerance <= 1e-6) {
            return Err(Error::config("mode.tolerance", "must lie in (0, 1e-6]"));
        }
        if s.samples == 0 {
            return Err(Error::config("study.samples", "must be at least 1"));
        }
        if !positive(s.t_d) {
            return Err(Error::config("study.Td", "must be positive"));
        }
        if !(s.clip_fraction > 0.0 && s.clip_fraction <= 1.0) {
            return Err(Error::config("study.clip_fraction", "must lie in (0, 1]"));
        }
        let increasing = |v: &[f64]| v.iter().all(|x| positive(*x)) && v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&s.w0_list) {
            return Err(Error::config("study.w0_list", "must be positive and strictly increasing"));
        }
        if !increasing(&s.sigma_over_d) {
            return Err(Error::config("study.sigma_over_d", "must be positive and strictly increasing"));
        }
        if !increasing(&s.t_d_list) {
            return Err(Error::config("study.Td_list", "must be positive and strictly increasing"));
        }
        if s.n_list.contains(&0) {
            return Err(Error::config("study.N_list", "sizes must be at least 1"));
        }
        Ok(())
    }
}
