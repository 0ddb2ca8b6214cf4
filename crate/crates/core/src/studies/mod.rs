//! Study drivers: waist scans and the two-term error model, optimal waists and
//! their scaling with array size, hole and position-disorder Monte Carlo, and
//! the two-level versus isotropic comparison.
//!
//! Every driver returns a typed result that converts into a [`Table`] for CSV
//! output and a JSON summary.

mod defects;
mod isotropic;
mod waist;

use std::io::Write;

use serde::Serialize;

use crate::detection::{Contraction, DetectionMode, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::greens::Model;

pub use defects::{hole_study, position_disorder_study, DisorderPoint, DisorderSample, DisorderStudy, HoleSample, HoleStudy};
pub use isotropic::{isotropic_comparison, IsotropicComparison, IsotropicPoint};
pub use waist::{
    clipping_term, fit_error_model, optimal_waist, power_law_slope, scaling_study, scan_waist, FitWindow,
    OptimalWaist, ScalingPoint, ScalingStudy, WaistPoint, WaistScan, SEED_C,
};

/// Physical and numerical settings shared by all studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudySettings {
    pub model: Model,
    pub contraction: Contraction,
    pub two_sided: bool,
    /// Relative quadrature tolerance of the detection mode.
    pub tolerance: f64,
}

impl Default for StudySettings {
    fn default() -> Self {
        StudySettings {
            model: Model::TwoLevel,
            contraction: Contraction::Full,
            two_sided: true,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

impl StudySettings {
    pub fn with_model(self, model: Model) -> Self {
        StudySettings { model, ..self }
    }

    /// Detection mode of waist `w0` with these settings.
    pub fn mode(&self, w0: f64) -> Result<DetectionMode> {
        Ok(DetectionMode::new(w0)?.with_two_sided(self.two_sided).with_tolerance(self.tolerance)?)
    }
}

/// Runs the dense linear algebra of each task single-threaded so that study
/// outputs do not depend on the worker count; parallelism comes from the
/// independent tasks instead.
pub(crate) fn sequential_linear_algebra() {
    faer::set_global_parallelism(faer::Par::Seq);
}

/// A fitted model with parameter standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: String,
    pub parameters: Vec<FitParameter>,
    /// Inclusive axis range of the points that entered the fit.
    pub window: (f64, f64),
    pub points: usize,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.value)
    }
}

/// Weighted least squares `y = c x` through the origin with weights `1/s^2`.
/// Returns `(c, std_error, weighted residual norm)`.
pub(crate) fn fit_through_origin(x: &[f64], y: &[f64], s: &[f64]) -> (f64, f64, f64) {
    let sxx: f64 = x.iter().zip(s).map(|(x, s)| x * x / (s * s)).sum();
    let sxy: f64 = x.iter().zip(y).zip(s).map(|((x, y), s)| x * y / (s * s)).sum();
    let c = sxy / sxx;
    let rss: f64 = x.iter().zip(y).zip(s).map(|((x, y), s)| ((y - c * x) / s).powi(2)).sum();
    let dof = (x.len().max(2) - 1) as f64;
    (c, (rss / dof / sxx).sqrt(), rss.sqrt())
}

/// Ordinary least squares `y = a + b x`. Returns `(a, b, stderr_b, residual norm)`.
pub(crate) fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let n = x.len();
    if n < 2 {
        return Err(Error::FitWindow(format!("line fit needs two points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::FitWindow("line fit needs distinct abscissae".into()));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = x.iter().zip(y).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    let stderr = if n > 2 { (rss / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok((a, b, stderr, rss.sqrt()))
}

/// Column-labelled numeric table written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// CSV with an optional `# ` comment header line. Numbers use Rust's
    /// shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, mut w: W, header: Option<&str>) -> Result<()> {
        if let Some(h) = header {
            for line in h.lines() {
                writeln!(w, "# {line}")?;
            }
        }
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// A study result that can be persisted.
pub trait StudyOutput {
    /// Short study name used in file names.
    fn name(&self) -> &'static str;
    fn table(&self) -> Table;
    fn summary(&self) -> serde_json::Value;
}
