use serde::Serialize;
use serde_json::json;

use super::waist::optimal_waist;
use super::{StudyOutput, StudySettings, Table};
use crate::error::Result;
use crate::greens::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsotropicPoint {
    pub n: usize,
    pub error_two_level: f64,
    pub error_isotropic: f64,
    /// `(error_iso - error_tl) / error_tl`.
    pub relative_increase: f64,
    pub w0_two_level: f64,
    pub w0_isotropic: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IsotropicComparison {
    pub d: f64,
    pub settings: StudySettings,
    pub points: Vec<IsotropicPoint>,
}

/// Optimal errors and waists of two-level and isotropic atoms side by side.
/// The model in `settings` is ignored.
pub fn isotropic_comparison(n_list: &[usize], d: f64, settings: &StudySettings) -> Result<IsotropicComparison> {
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let tl = optimal_waist(n, d, &settings.with_model(Model::TwoLevel))?;
        let iso = optimal_waist(n, d, &settings.with_model(Model::Isotropic))?;
        points.push(IsotropicPoint {
            n,
            error_two_level: tl.error,
            error_isotropic: iso.error,
            relative_increase: (iso.error - tl.error) / tl.error,
            w0_two_level: tl.w0,
            w0_isotropic: iso.w0,
        });
    }
    Ok(IsotropicComparison {
        d,
        settings: *settings,
        points,
    })
}

impl StudyOutput for IsotropicComparison {
    fn name(&self) -> &'static str {
        "isotropic"
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&[
            "N",
            "error_two_level",
            "error_isotropic",
            "relative_increase",
            "w0_two_level",
            "w0_isotropic",
        ]);
        for p in &self.points {
            t.push(vec![
                p.n as f64,
                p.error_two_level,
                p.error_isotropic,
                p.relative_increase,
                p.w0_two_level,
                p.w0_isotropic,
            ]);
        }
        t
    }

    fn summary(&self) -> serde_json::Value {
        json!({ "d": self.d, "settings": self.settings })
    }
}
