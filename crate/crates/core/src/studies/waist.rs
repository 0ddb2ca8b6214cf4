use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{fit_line, fit_through_origin, sequential_linear_algebra, FitParameter, FitResult, StudyOutput, StudySettings, Table};
use crate::error::{Error, Result};
use crate::geometry::build_square_array;
use crate::greens::interaction_matrix;
use crate::retrieval::RetrievalProblem;
use crate::spectral::{eigendecompose, SpectralDecomposition};
use num_complex::Complex64;

/// Error-model constant used only to seed the optimal-waist search.
pub const SEED_C: f64 = 2.4e-3;

/// Waist tolerance of the golden-section search.
const WAIST_TOLERANCE: f64 = 1e-3;

/// `1 - erf^2(L / (sqrt(2) w0))` for an array of side `L = N d`: the fraction
/// of a paraxial Gaussian's power falling outside the array.
pub fn clipping_term(n: usize, d: f64, w0: f64) -> f64 {
    let x = n as f64 * d / (std::f64::consts::SQRT_2 * w0);
    let c = libm::erfc(x);
    c * (2.0 - c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaistPoint {
    pub w0: f64,
    pub eta: f64,
    pub error: f64,
    pub clipping: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WaistScan {
    pub n: usize,
    pub d: f64,
    pub settings: StudySettings,
    pub points: Vec<WaistPoint>,
}

impl WaistScan {
    /// True when the error has exactly one interior local minimum, or is
    /// monotone over the scanned range.
    pub fn is_unimodal(&self) -> bool {
        let e: Vec<f64> = self.points.iter().map(|p| p.error).collect();
        let turns = e.windows(3).filter(|w| w[1] < w[0] && w[1] < w[2]).count();
        let peaks = e.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count();
        turns <= 1 && peaks == 0
    }
}

fn check_axis(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid(format!("{what} list is empty")));
    }
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("{what} values must be positive")));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!("{what} values must be strictly increasing")));
    }
    Ok(())
}

fn perfect_spectrum(n: usize, d: f64, settings: &StudySettings) -> Result<SpectralDecomposition> {
    let g = build_square_array(n, d)?;
    eigendecompose(&interaction_matrix(&g, settings.model)?)
}

fn solve_at(spectrum: &SpectralDecomposition, n: usize, d: f64, w0: f64, settings: &StudySettings) -> Result<(f64, Vec<Complex64>)> {
    let g = build_square_array(n, d)?;
    let mode = settings.mode(w0)?;
    let problem = RetrievalProblem::with_spectrum(spectrum.clone(), &g, &mode, settings.contraction)?;
    problem.form.optimize()
}

/// Minimum retrieval error of the perfect `n x n` array at each waist.
pub fn scan_waist(n: usize, d: f64, w0_list: &[f64], settings: &StudySettings) -> Result<WaistScan> {
    check_axis(w0_list, "waist")?;
    sequential_linear_algebra();
    let spectrum = perfect_spectrum(n, d, settings)?;
    let points = w0_list
        .par_iter()
        .map(|&w0| {
            let (eta, _) = solve_at(&spectrum, n, d, w0, settings)?;
            Ok(WaistPoint {
                w0,
                eta,
                error: 1.0 - eta,
                clipping: clipping_term(n, d, w0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WaistScan {
        n,
        d,
        settings: *settings,
        points,
    })
}

/// Which scan points enter a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FitWindow {
    /// Points whose clipping term is below this fraction of the error.
    ClippingBelow { fraction: f64 },
    /// Points with `lo <= w0 <= hi`.
    Range { lo: f64, hi: f64 },
    /// Both conditions at once.
    RangeClippingBelow { lo: f64, hi: f64, fraction: f64 },
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow::ClippingBelow { fraction: 0.1 }
    }
}

impl FitWindow {
    fn admits(&self, p: &WaistPoint) -> bool {
        match *self {
            FitWindow::ClippingBelow { fraction } => p.clipping < fraction * p.error,
            FitWindow::Range { lo, hi } => p.w0 >= lo && p.w0 <= hi,
            FitWindow::RangeClippingBelow { lo, hi, fraction } => {
                p.w0 >= lo && p.w0 <= hi && p.clipping < fraction * p.error
            }
        }
    }

    fn select<'a>(&self, scan: &'a WaistScan) -> Result<Vec<&'a WaistPoint>> {
        let chosen: Vec<&WaistPoint> = scan.points.iter().filter(|p| self.admits(p)).collect();
        if chosen.is_empty() {
            return Err(Error::FitWindow(format!("no scan point satisfies {self:?}")));
        }
        Ok(chosen)
    }
}

/// Fits `error = C / w0^4 + clipping` for `C` with the exponent fixed, using
/// residuals relative to the error.
pub fn fit_error_model(scan: &WaistScan, window: FitWindow) -> Result<FitResult> {
    let chosen = window.select(scan)?;
    let x: Vec<f64> = chosen.iter().map(|p| p.w0.powi(-4)).collect();
    let y: Vec<f64> = chosen.iter().map(|p| p.error - p.clipping).collect();
    let s: Vec<f64> = chosen.iter().map(|p| p.error).collect();
    let (c, stderr, residual) = fit_through_origin(&x, &y, &s);
    Ok(FitResult {
        model: "error = C / w0^4 + 1 - erf^2(N d / (sqrt(2) w0))".into(),
        parameters: vec![FitParameter {
            name: "C".into(),
            value: c,
            std_error: stderr,
        }],
        window: (chosen[0].w0, chosen[chosen.len() - 1].w0),
        points: chosen.len(),
        residual_norm: residual,
    })
}

/// Log-log slope of the error against the waist.
pub fn power_law_slope(scan: &WaistScan, window: FitWindow) -> Result<FitResult> {
    let chosen = window.select(scan)?;
    let x: Vec<f64> = chosen.iter().map(|p| p.w0.ln()).collect();
    let y: Vec<f64> = chosen.iter().map(|p| p.error.ln()).collect();
    let (a, b, stderr, residual) = fit_line(&x, &y)?;
    Ok(FitResult {
        model: "ln error = a + slope ln w0".into(),
        parameters: vec![
            FitParameter {
                name: "slope".into(),
                value: b,
                std_error: stderr,
            },
            FitParameter {
                name: "a".into(),
                value: a,
                std_error: f64::NAN,
            },
        ],
        window: (chosen[0].w0, chosen[chosen.len() - 1].w0),
        points: chosen.len(),
        residual_norm: residual,
    })
}

impl StudyOutput for WaistScan {
    fn name(&self) -> &'static str {
        "scan-waist"
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["w0", "eta", "error", "clipping", "area_over_w0_sq"]);
        let area = (self.n as f64 * self.d).powi(2);
        for p in &self.points {
            t.push(vec![p.w0, p.eta, p.error, p.clipping, area / (p.w0 * p.w0)]);
        }
        t
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "N": self.n,
            "d": self.d,
            "settings": self.settings,
            "unimodal": self.is_unimodal(),
            "error_model": fit_error_model(self, FitWindow::default()).ok(),
            "power_law": power_law_slope(self, FitWindow::default()).ok(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimalWaist {
    pub n: usize,
    pub d: f64,
    pub w0: f64,
    pub eta: f64,
    pub error: f64,
    /// Minimizer of the seed error model that centred the bracket.
    pub seed_w0: f64,
    /// Set when the bracket was not unimodal and a grid scan was used instead.
    pub grid_fallback: bool,
    pub evaluations: usize,
    #[serde(skip)]
    pub spin_wave: Vec<Complex64>,
    pub settings: StudySettings,
}

/// Minimizer of `SEED_C / w^4 + clipping(w)` on a fine logarithmic grid.
fn seed_waist(n: usize, d: f64) -> f64 {
    let side = n as f64 * d;
    let (lo, hi) = (0.05 * side.max(1.0), 3.0 * side.max(1.0));
    (0..=2000)
        .map(|k| lo * (hi / lo).powf(k as f64 / 2000.0))
        .map(|w| (w, SEED_C / w.powi(4) + clipping_term(n, d, w)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(w, _)| w)
        .expect("grid is non-empty")
}

/// Waist minimizing the retrieval error of the perfect `n x n` array.
pub fn optimal_waist(n: usize, d: f64, settings: &StudySettings) -> Result<OptimalWaist> {
    if n < 2 {
        return Err(Error::invalid("optimal waist search needs N >= 2"));
    }
    sequential_linear_algebra();
    let spectrum = perfect_spectrum(n, d, settings)?;
    let mut evaluations = 0usize;
    let mut eval = |w: f64| -> Result<f64> {
        evaluations += 1;
        solve_at(&spectrum, n, d, w, settings).map(|(eta, _)| 1.0 - eta)
    };
    let seed = seed_waist(n, d);
    let phi = 0.5 * (5f64.sqrt() - 1.0);

    let (mut a, mut b) = (0.7 * seed, 1.4 * seed);
    let mut c1 = b - phi * (b - a);
    let mut c2 = a + phi * (b - a);
    let (mut fc1, mut fc2) = (eval(c1)?, eval(c2)?);
    let (fa, fb) = (eval(a)?, eval(b)?);
    let bracketed = fc1.min(fc2) < fa.min(fb);

    let (w_best, grid_fallback) = if bracketed {
        while b - a > WAIST_TOLERANCE {
            if fc1 <= fc2 {
                b = c2;
                c2 = c1;
                fc2 = fc1;
                c1 = b - phi * (b - a);
                fc1 = eval(c1)?;
            } else {
                a = c1;
                c1 = c2;
                fc1 = fc2;
                c2 = a + phi * (b - a);
                fc2 = eval(c2)?;
            }
        }
        (0.5 * (a + b), false)
    } else {
        let (lo, hi) = (0.25 * seed, 4.0 * seed);
        let mut best = (f64::NAN, f64::INFINITY);
        for k in 0..=400 {
            let w = lo * (hi / lo).powf(k as f64 / 400.0);
            let f = eval(w)?;
            if f < best.1 {
                best = (w, f);
            }
        }
        (best.0, true)
    };
    let (eta, spin_wave) = solve_at(&spectrum, n, d, w_best, settings)?;
    Ok(OptimalWaist {
        n,
        d,
        w0: w_best,
        eta,
        error: 1.0 - eta,
        seed_w0: seed,
        grid_fallback,
        evaluations: evaluations + 1,
        spin_wave,
        settings: *settings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub w0: f64,
    pub error: f64,
    /// `(ln N_a)^2 / (4 N_a^2)` with `N_a = N^2`.
    pub leading_term: f64,
    pub grid_fallback: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingStudy {
    pub d: f64,
    pub settings: StudySettings,
    pub points: Vec<ScalingPoint>,
}

/// Optimal waist and error for each array size.
pub fn scaling_study(n_list: &[usize], d: f64, settings: &StudySettings) -> Result<ScalingStudy> {
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let opt = optimal_waist(n, d, settings)?;
        let na = (n * n) as f64;
        points.push(ScalingPoint {
            n,
            w0: opt.w0,
            error: opt.error,
            leading_term: na.ln().powi(2) / (4.0 * na * na),
            grid_fallback: opt.grid_fallback,
        });
    }
    Ok(ScalingStudy {
        d,
        settings: *settings,
        points,
    })
}

impl ScalingStudy {
    /// Log-log slope of the optimal error against the atom number.
    pub fn exponent(&self) -> Result<FitResult> {
        let x: Vec<f64> = self.points.iter().map(|p| ((p.n * p.n) as f64).ln()).collect();
        let y: Vec<f64> = self.points.iter().map(|p| p.error.ln()).collect();
        let (a, b, stderr, residual) = fit_line(&x, &y)?;
        Ok(FitResult {
            model: "ln error_opt = a + exponent ln N_a".into(),
            parameters: vec![
                FitParameter {
                    name: "exponent".into(),
                    value: b,
                    std_error: stderr,
                },
                FitParameter {
                    name: "a".into(),
                    value: a,
                    std_error: f64::NAN,
                },
            ],
            window: (x[0].exp(), x[x.len() - 1].exp()),
            points: x.len(),
            residual_norm: residual,
        })
    }
}

impl StudyOutput for ScalingStudy {
    fn name(&self) -> &'static str {
        "optimal-waist"
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["N", "w0", "error", "leading_term", "w0_over_side", "grid_fallback"]);
        for p in &self.points {
            t.push(vec![
                p.n as f64,
                p.w0,
                p.error,
                p.leading_term,
                p.w0 / (p.n as f64 * self.d),
                if p.grid_fallback { 1.0 } else { 0.0 },
            ]);
        }
        t
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "d": self.d,
            "settings": self.settings,
            "exponent": self.exponent().ok(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(c: f64, n: usize, d: f64) -> WaistScan {
        let points = (0..30)
            .map(|k| {
                let w0 = 0.8 + 0.1 * k as f64;
                let clipping = clipping_term(n, d, w0);
                let error = c / w0.powi(4) + clipping;
                WaistPoint {
                    w0,
                    eta: 1.0 - error,
                    error,
                    clipping,
                }
            })
            .collect();
        WaistScan {
            n,
            d,
            settings: StudySettings::default(),
            points,
        }
    }

    #[test]
    fn clipping_term_limits() {
        assert!(clipping_term(10, 0.6, 0.01) < 1e-300);
        assert!((clipping_term(10, 0.6, 1e6) - 1.0).abs() < 1e-5);
        let x: f64 = 6.0 / (std::f64::consts::SQRT_2 * 3.0);
        let direct = 1.0 - libm::erf(x).powi(2);
        assert!((clipping_term(10, 0.6, 3.0) - direct).abs() < 1e-15);
    }

    #[test]
    fn synthetic_model_recovers_constant() {
        let scan = synthetic(2.4e-3, 10, 0.6);
        let fit = fit_error_model(&scan, FitWindow::default()).unwrap();
        let c = fit.parameter("C").unwrap();
        assert!((c - 2.4e-3).abs() < 1e-6 * 2.4e-3, "{c}");
        assert!(fit.residual_norm < 1e-10);
    }

    #[test]
    fn empty_window_is_an_error() {
        let scan = synthetic(2.4e-3, 10, 0.6);
        let r = fit_error_model(&scan, FitWindow::Range { lo: 100.0, hi: 200.0 });
        assert!(matches!(r, Err(Error::FitWindow(_))));
    }

    #[test]
    fn pure_power_law_slope() {
        let mut scan = synthetic(1e-3, 50, 0.6);
        for p in &mut scan.points {
            p.error = 1e-3 / p.w0.powi(4);
            p.clipping = 0.0;
        }
        let fit = power_law_slope(&scan, FitWindow::default()).unwrap();
        assert!((fit.parameter("slope").unwrap() + 4.0).abs() < 1e-12);
    }

    #[test]
    fn seed_waist_grows_with_array() {
        let a = seed_waist(6, 0.6);
        let b = seed_waist(12, 0.6);
        assert!(b > a && a > 0.0);
        assert!(b < 12.0 * 0.6);
    }

    #[test]
    fn scan_rejects_unsorted_axis() {
        assert!(scan_waist(2, 0.6, &[1.0, 0.9], &StudySettings::default()).is_err());
        assert!(scan_waist(2, 0.6, &[], &StudySettings::default()).is_err());
    }

    #[test]
    fn single_atom_error_grows_with_waist() {
        let w: Vec<f64> = (0..8).map(|k| 1.0 + 0.5 * k as f64).collect();
        let scan = scan_waist(1, 0.6, &w, &StudySettings::default()).unwrap();
        for pair in scan.points.windows(2) {
            assert!(pair[1].error > pair[0].error);
        }
    }
}
