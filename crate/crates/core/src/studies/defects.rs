use num_complex::Complex64;
use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::waist::optimal_waist;
use super::{fit_line, fit_through_origin, sequential_linear_algebra, FitParameter, FitResult, StudyOutput, StudySettings, Table};
use crate::detection::sample_mode;
use crate::error::{Error, Result};
use crate::geometry::{apply_position_disorder, build_square_array, remove_holes};
use crate::greens::interaction_matrix;
use crate::retrieval::{efficiency_matrix, RetrievalProblem};
use crate::spectral::eigendecompose;

/// Largest hole fraction accepted by [`hole_study`].
pub const MAX_HOLE_FRACTION: f64 = 0.2;

fn task_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoleSample {
    pub holes: usize,
    pub sample: usize,
    /// Removed lattice sites, sorted.
    pub sites: Vec<usize>,
    /// Share of the detection-mode intensity on the removed sites.
    pub intensity_fraction: f64,
    pub eta: f64,
    /// `1 - eta_def / eta`.
    pub relative_loss: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HoleStudy {
    pub n: usize,
    pub d: f64,
    pub w0: f64,
    pub seed: u64,
    pub settings: StudySettings,
    /// Efficiency of the perfect array.
    pub eta: f64,
    pub samples: Vec<HoleSample>,
    /// Regression `relative_loss = alpha * intensity_fraction` through the origin.
    pub alpha: FitResult,
}

/// Random hole configurations at fixed waist, with the spin wave re-optimized
/// for each configuration. Sample `k` with `h` holes draws its sites from
/// ChaCha8 seeded with `seed` on stream `(h << 32) | k`.
pub fn hole_study(
    n: usize,
    d: f64,
    w0: f64,
    hole_counts: &[usize],
    samples: usize,
    seed: u64,
    settings: &StudySettings,
) -> Result<HoleStudy> {
    let sites = n * n;
    if let Some(&h) = hole_counts.iter().find(|&&h| h as f64 > MAX_HOLE_FRACTION * sites as f64) {
        return Err(Error::invalid(format!(
            "{h} holes exceed {}% of the {sites} sites",
            MAX_HOLE_FRACTION * 100.0
        )));
    }
    if samples == 0 {
        return Err(Error::invalid("hole study needs at least one sample"));
    }
    sequential_linear_algebra();
    let lattice = build_square_array(n, d)?;
    let mode = settings.mode(w0)?;
    let perfect = RetrievalProblem::new(&lattice, settings.model, &mode, settings.contraction)?;
    let (eta, _) = perfect.form.optimize()?;
    let intensity: Vec<f64> = perfect
        .samples
        .fields()
        .iter()
        .map(|e| e.iter().map(|c| c.norm_sqr()).sum())
        .collect();
    let total: f64 = intensity.iter().sum();

    let tasks: Vec<(usize, usize)> = hole_counts
        .iter()
        .flat_map(|&h| (0..samples).map(move |k| (h, k)))
        .collect();
    let results = tasks
        .par_iter()
        .map(|&(h, k)| {
            if h == 0 {
                return Ok(HoleSample {
                    holes: 0,
                    sample: k,
                    sites: Vec::new(),
                    intensity_fraction: 0.0,
                    eta,
                    relative_loss: 0.0,
                });
            }
            let mut rng = task_rng(seed, ((h as u64) << 32) | k as u64);
            let mut removed = rand::seq::index::sample(&mut rng, sites, h).into_vec();
            removed.sort_unstable();
            let g = remove_holes(&lattice, &removed)?;
            let keep: Vec<usize> = (0..sites).filter(|s| removed.binary_search(s).is_err()).collect();
            let local = perfect.samples.subset(&keep);
            let spectrum = eigendecompose(&interaction_matrix(&g, settings.model)?)?;
            let (eta_def, _) = efficiency_matrix(&spectrum, &local, settings.contraction)?.optimize()?;
            let fraction = removed.iter().map(|&s| intensity[s]).sum::<f64>() / total;
            Ok(HoleSample {
                holes: h,
                sample: k,
                sites: removed,
                intensity_fraction: fraction,
                eta: eta_def,
                relative_loss: 1.0 - eta_def / eta,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let pooled: Vec<&HoleSample> = results.iter().filter(|s| s.holes > 0).collect();
    if pooled.is_empty() {
        return Err(Error::FitWindow("hole regression needs at least one configuration with holes".into()));
    }
    let x: Vec<f64> = pooled.iter().map(|s| s.intensity_fraction).collect();
    let y: Vec<f64> = pooled.iter().map(|s| s.relative_loss).collect();
    let (alpha, stderr, residual) = fit_through_origin(&x, &y, &vec![1.0; x.len()]);
    let counts = pooled.iter().map(|s| s.holes);
    let window = (
        counts.clone().min().unwrap_or(0) as f64,
        counts.max().unwrap_or(0) as f64,
    );
    Ok(HoleStudy {
        n,
        d,
        w0,
        seed,
        settings: *settings,
        eta,
        samples: results,
        alpha: FitResult {
            model: "relative_loss = alpha * intensity_fraction".into(),
            parameters: vec![FitParameter {
                name: "alpha".into(),
                value: alpha,
                std_error: stderr,
            }],
            window,
            points: x.len(),
            residual_norm: residual,
        },
    })
}

impl StudyOutput for HoleStudy {
    fn name(&self) -> &'static str {
        "holes"
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["holes", "sample", "intensity_fraction", "eta", "relative_loss"]);
        for s in &self.samples {
            t.push(vec![s.holes as f64, s.sample as f64, s.intensity_fraction, s.eta, s.relative_loss]);
        }
        t
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "N": self.n,
            "d": self.d,
            "w0": self.w0,
            "seed": self.seed,
            "settings": self.settings,
            "eta": self.eta,
            "alpha": self.alpha,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisorderSample {
    pub n: usize,
    pub sigma: f64,
    pub sample: usize,
    pub disorder_seed: u64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisorderPoint {
    pub n: usize,
    pub sigma: f64,
    /// Optimal efficiency of the perfect array.
    pub eta: f64,
    pub mean_eta: f64,
    /// Mean of `eta - eta_dis` and its standard error.
    pub mean_loss: f64,
    pub std_error: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DisorderStudy {
    pub d: f64,
    pub seed: u64,
    pub settings: StudySettings,
    /// Optimal waist per array size, in the order of the size list.
    pub waists: Vec<(usize, f64)>,
    pub points: Vec<DisorderPoint>,
    pub samples: Vec<DisorderSample>,
}

/// Efficiency loss from Gaussian in-plane position disorder, evaluated with
/// the perfect array's optimal spin wave and waist held fixed. Sample `k` at
/// the `i`-th sigma for size `N` takes its disorder seed from ChaCha8 seeded
/// with `seed` on stream `(N << 48) | (i << 24) | k`.
pub fn position_disorder_study(
    n_list: &[usize],
    d: f64,
    sigma_list: &[f64],
    samples: usize,
    seed: u64,
    settings: &StudySettings,
) -> Result<DisorderStudy> {
    if sigma_list.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) || sigma_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("sigma values must be non-negative and strictly increasing"));
    }
    if samples == 0 {
        return Err(Error::invalid("disorder study needs at least one sample"));
    }
    let mut waists = Vec::new();
    let mut points = Vec::new();
    let mut all = Vec::new();
    for &n in n_list {
        let opt = optimal_waist(n, d, settings)?;
        let mode = settings.mode(opt.w0)?;
        let lattice = build_square_array(n, d)?;
        let spin: Vec<Complex64> = opt.spin_wave.clone();
        let tasks: Vec<(usize, usize)> = (0..sigma_list.len())
            .flat_map(|i| (0..samples).map(move |k| (i, k)))
            .collect();
        let drawn = tasks
            .par_iter()
            .map(|&(i, k)| {
                let sigma = sigma_list[i];
                let stream = ((n as u64) << 48) | ((i as u64) << 24) | k as u64;
                let disorder_seed = task_rng(seed, stream).next_u64();
                let eta = if sigma == 0.0 {
                    opt.eta
                } else {
                    let g = apply_position_disorder(&lattice, sigma, disorder_seed)?;
                    let spectrum = eigendecompose(&interaction_matrix(&g, settings.model)?)?;
                    let local = sample_mode(&mode, &g, settings.model)?;
                    efficiency_matrix(&spectrum, &local, settings.contraction)?.efficiency_of(&spin)?
                };
                Ok(DisorderSample {
                    n,
                    sigma,
                    sample: k,
                    disorder_seed,
                    eta,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, &sigma) in sigma_list.iter().enumerate() {
            let chunk = &drawn[i * samples..(i + 1) * samples];
            let losses: Vec<f64> = chunk.iter().map(|s| opt.eta - s.eta).collect();
            let m = samples as f64;
            let mean = losses.iter().sum::<f64>() / m;
            let var = if samples > 1 {
                losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            points.push(DisorderPoint {
                n,
                sigma,
                eta: opt.eta,
                mean_eta: chunk.iter().map(|s| s.eta).sum::<f64>() / m,
                mean_loss: if sigma == 0.0 { 0.0 } else { mean },
                std_error: (var / m).sqrt(),
                samples,
            });
        }
        waists.push((n, opt.w0));
        all.extend(drawn);
    }
    Ok(DisorderStudy {
        d,
        seed,
        settings: *settings,
        waists,
        points,
        samples: all,
    })
}

impl DisorderStudy {
    /// Log-log slope of the mean loss against sigma for one array size,
    /// restricted to `sigma_lo <= sigma <= sigma_hi` with positive mean loss.
    pub fn loss_exponent(&self, n: usize, sigma_lo: f64, sigma_hi: f64) -> Result<FitResult> {
        let chosen: Vec<&DisorderPoint> = self
            .points
            .iter()
            .filter(|p| p.n == n && p.sigma >= sigma_lo && p.sigma <= sigma_hi && p.sigma > 0.0)
            .collect();
        if chosen.iter().any(|p| !(p.mean_loss > 0.0)) {
            return Err(Error::FitWindow("mean loss is not positive at every sigma in the window".into()));
        }
        let x: Vec<f64> = chosen.iter().map(|p| p.sigma.ln()).collect();
        let y: Vec<f64> = chosen.iter().map(|p| p.mean_loss.ln()).collect();
        let (a, b, stderr, residual) = fit_line(&x, &y)?;
        Ok(FitResult {
            model: "ln(eta - eta_dis) = a + exponent ln sigma".into(),
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
            window: (chosen[0].sigma, chosen[chosen.len() - 1].sigma),
            points: chosen.len(),
            residual_norm: residual,
        })
    }
}

impl StudyOutput for DisorderStudy {
    fn name(&self) -> &'static str {
        "disorder"
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["N", "sigma", "sigma_over_d", "eta", "mean_eta_dis", "mean_loss", "std_error", "samples"]);
        for p in &self.points {
            t.push(vec![
                p.n as f64,
                p.sigma,
                p.sigma / self.d,
                p.eta,
                p.mean_eta,
                p.mean_loss,
                p.std_error,
                p.samples as f64,
            ]);
        }
        t
    }

    fn summary(&self) -> serde_json::Value {
        let exponents: Vec<serde_json::Value> = self
            .waists
            .iter()
            .map(|&(n, w0)| json!({"N": n, "w0": w0, "exponent": self.loss_exponent(n, 0.0, f64::INFINITY).ok()}))
            .collect();
        json!({
            "d": self.d,
            "seed": self.seed,
            "settings": self.settings,
            "sizes": exponents,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_holes_lose_nothing() {
        let s = hole_study(4, 0.6, 0.9, &[0, 1], 3, 5, &StudySettings::default()).unwrap();
        for x in s.samples.iter().filter(|x| x.holes == 0) {
            assert_eq!(x.relative_loss, 0.0);
            assert_eq!(x.eta, s.eta);
        }
        assert_eq!(s.samples.len(), 6);
    }

    #[test]
    fn hole_limit_is_enforced() {
        assert!(hole_study(4, 0.6, 0.9, &[4], 1, 5, &StudySettings::default()).is_err());
    }

    #[test]
    fn hole_draws_are_reproducible() {
        let a = hole_study(5, 0.6, 1.0, &[2], 4, 11, &StudySettings::default()).unwrap();
        let b = hole_study(5, 0.6, 1.0, &[2], 4, 11, &StudySettings::default()).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = hole_study(5, 0.6, 1.0, &[2], 4, 12, &StudySettings::default()).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn zero_sigma_is_lossless() {
        let s = position_disorder_study(&[3], 0.6, &[0.0, 0.01], 3, 9, &StudySettings::default()).unwrap();
        assert_eq!(s.points[0].mean_loss, 0.0);
        assert!(s.points[1].mean_loss.is_finite());
    }
}
