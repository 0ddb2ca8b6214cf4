//! Executes a [`RunConfig`]: runs the selected computation, writes its CSV
//! table and JSON sidecar, and returns a one-line summary.
//!
//! Artifacts are named `{command}_{N}_{d}_{timestamp}.{csv,json}`. The CSV
//! starts with a `# config:` line holding the resolved configuration as JSON,
//! and its contents depend only on the configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde_json::json;

use crate::config::{Command, RunConfig};
use crate::detection::{validate_projection, DetectionMode};
use crate::dynamics::propagate_spectral;
use crate::error::{Error, Result};
use crate::geometry::{apply_position_disorder, build_square_array, remove_holes, Geometry};
use crate::greens::{interaction_matrix, Model};
use crate::retrieval::RetrievalProblem;
use crate::spectral::{eigendecompose_unchecked, BILINEAR_TOLERANCE, COMPLETENESS_TOLERANCE, TRACE_TOLERANCE};
use crate::studies::{
    hole_study, isotropic_comparison, optimal_waist, position_disorder_study, scaling_study, scan_waist, FitWindow,
    StudyOutput, StudySettings, Table,
};

/// Outcome of a run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: String,
    pub files: Vec<PathBuf>,
    /// False when a `validate` check failed.
    pub passed: bool,
}

/// Runs `config` on a pool of `config.workers` threads.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    if config.workers == 0 {
        return execute(config);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    pool.install(|| execute(config))
}

fn settings(config: &RunConfig) -> StudySettings {
    StudySettings {
        model: config.geometry.model,
        contraction: config.mode.contraction,
        two_sided: config.mode.two_sided,
        tolerance: config.mode.tolerance,
    }
}

/// Lattice with the configured holes and disorder.
pub fn configured_geometry(config: &RunConfig) -> Result<Geometry> {
    let g = &config.geometry;
    let mut geometry = remove_holes(&build_square_array(g.n, g.d)?, &g.holes)?;
    if g.sigma > 0.0 {
        geometry = apply_position_disorder(&geometry, g.sigma, g.disorder_seed)?;
    }
    Ok(geometry)
}

fn waist(config: &RunConfig) -> Result<f64> {
    if config.mode.optimize_waist {
        Ok(optimal_waist(config.geometry.n, config.geometry.d, &settings(config))?.w0)
    } else {
        Ok(config.mode.w0)
    }
}

fn sizes(config: &RunConfig, fallback: &[usize]) -> Vec<usize> {
    if !config.study.n_list.is_empty() {
        config.study.n_list.clone()
    } else if fallback.is_empty() {
        vec![config.geometry.n]
    } else {
        fallback.to_vec()
    }
}

struct Artifact {
    table: Table,
    summary: serde_json::Value,
    label: String,
    extra: Vec<(String, Table)>,
}

fn execute(config: &RunConfig) -> Result<RunReport> {
    let started = Instant::now();
    let (line, artifact, passed) = match config.command {
        Command::Efficiency => efficiency(config)?,
        Command::ScanWaist => scan(config)?,
        Command::OptimalWaist => optimal(config)?,
        Command::Holes => holes(config)?,
        Command::Disorder => disorder(config)?,
        Command::FiniteTime => finite_time(config)?,
        Command::Isotropic => isotropic(config)?,
        Command::Validate => validate(config)?,
    };
    let files = write_artifacts(config, &artifact, started.elapsed().as_secs_f64())?;
    let listing: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    Ok(RunReport {
        summary: format!("{line} [{}]", listing.join(", ")),
        files,
        passed,
    })
}

fn write_artifacts(config: &RunConfig, artifact: &Artifact, wall: f64) -> Result<Vec<PathBuf>> {
    let dir = &config.output;
    fs::create_dir_all(dir)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let stem = unique_stem(dir, &format!("{}_{}_{}_{}", config.command.name(), artifact.label, config.geometry.d, stamp));
    let header = format!("config: {}", serde_json::to_string(config)?);
    let mut files = Vec::new();

    let csv = dir.join(format!("{stem}.csv"));
    artifact.table.write_csv(fs::File::create(&csv)?, Some(&header))?;
    files.push(csv);
    for (suffix, table) in &artifact.extra {
        let path = dir.join(format!("{stem}_{suffix}.csv"));
        table.write_csv(fs::File::create(&path)?, Some(&header))?;
        files.push(path);
    }
    let sidecar = json!({
        "config": config,
        "summary": artifact.summary,
        "seed": config.study.seed,
        "tolerance": config.mode.tolerance,
        "timestamp": stamp,
        "wall_time_s": wall,
        "files": files.iter().map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect::<Vec<_>>(),
    });
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&json_path, serde_json::to_string_pretty(&sidecar)? + "\n")?;
    files.push(json_path);
    Ok(files)
}

fn unique_stem(dir: &Path, stem: &str) -> String {
    let mut candidate = stem.to_string();
    let mut k = 1;
    while dir.join(format!("{candidate}.csv")).exists() || dir.join(format!("{candidate}.json")).exists() {
        candidate = format!("{stem}-{k}");
        k += 1;
    }
    candidate
}

type Outcome = (String, Artifact, bool);

fn efficiency(config: &RunConfig) -> Result<Outcome> {
    let geometry = configured_geometry(config)?;
    let w0 = waist(config)?;
    let s = settings(config);
    let problem = RetrievalProblem::new(&geometry, s.model, &s.mode(w0)?, s.contraction)?;
    let solution = problem.solve(w0)?;
    let mut table = Table::new(&["site", "x", "y", "re_s", "im_s", "abs_s"]);
    for (i, z) in solution.spin_wave.iter().enumerate() {
        let p = geometry.positions()[i];
        table.push(vec![geometry.site_of(i) as f64, p[0], p[1], z.re, z.im, z.norm()]);
    }
    let line = format!(
        "eta = {:.10}, error = {:.6e} (N = {}, d = {}, w0 = {:.6})",
        solution.efficiency,
        solution.error(),
        config.geometry.n,
        config.geometry.d,
        w0
    );
    let summary = json!({
        "solution": solution.to_doc(),
        "spectral": problem.spectrum.diagnostics(),
        "hermiticity_residual": problem.form.hermiticity_residual(),
        "geometry": geometry.to_doc(false),
    });
    Ok((line, Artifact { table, summary, label: config.geometry.n.to_string(), extra: Vec::new() }, true))
}

fn auto_waists(n: usize, d: f64) -> Vec<f64> {
    let side = n as f64 * d;
    let (lo, hi) = (0.1 * side.max(1.0), 0.7 * side.max(1.0));
    (0..24).map(|k| lo * (hi / lo).powf(k as f64 / 23.0)).collect()
}

fn scan(config: &RunConfig) -> Result<Outcome> {
    let (n, d) = (config.geometry.n, config.geometry.d);
    let waists = if config.study.w0_list.is_empty() { auto_waists(n, d) } else { config.study.w0_list.clone() };
    let result = scan_waist(n, d, &waists, &settings(config))?;
    let window = FitWindow::ClippingBelow { fraction: config.study.clip_fraction };
    let fit = crate::studies::fit_error_model(&result, window).ok();
    let slope = crate::studies::power_law_slope(&result, window).ok();
    let best = result
        .points
        .iter()
        .min_by(|a, b| a.error.total_cmp(&b.error))
        .expect("scan has points");
    let mut line = format!("N = {n}: minimum error {:.6e} at w0 = {}", best.error, best.w0);
    if let Some(f) = &fit {
        line += &format!(", C = {:.4e}", f.parameters[0].value);
    }
    if let Some(f) = &slope {
        line += &format!(", slope = {:.3}", f.parameters[0].value);
    }
    let mut summary = result.summary();
    summary["error_model"] = json!(fit);
    summary["power_law"] = json!(slope);
    summary["fit_window"] = json!(window);
    Ok((line, Artifact { table: result.table(), summary, label: n.to_string(), extra: Vec::new() }, true))
}

fn list_label(n: &[usize]) -> String {
    n.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("-")
}

fn optimal(config: &RunConfig) -> Result<Outcome> {
    let n_list = sizes(config, &[]);
    let result = scaling_study(&n_list, config.geometry.d, &settings(config))?;
    let parts: Vec<String> = result
        .points
        .iter()
        .map(|p| format!("N = {}: w0 = {:.4}, error = {:.4e} (leading term {:.4e})", p.n, p.w0, p.error, p.leading_term))
        .collect();
    let summary = json!({ "study": result.summary(), "points": result.points });
    Ok((parts.join("; "), Artifact { table: result.table(), summary, label: list_label(&n_list), extra: Vec::new() }, true))
}

fn holes(config: &RunConfig) -> Result<Outcome> {
    let n = config.geometry.n;
    let counts = if config.study.hole_counts.is_empty() {
        (1..=((n * n) / 5).min(20)).collect()
    } else {
        config.study.hole_counts.clone()
    };
    let w0 = waist(config)?;
    let result = hole_study(n, config.geometry.d, w0, &counts, config.study.samples, config.study.seed, &settings(config))?;
    let alpha = &result.alpha.parameters[0];
    let line = format!(
        "alpha = {:.4} +- {:.4} from {} configurations (eta = {:.6}, w0 = {w0})",
        alpha.value, alpha.std_error, result.alpha.points, result.eta
    );
    Ok((line, Artifact { table: result.table(), summary: result.summary(), label: n.to_string(), extra: Vec::new() }, true))
}

fn disorder(config: &RunConfig) -> Result<Outcome> {
    let n_list = sizes(config, &[]);
    let d = config.geometry.d;
    let sigmas: Vec<f64> = config.study.sigma_over_d.iter().map(|f| f * d).collect();
    let result = position_disorder_study(&n_list, d, &sigmas, config.study.samples, config.study.seed, &settings(config))?;
    let parts: Vec<String> = n_list
        .iter()
        .map(|&n| match result.loss_exponent(n, 0.0, f64::INFINITY) {
            Ok(f) => format!("N = {n}: loss exponent {:.3} +- {:.3}", f.parameters[0].value, f.parameters[0].std_error),
            Err(e) => format!("N = {n}: no exponent ({e})"),
        })
        .collect();
    Ok((parts.join("; "), Artifact { table: result.table(), summary: result.summary(), label: list_label(&n_list), extra: Vec::new() }, true))
}

fn finite_time(config: &RunConfig) -> Result<Outcome> {
    let n = config.geometry.n;
    let s = settings(config);
    let geometry = configured_geometry(config)?;
    let w0 = waist(config)?;
    let problem = RetrievalProblem::new(&geometry, s.model, &s.mode(w0)?, s.contraction)?;
    let solution = problem.solve(w0)?;
    let mut windows = config.study.t_d_list.clone();
    windows.push(config.study.t_d);
    windows.sort_by(f64::total_cmp);
    windows.dedup();
    let mut table = Table::new(&["T_d", "eta_T", "deficit"]);
    let mut at_target = f64::NAN;
    for &t in &windows {
        let eta_t = crate::dynamics::eta_finite_time(&problem.spectrum, &problem.samples, &solution.spin_wave, t, s.contraction)?;
        let deficit = 1.0 - eta_t / solution.efficiency;
        if t == config.study.t_d {
            at_target = deficit;
        }
        table.push(vec![t, eta_t, deficit]);
    }
    let t_end = config.study.t_d;
    let times: Vec<f64> = (0..=200).map(|k| t_end * k as f64 / 200.0).collect();
    let trajectory = propagate_spectral(&problem.spectrum, &solution.spin_wave, &times)?;
    let flux = trajectory.detected_flux(&problem.samples, s.contraction);
    let mut traj = Table::new(&["t", "excited", "spin", "flux"]);
    for k in 0..times.len() {
        traj.push(vec![times[k], trajectory.excited_population(k), trajectory.spin_population(k), flux[k]]);
    }
    let line = format!(
        "1 - eta_Td/eta = {at_target:.6e} at T_d = {} (eta = {:.8}, w0 = {w0:.6})",
        config.study.t_d, solution.efficiency
    );
    let summary = json!({ "eta": solution.efficiency, "w0": w0, "T_d": config.study.t_d, "deficit": at_target });
    Ok((line, Artifact { table, summary, label: n.to_string(), extra: vec![("trajectory".into(), traj)] }, true))
}

fn isotropic(config: &RunConfig) -> Result<Outcome> {
    let n_list = sizes(config, &[6, 10]);
    let result = isotropic_comparison(&n_list, config.geometry.d, &settings(config))?;
    let parts: Vec<String> = result
        .points
        .iter()
        .map(|p| format!("N = {}: relative increase {:.3}, w0 {:.4} vs {:.4}", p.n, p.relative_increase, p.w0_two_level, p.w0_isotropic))
        .collect();
    let summary = json!({ "study": result.summary(), "points": result.points });
    Ok((parts.join("; "), Artifact { table: result.table(), summary, label: list_label(&n_list), extra: Vec::new() }, true))
}

struct Check {
    name: &'static str,
    value: f64,
    limit: f64,
}

fn validate(config: &RunConfig) -> Result<Outcome> {
    let mut checks = Vec::new();
    let mode = DetectionMode::new(2.0)?.with_tolerance(config.mode.tolerance)?;
    let on_axis = validate_projection(&mode, &[0.0; 3], &[1.0, 0.0, 0.0], 5.0)?;
    checks.push(Check { name: "projection x dipole (relative)", value: on_axis.relative, limit: 1e-4 });
    let cross = validate_projection(&mode, &[0.0; 3], &[0.0, 1.0, 0.0], 5.0)?;
    checks.push(Check {
        name: "projection y dipole (absolute / on-axis)",
        value: cross.absolute.max(cross.closed_form.norm()) / on_axis.closed_form.norm(),
        limit: 1e-6,
    });
    let shifted = validate_projection(&mode, &[10.0, 0.0, 0.0], &[1.0, 0.0, 0.0], 5.0)?;
    checks.push(Check {
        name: "projection displaced dipole (overlap / on-axis)",
        value: shifted.numeric.norm() / on_axis.numeric.norm(),
        limit: 1e-3,
    });

    let mut worst = [0.0f64; 5];
    for (n, model) in [(3, Model::TwoLevel), (4, Model::TwoLevel), (3, Model::Isotropic), (4, Model::Isotropic)] {
        let g = build_square_array(n, 0.6)?;
        let m = interaction_matrix(&g, model)?;
        let spectrum = eigendecompose_unchecked(&m)?;
        let diag = *spectrum.diagnostics();
        let expected = Complex64::new(0.0, 0.5 * m.size() as f64);
        let sum: Complex64 = spectrum.eigenvalues().iter().sum();
        let problem = RetrievalProblem::with_spectrum(spectrum, &g, &DetectionMode::new(1.0)?, config.mode.contraction)?;
        let (eta, _) = problem.form.optimize()?;
        worst[0] = worst[0].max(diag.bilinear);
        worst[1] = worst[1].max(diag.completeness);
        worst[2] = worst[2].max((sum - expected).norm() / expected.norm());
        worst[3] = worst[3].max(problem.form.hermiticity_residual());
        worst[4] = worst[4].max(eta - 1.0);
    }
    checks.push(Check { name: "bilinear orthogonality", value: worst[0], limit: BILINEAR_TOLERANCE });
    checks.push(Check { name: "completeness", value: worst[1], limit: COMPLETENESS_TOLERANCE });
    checks.push(Check { name: "trace identity", value: worst[2], limit: TRACE_TOLERANCE });
    checks.push(Check { name: "K hermiticity", value: worst[3], limit: 1e-10 });
    checks.push(Check { name: "eta - 1", value: worst[4], limit: 1e-9 });

    let mut table = Table::new(&["check", "value", "limit", "pass"]);
    let mut failed = Vec::new();
    for (i, c) in checks.iter().enumerate() {
        let pass = c.value < c.limit;
        if !pass {
            failed.push(c.name);
        }
        table.push(vec![i as f64, c.value, c.limit, if pass { 1.0 } else { 0.0 }]);
    }
    let summary = json!({
        "checks": checks.iter().map(|c| json!({"name": c.name, "value": c.value, "limit": c.limit, "pass": c.value < c.limit})).collect::<Vec<_>>(),
    });
    let line = if failed.is_empty() {
        format!("validate: all {} checks passed", checks.len())
    } else {
        format!("validate: failed {}", failed.join(", "))
    };
    Ok((line, Artifact { table, summary, label: "suite".into(), extra: Vec::new() }, failed.is_empty()))
}
