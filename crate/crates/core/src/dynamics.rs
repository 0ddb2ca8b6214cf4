//! Single-excitation retrieval dynamics.
//!
//! The excited-state amplitudes `e` and the metastable amplitudes `s` obey
//!
//! ```text
//! de/dt = i Delta e - i Omega s + i M e
//! ds/dt = -i conj(Omega) e
//! ```
//!
//! where the control only couples the spin rows of `e` (all rows for two-level
//! atoms, the x rows for isotropic atoms). With an instantaneous pi-pulse at
//! `t = 0` the excitation starts in `e` and evolves in closed form through the
//! eigendecomposition of `M`; piecewise-constant controls are integrated with
//! an adaptive Dormand-Prince scheme, which also serves as an oracle for the
//! spectral propagation.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detection::{Contraction, ModeSamples};
use crate::error::{Error, Result};
use crate::greens::InteractionMatrix;
use crate::retrieval::PAIR_GUARD;
use crate::spectral::{eigendecompose, SpectralDecomposition};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// One interval of constant control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub duration: f64,
    pub omega: Complex64,
    #[serde(default)]
    pub detuning: f64,
}

/// Control field applied during retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControlSchedule {
    /// Instantaneous transfer `s -> e` at `t = 0`, no control afterwards.
    PiPulseAtZero,
    /// Consecutive segments; the control is off after the last one.
    PiecewiseConstant { segments: Vec<Segment> },
}

impl ControlSchedule {
    pub fn piecewise(segments: Vec<Segment>) -> Result<Self> {
        for (k, s) in segments.iter().enumerate() {
            if !(s.duration > 0.0) || !s.duration.is_finite() {
                return Err(Error::invalid(format!("segment {k} must have a positive duration")));
            }
            if !(s.omega.re.is_finite() && s.omega.im.is_finite() && s.detuning.is_finite()) {
                return Err(Error::invalid(format!("segment {k} has a non-finite control")));
            }
        }
        Ok(ControlSchedule::PiecewiseConstant { segments })
    }

    /// Control `(Omega, Delta)` in effect at time `t`.
    fn control_at(&self, t: f64) -> (Complex64, f64) {
        match self {
            ControlSchedule::PiPulseAtZero => (ZERO, 0.0),
            ControlSchedule::PiecewiseConstant { segments } => {
                let mut start = 0.0;
                for s in segments {
                    if t < start + s.duration {
                        return (s.omega, s.detuning);
                    }
                    start += s.duration;
                }
                (ZERO, 0.0)
            }
        }
    }

    /// Times at which the control switches.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            ControlSchedule::PiPulseAtZero => Vec::new(),
            ControlSchedule::PiecewiseConstant { segments } => segments
                .iter()
                .scan(0.0, |t, s| {
                    *t += s.duration;
                    Some(*t)
                })
                .collect(),
        }
    }
}

/// Amplitudes sampled on a time grid.
#[derive(Debug, Clone)]
pub struct AmplitudeTrajectory {
    pub times: Vec<f64>,
    /// `e[k]` holds all excited rows at `times[k]`.
    pub e: Vec<Vec<Complex64>>,
    /// `s[k]` holds the metastable amplitude of each atom at `times[k]`.
    pub s: Vec<Vec<Complex64>>,
}

impl AmplitudeTrajectory {
    pub fn excited_population(&self, k: usize) -> f64 {
        self.e[k].iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn spin_population(&self, k: usize) -> f64 {
        self.s[k].iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn population(&self, k: usize) -> f64 {
        self.excited_population(k) + self.spin_population(k)
    }

    /// Instantaneous detected flux `P |w^T e(t)|^2` at every grid time.
    pub fn detected_flux(&self, samples: &ModeSamples, contraction: Contraction) -> Vec<f64> {
        let w = samples.weights(contraction);
        self.e
            .iter()
            .map(|e| samples.prefactor() * w.iter().zip(e).map(|(a, b)| a * b).sum::<Complex64>().norm_sqr())
            .collect()
    }

    /// Trapezoid integral of the detected flux over the whole grid.
    pub fn detected_efficiency(&self, samples: &ModeSamples, contraction: Contraction) -> f64 {
        let flux = self.detected_flux(samples, contraction);
        self.times
            .windows(2)
            .zip(flux.windows(2))
            .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
            .sum()
    }

    /// CSV with columns `t,excited,spin,flux`; the flux column is empty
    /// without samples.
    pub fn write_csv<W: Write>(&self, mut w: W, detection: Option<(&ModeSamples, Contraction)>) -> Result<()> {
        let flux = detection.map(|(s, c)| self.detected_flux(s, c));
        writeln!(w, "t,excited,spin,flux")?;
        for k in 0..self.times.len() {
            let f = flux.as_ref().map(|f| f[k].to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{}",
                self.times[k],
                self.excited_population(k),
                self.spin_population(k),
                f
            )?;
        }
        Ok(())
    }
}

fn check_spin_wave(s0: &[Complex64], atoms: usize) -> Result<()> {
    if s0.len() != atoms {
        return Err(Error::invalid(format!(
            "spin wave has {} entries for {atoms} atoms",
            s0.len()
        )));
    }
    let norm: f64 = s0.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("spin wave must be normalized, |s0|^2 = {norm}")));
    }
    Ok(())
}

fn uniform_grid(t_end: f64, steps: usize) -> Result<Vec<f64>> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid("end time must be positive"));
    }
    let steps = steps.max(1);
    Ok((0..=steps).map(|k| t_end * k as f64 / steps as f64).collect())
}

/// Lifts a spin wave onto the excited rows: `e_{spin row j} = s_j`.
fn lift(s0: &[Complex64], rows: usize) -> Vec<Complex64> {
    let mut e = vec![ZERO; s0.len() * rows];
    for (j, s) in s0.iter().enumerate() {
        e[j * rows] = *s;
    }
    e
}

/// Evolves `s0` under `schedule` and samples the amplitudes on `steps + 1`
/// uniform times in `[0, t_end]`. The pi-pulse schedule uses the closed-form
/// spectral propagation, piecewise controls the adaptive integrator.
pub fn evolve(
    m: &InteractionMatrix,
    s0: &[Complex64],
    schedule: &ControlSchedule,
    t_end: f64,
    steps: usize,
) -> Result<AmplitudeTrajectory> {
    let times = uniform_grid(t_end, steps)?;
    match schedule {
        ControlSchedule::PiPulseAtZero => {
            let dec = eigendecompose(m)?;
            propagate_spectral(&dec, s0, &times)
        }
        ControlSchedule::PiecewiseConstant { .. } => integrate_ode(m, s0, schedule, &times, DEFAULT_ODE_TOLERANCE),
    }
}

/// Closed-form pi-pulse propagation `e(t) = V diag(exp(i lambda t)) V^T e(0)`.
pub fn propagate_spectral(dec: &SpectralDecomposition, s0: &[Complex64], times: &[f64]) -> Result<AmplitudeTrajectory> {
    let rows = dec.model().rows_per_atom();
    let atoms = dec.len() / rows;
    check_spin_wave(s0, atoms)?;
    let c = dec.coefficients(&lift(s0, rows));
    let lambda = dec.eigenvalues();
    let mut e = Vec::with_capacity(times.len());
    for &t in times {
        let ct: Vec<Complex64> = c.iter().zip(lambda).map(|(c, l)| c * (I * l * t).exp()).collect();
        e.push(dec.synthesize(&ct));
    }
    Ok(AmplitudeTrajectory {
        times: times.to_vec(),
        e,
        s: vec![vec![ZERO; atoms]; times.len()],
    })
}

pub const DEFAULT_ODE_TOLERANCE: f64 = 1e-10;

/// Integrates the full `(e, s)` system with Dormand-Prince 5(4) at relative
/// and absolute tolerance `tol`. For the pi-pulse schedule the state starts in
/// `e`, otherwise in `s`.
pub fn integrate_ode(
    m: &InteractionMatrix,
    s0: &[Complex64],
    schedule: &ControlSchedule,
    times: &[f64],
    tol: f64,
) -> Result<AmplitudeTrajectory> {
    let rows = m.model().rows_per_atom();
    let atoms = m.atoms();
    check_spin_wave(s0, atoms)?;
    let n = m.size();
    let a = m.entries();
    let mut y = vec![ZERO; n + atoms];
    match schedule {
        ControlSchedule::PiPulseAtZero => y[..n].copy_from_slice(&lift(s0, rows)),
        ControlSchedule::PiecewiseConstant { .. } => y[n..].copy_from_slice(s0),
    }
    let rhs = |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
        let (omega, delta) = schedule.control_at(t);
        let (e, s) = y.split_at(n);
        for i in 0..n {
            let mut acc = I * delta * e[i];
            for l in 0..n {
                acc += I * a[(i, l)] * e[l];
            }
            dy[i] = acc;
        }
        for j in 0..atoms {
            dy[j * rows] -= I * omega * s[j];
            dy[n + j] = -I * omega.conj() * e[j * rows];
        }
    };

    let mut stops: Vec<f64> = schedule.breakpoints();
    stops.retain(|b| *b > 0.0);
    let mut out_e = Vec::with_capacity(times.len());
    let mut out_s = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut h = 1e-2;
    let mut stepper = Dopri5::new(n + atoms);
    for &target in times {
        if target < t {
            return Err(Error::invalid("output times must be non-decreasing and non-negative"));
        }
        // Never step across a control switch.
        while t < target {
            let next_stop = stops.iter().copied().find(|b| *b > t && *b < target).unwrap_or(target);
            h = stepper.advance(&rhs, &mut t, &mut y, next_stop, h, tol)?;
        }
        out_e.push(y[..n].to_vec());
        out_s.push(y[n..].to_vec());
    }
    Ok(AmplitudeTrajectory {
        times: times.to_vec(),
        e: out_e,
        s: out_s,
    })
}

/// Dormand-Prince 5(4) with an I-controller on the embedded error estimate.
struct Dopri5 {
    k: [Vec<Complex64>; 7],
    stage: Vec<Complex64>,
    next: Vec<Complex64>,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

impl Dopri5 {
    fn new(n: usize) -> Self {
        Dopri5 {
            k: std::array::from_fn(|_| vec![ZERO; n]),
            stage: vec![ZERO; n],
            next: vec![ZERO; n],
        }
    }

    /// Steps from `t` to exactly `target`, returning the step size to try next.
    fn advance<F>(&mut self, f: &F, t: &mut f64, y: &mut [Complex64], target: f64, mut h: f64, tol: f64) -> Result<f64>
    where
        F: Fn(f64, &[Complex64], &mut [Complex64]),
    {
        let n = y.len();
        let mut steps = 0usize;
        while *t < target {
            steps += 1;
            if steps > 1_000_000 {
                return Err(Error::Numerical {
                    context: "ODE integration (step limit)".into(),
                    estimate: h,
                });
            }
            let last = *t + h >= target;
            let step = if last { target - *t } else { h };
            f(*t, y, &mut self.k[0]);
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, a) in A[s].iter().enumerate().take(s) {
                        if *a != 0.0 {
                            acc += self.k[j][i] * (step * a);
                        }
                    }
                    self.stage[i] = acc;
                }
                f(*t + C[s] * step, &self.stage, &mut self.k[s]);
            }
            let mut err: f64 = 0.0;
            for i in 0..n {
                let mut hi = y[i];
                let mut delta = ZERO;
                for s in 0..7 {
                    hi += self.k[s][i] * (step * B5[s]);
                    delta += self.k[s][i] * (step * (B5[s] - B4[s]));
                }
                self.next[i] = hi;
                let scale = tol + tol * y[i].norm().max(hi.norm());
                err = err.max(delta.norm() / scale);
            }
            if err <= 1.0 {
                *t = if last { target } else { *t + step };
                y.copy_from_slice(&self.next);
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = step * factor;
            if h < 1e-14 * target.abs().max(1.0) {
                return Err(Error::Numerical {
                    context: "ODE integration (step size underflow)".into(),
                    estimate: err * tol,
                });
            }
        }
        Ok(h)
    }
}

/// Efficiency detected within `[0, t_d]` after a pi-pulse at `t = 0`,
/// evaluated in closed form over eigenmode pairs.
pub fn eta_finite_time(
    dec: &SpectralDecomposition,
    samples: &ModeSamples,
    s0: &[Complex64],
    t_d: f64,
    contraction: Contraction,
) -> Result<f64> {
    if !(t_d > 0.0) {
        return Err(Error::invalid("detection window must be positive"));
    }
    let rows = dec.model().rows_per_atom();
    let atoms = dec.len() / rows;
    check_spin_wave(s0, atoms)?;
    if samples.len() != atoms || samples.model() != dec.model() {
        return Err(Error::invalid("mode samples do not match the decomposition"));
    }
    let projected = dec.coefficients(&samples.weights(contraction));
    let c = dec.coefficients(&lift(s0, rows));
    let amp: Vec<Complex64> = projected.iter().zip(&c).map(|(e, c)| e * c).collect();
    let lambda = dec.eigenvalues();
    let mut total = ZERO;
    for p in 0..amp.len() {
        for q in 0..amp.len() {
            let denom = lambda[p] - lambda[q].conj();
            if denom.norm() < PAIR_GUARD {
                return Err(Error::SingularPair {
                    first: q,
                    second: p,
                    magnitude: denom.norm(),
                });
            }
            let window = I * (1.0 - (I * denom * t_d).exp()) / denom;
            total += amp[q].conj() * amp[p] * window;
        }
    }
    Ok(samples.prefactor() * total.re)
}

/// CSV with columns `T_d,deficit` where `deficit = 1 - eta(T_d) / eta`.
pub fn write_eta_curve_csv<W: Write>(mut w: W, curve: &[(f64, f64)], eta: f64) -> Result<()> {
    writeln!(w, "T_d,deficit")?;
    for (t, e) in curve {
        writeln!(w, "{t},{}", 1.0 - e / eta)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_square_array;
    use crate::greens::{interaction_matrix, Model};

    fn one() -> Vec<Complex64> {
        vec![Complex64::new(1.0, 0.0)]
    }

    #[test]
    fn single_atom_decays_exponentially() {
        let g = build_square_array(1, 0.6).unwrap();
        let m = interaction_matrix(&g, Model::TwoLevel).unwrap();
        let traj = evolve(&m, &one(), &ControlSchedule::PiPulseAtZero, 5.0, 50).unwrap();
        for (k, t) in traj.times.iter().enumerate() {
            assert!((traj.excited_population(k) - (-t).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn no_control_freezes_spin_wave() {
        let g = build_square_array(2, 0.6).unwrap();
        let m = interaction_matrix(&g, Model::TwoLevel).unwrap();
        let s0 = vec![Complex64::new(0.5, 0.0); 4];
        let off = ControlSchedule::piecewise(vec![Segment {
            duration: 3.0,
            omega: ZERO,
            detuning: 0.0,
        }])
        .unwrap();
        let traj = evolve(&m, &s0, &off, 3.0, 6).unwrap();
        for k in 0..traj.times.len() {
            assert_eq!(traj.s[k], s0);
            assert!(traj.excited_population(k) == 0.0);
        }
    }

    #[test]
    fn spectral_matches_ode_for_pi_pulse() {
        let g = build_square_array(3, 0.6).unwrap();
        let m = interaction_matrix(&g, Model::TwoLevel).unwrap();
        let dec = eigendecompose(&m).unwrap();
        let mut s0: Vec<Complex64> = (0..9).map(|j| Complex64::new(1.0 + j as f64, 0.3 * j as f64)).collect();
        crate::retrieval::normalize_phase(&mut s0);
        let times: Vec<f64> = (0..=20).map(|k| k as f64).collect();
        let a = propagate_spectral(&dec, &s0, &times).unwrap();
        let b = integrate_ode(&m, &s0, &ControlSchedule::PiPulseAtZero, &times, 1e-12).unwrap();
        let worst = a
            .e
            .iter()
            .zip(&b.e)
            .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).norm()))
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn rabi_transfer_without_decay_channel_mixing() {
        // A weak resonant drive moves population from s to e; the norm never grows.
        let g = build_square_array(2, 0.6).unwrap();
        let m = interaction_matrix(&g, Model::TwoLevel).unwrap();
        let s0 = vec![Complex64::new(0.5, 0.0); 4];
        let drive = ControlSchedule::piecewise(vec![
            Segment {
                duration: 1.0,
                omega: Complex64::new(2.0, 0.0),
                detuning: 0.0,
            },
            Segment {
                duration: 2.0,
                omega: Complex64::new(0.5, 0.0),
                detuning: 1.0,
            },
        ])
        .unwrap();
        let traj = evolve(&m, &s0, &drive, 4.0, 40).unwrap();
        for k in 1..traj.times.len() {
            assert!(traj.population(k) <= traj.population(k - 1) + 1e-9);
        }
        assert!(traj.population(40) < 0.9);
    }

    #[test]
    fn schedule_rejects_bad_segments() {
        let bad = Segment {
            duration: 0.0,
            omega: ZERO,
            detuning: 0.0,
        };
        assert!(ControlSchedule::piecewise(vec![bad]).is_err());
    }

    #[test]
    fn schedule_json_round_trip() {
        let s = ControlSchedule::piecewise(vec![Segment {
            duration: 1.5,
            omega: Complex64::new(0.3, -0.1),
            detuning: 0.2,
        }])
        .unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<ControlSchedule>(&text).unwrap(), s);
        let pi: ControlSchedule = serde_json::from_str(r#"{"kind":"pi-pulse-at-zero"}"#).unwrap();
        assert_eq!(pi, ControlSchedule::PiPulseAtZero);
    }
}
