//! Exact, evanescent-free Gaussian-like detection mode.
//!
//! In transverse wavevector space the x-polarized component is a Gaussian of
//! waist `w0` clipped to the propagating disk `|k_perp| <= k0`; the y-component
//! vanishes and the z-component follows from transversality. With
//! `b = |k_perp| / k0` and `g(b) = exp(-b^2 k0^2 w0^2 / 4)` the real-space
//! profile is
//!
//! ```text
//! E^x(rho, z) =      E0        int_0^1 db  b                g(b) e^{i k0 z sqrt(1-b^2)} J0(b k0 rho)
//! E^z(rho, z) = -i E0 x / rho  int_0^1 db  b^2/sqrt(1-b^2)  g(b) e^{i k0 z sqrt(1-b^2)} J1(b k0 rho)
//! ```
//!
//! Both integrals are evaluated after the substitution `b = sin(theta)`, which
//! removes the endpoint singularity of the z kernel.
//!
//! The mode norm is the energy flux `Re int (E* x B)_z d^2r` through a
//! transverse plane, with `B = curl E / (i k0)`. It is plane independent and
//! evaluates in wavevector space to
//! `(2 pi / k0^2) E0^2 int_0^1 b g^2 (1 - b^2/2) / sqrt(1 - b^2) db`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, Vec3};
use crate::greens::Model;
use crate::quadrature::{integrate, integrate_real, Tolerance};
use crate::{CROSS_SECTION, K0};

/// Gaussian weights below `exp(-GAUSS_CUTOFF)` are dropped from the spectrum.
const GAUSS_CUTOFF: f64 = 60.0;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Field profile at one `(rho, z)`: `E^x = ex`, `E^z = ez * x / rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialProfile {
    pub ex: Complex64,
    pub ez: Complex64,
}

/// How the isotropic model contracts eigenvector orientations against the
/// sampled field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Contraction {
    /// All three orientation components against the full field vector.
    #[default]
    Full,
    /// Only the x orientation against `E^x`.
    LiteralX,
}

#[derive(Debug)]
pub struct DetectionMode {
    w0: f64,
    amplitude: f64,
    two_sided: bool,
    tolerance: f64,
    norm: OnceLock<f64>,
    profiles: Mutex<HashMap<(u64, u64), RadialProfile>>,
}

impl Clone for DetectionMode {
    fn clone(&self) -> Self {
        DetectionMode {
            w0: self.w0,
            amplitude: self.amplitude,
            two_sided: self.two_sided,
            tolerance: self.tolerance,
            norm: self.norm.clone(),
            profiles: Mutex::new(HashMap::new()),
        }
    }
}

impl DetectionMode {
    /// Two-sided mode of waist `w0` with unit amplitude and default tolerance.
    pub fn new(w0: f64) -> Result<Self> {
        if !(w0 > 0.0) || !w0.is_finite() {
            return Err(Error::invalid(format!("beam waist must be positive, got {w0}")));
        }
        Ok(DetectionMode {
            w0,
            amplitude: 1.0,
            two_sided: true,
            tolerance: DEFAULT_TOLERANCE,
            norm: OnceLock::new(),
            profiles: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Result<Self> {
        if !(amplitude > 0.0) || !amplitude.is_finite() {
            return Err(Error::invalid("mode amplitude must be positive"));
        }
        self.amplitude = amplitude;
        self.reset_caches();
        Ok(self)
    }

    pub fn with_two_sided(mut self, two_sided: bool) -> Self {
        self.two_sided = two_sided;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0 && tolerance <= 1e-6) {
            return Err(Error::invalid(format!(
                "quadrature tolerance must lie in (0, 1e-6], got {tolerance}"
            )));
        }
        self.tolerance = tolerance;
        self.reset_caches();
        Ok(self)
    }

    fn reset_caches(&mut self) {
        self.norm = OnceLock::new();
        self.profiles = Mutex::new(HashMap::new());
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn two_sided(&self) -> bool {
        self.two_sided
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// `k0^2 w0^2 / 4`, the exponent scale of the spectral Gaussian.
    fn spread(&self) -> f64 {
        0.25 * K0 * K0 * self.w0 * self.w0
    }

    fn gauss(&self, b: f64) -> f64 {
        (-self.spread() * b * b).exp()
    }

    /// Upper limit of the `theta` integrals.
    fn theta_max(&self) -> f64 {
        let b = (GAUSS_CUTOFF / self.spread()).sqrt();
        if b >= 1.0 {
            FRAC_PI_2
        } else {
            b.asin()
        }
    }

    /// Focal-spot magnitude `E^x(0, 0)`, used to scale absolute tolerances.
    pub fn focus_value(&self) -> f64 {
        let a = self.spread();
        self.amplitude * (-(-a).exp_m1()) / (2.0 * a)
    }

    fn quad_tolerance(&self) -> Tolerance {
        Tolerance::new(self.tolerance * self.focus_value(), self.tolerance)
    }

    fn panels(&self, rho: f64, z: f64) -> usize {
        let b_max = self.theta_max().sin();
        2 + ((K0 * (rho + z.abs()) * b_max) / PI) as usize
    }

    /// `(E^x, E^z x/rho)` coefficients at cylindrical radius `rho` and height `z`.
    pub fn radial_profile(&self, rho: f64, z: f64) -> Result<RadialProfile> {
        let top = self.theta_max();
        let tol = self.quad_tolerance();
        let panels = self.panels(rho, z);
        let e0 = self.amplitude;
        let ex = integrate(
            |t| {
                let (s, c) = t.sin_cos();
                let phase = Complex64::from_polar(1.0, K0 * z * c);
                phase * (s * c * self.gauss(s) * libm::j0(K0 * rho * s))
            },
            0.0,
            top,
            panels,
            tol,
        )?;
        let ez = if rho == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            integrate(
                |t| {
                    let (s, c) = t.sin_cos();
                    let phase = Complex64::from_polar(1.0, K0 * z * c);
                    phase * (s * s * self.gauss(s) * libm::j1(K0 * rho * s))
                },
                0.0,
                top,
                panels,
                tol,
            )?
            .value
        };
        Ok(RadialProfile {
            ex: ex.value * e0,
            ez: ez * Complex64::new(0.0, -e0),
        })
    }

    /// Cached variant of [`radial_profile`](Self::radial_profile), keyed by the
    /// exact bit patterns of `(rho, z)`.
    fn cached_profile(&self, rho: f64, z: f64) -> Result<RadialProfile> {
        let key = (rho.to_bits(), z.to_bits());
        if let Some(p) = self.profiles.lock().unwrap().get(&key) {
            return Ok(*p);
        }
        let p = self.radial_profile(rho, z)?;
        self.profiles.lock().unwrap().insert(key, p);
        Ok(p)
    }

    /// Complex field `(E^x, E^y, E^z)` of the single +z beam at `r`.
    pub fn field(&self, r: &Vec3) -> Result<[Complex64; 3]> {
        let rho = r[0].hypot(r[1]);
        let p = self.radial_profile(rho, r[2])?;
        Ok(compose(&p, r, rho))
    }

    /// Flux norm of the single beam, computed once in wavevector space.
    pub fn norm(&self) -> Result<f64> {
        if let Some(v) = self.norm.get() {
            return Ok(*v);
        }
        let a2 = 2.0 * self.spread();
        let integral = integrate_real(
            |t| {
                let s = t.sin();
                s * (-a2 * s * s).exp() * (1.0 - 0.5 * s * s)
            },
            0.0,
            self.theta_max(),
            4,
            Tolerance::new(0.0, self.tolerance.min(1e-12)),
        )?;
        let value = 2.0 * PI / (K0 * K0) * self.amplitude * self.amplitude * integral;
        Ok(*self.norm.get_or_init(|| value))
    }

    /// Magnetic field `B^y` of the beam averaged over the azimuth at `(rho, z)`.
    fn azimuthal_by(&self, rho: f64, z: f64, tol: Tolerance) -> Result<Complex64> {
        let value = integrate(
            |t| {
                let (s, c) = t.sin_cos();
                let phase = Complex64::from_polar(1.0, K0 * z * c);
                phase * (s * self.gauss(s) * (1.0 - 0.5 * s * s) * libm::j0(K0 * rho * s))
            },
            0.0,
            self.theta_max(),
            self.panels(rho, z),
            tol,
        )?;
        Ok(value.value * self.amplitude)
    }

    /// Real-space flux `Re int (E* x B)_z` through the plane at height `z`,
    /// integrated radially out to `radius`. The azimuthal dependence of `B^y`
    /// integrates out against the axially symmetric `E^x`.
    pub fn flux_through_plane(&self, z: f64, radius: f64) -> Result<f64> {
        let inner = Tolerance::new(1e-3 * self.tolerance * self.focus_value(), 1e-3 * self.tolerance);
        let panels = (4.0 * radius / self.w0).ceil() as usize + 4;
        let scale = self.focus_value() * self.focus_value() * self.w0 * self.w0;
        let value = integrate_real(
            |rho| {
                let ex = self.radial_profile(rho, z).map(|p| p.ex);
                let by = self.azimuthal_by(rho, z, inner);
                match (ex, by) {
                    (Ok(ex), Ok(by)) => 2.0 * PI * rho * (ex.conj() * by).re,
                    _ => f64::NAN,
                }
            },
            0.0,
            radius,
            panels,
            Tolerance::new(1e-2 * self.tolerance * scale, 1e-2 * self.tolerance),
        )?;
        if !value.is_finite() {
            return Err(Error::Numerical {
                context: "real-space flux integrand".into(),
                estimate: f64::INFINITY,
            });
        }
        Ok(value)
    }

    /// Efficiency prefactor `S / (4 F)`, doubled for the two-sided mode.
    pub fn prefactor(&self) -> Result<f64> {
        let sides = if self.two_sided { 2.0 } else { 1.0 };
        Ok(sides * CROSS_SECTION / (4.0 * self.norm()?))
    }
}

fn compose(p: &RadialProfile, r: &Vec3, rho: f64) -> [Complex64; 3] {
    let ez = if rho == 0.0 { Complex64::new(0.0, 0.0) } else { p.ez * (r[0] / rho) };
    [p.ex, Complex64::new(0.0, 0.0), ez]
}

/// Detection-mode values at the atoms of a geometry.
#[derive(Debug, Clone)]
pub struct ModeSamples {
    model: Model,
    fields: Vec<[Complex64; 3]>,
    scalars: Vec<Complex64>,
    norm: f64,
    prefactor: f64,
    positions: Vec<Vec3>,
}

/// Samples the mode at every atom of `g`. Two-level samples are the scalar
/// projections `E(r_j) . d_j*`; isotropic samples keep the full vector.
pub fn sample_mode(mode: &DetectionMode, g: &Geometry, model: Model) -> Result<ModeSamples> {
    let fields: Vec<[Complex64; 3]> = g
        .positions()
        .par_iter()
        .map(|r| {
            let rho = r[0].hypot(r[1]);
            mode.cached_profile(rho, r[2]).map(|p| compose(&p, r, rho))
        })
        .collect::<Result<_>>()?;
    let scalars = fields
        .iter()
        .zip(g.orientations())
        .map(|(e, d)| match model {
            Model::TwoLevel => e[0] * d[0] + e[1] * d[1] + e[2] * d[2],
            Model::Isotropic => e[0],
        })
        .collect();
    Ok(ModeSamples {
        model,
        fields,
        scalars,
        norm: mode.norm()?,
        prefactor: mode.prefactor()?,
        positions: g.positions().to_vec(),
    })
}

impl ModeSamples {
    pub fn model(&self) -> Model {
        self.model
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Full field vectors per atom.
    pub fn fields(&self) -> &[[Complex64; 3]] {
        &self.fields
    }

    /// Local scalar fields `E_j` (x-component for isotropic atoms).
    pub fn scalars(&self) -> &[Complex64] {
        &self.scalars
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    /// Same samples multiplied by a global complex factor. The norm follows
    /// `|factor|^2`.
    pub fn scaled(&self, factor: Complex64) -> ModeSamples {
        let f2 = factor.norm_sqr();
        ModeSamples {
            model: self.model,
            fields: self.fields.iter().map(|e| [e[0] * factor, e[1] * factor, e[2] * factor]).collect(),
            scalars: self.scalars.iter().map(|e| e * factor).collect(),
            norm: self.norm * f2,
            prefactor: self.prefactor / f2,
            positions: self.positions.clone(),
        }
    }

    /// Samples restricted to the atoms `keep` (in the given order).
    pub fn subset(&self, keep: &[usize]) -> ModeSamples {
        ModeSamples {
            model: self.model,
            fields: keep.iter().map(|&i| self.fields[i]).collect(),
            scalars: keep.iter().map(|&i| self.scalars[i]).collect(),
            norm: self.norm,
            prefactor: self.prefactor,
            positions: keep.iter().map(|&i| self.positions[i]).collect(),
        }
    }

    /// Detection weights `w_r = conj(E_r)` over the rows of the interaction
    /// matrix: the detected amplitude is `sum_r w_r e_r(t)`.
    pub fn weights(&self, contraction: Contraction) -> Vec<Complex64> {
        match self.model {
            Model::TwoLevel => self.scalars.iter().map(|e| e.conj()).collect(),
            Model::Isotropic => self
                .fields
                .iter()
                .flat_map(|e| match contraction {
                    Contraction::Full => [e[0].conj(), e[1].conj(), e[2].conj()],
                    Contraction::LiteralX => [e[0].conj(), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)],
                })
                .collect(),
        }
    }

    /// CSV with one row per atom: `site,x,y,re_E,im_E`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "site,x,y,re_E,im_E")?;
        for (i, (p, e)) in self.positions.iter().zip(&self.scalars).enumerate() {
            writeln!(w, "{i},{},{},{},{}", p[0], p[1], e.re, e.im)?;
        }
        Ok(())
    }
}

/// Outcome of comparing the numerical plane overlap of a dipole field with the
/// closed-form projection `(i / (2 k0)) E_det*(r_d) . d`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProjectionCheck {
    pub numeric: Complex64,
    pub closed_form: Complex64,
    pub absolute: f64,
    /// `absolute / |closed_form|`; infinite when the closed form vanishes.
    pub relative: f64,
    pub radius: f64,
}

/// Numerically integrates the flux overlap `int (E_det* x B_out)_z` over the
/// plane `z = plane_z` for a unit dipole at `position` oriented along
/// `orientation`, radiating `E_out = G0(r, r_d) . d`, and compares it with the
/// closed form. The plane must lie on the +z side of the dipole.
pub fn validate_projection(
    mode: &DetectionMode,
    position: &Vec3,
    orientation: &Vec3,
    plane_z: f64,
) -> Result<ProjectionCheck> {
    validate_projection_with_radius(mode, position, orientation, plane_z, 40.0 * mode.w0())
}

pub fn validate_projection_with_radius(
    mode: &DetectionMode,
    position: &Vec3,
    orientation: &Vec3,
    plane_z: f64,
    radius: f64,
) -> Result<ProjectionCheck> {
    if plane_z <= position[2] {
        return Err(Error::invalid("integration plane must lie beyond the dipole (+z side)"));
    }
    let unit_norm = orientation.iter().map(|c| c * c).sum::<f64>().sqrt();
    if (unit_norm - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("dipole orientation must be a unit vector"));
    }
    let at_dipole = mode.field(position)?;
    let dot = at_dipole[0].conj() * orientation[0] + at_dipole[1].conj() * orientation[1] + at_dipole[2].conj() * orientation[2];
    let closed_form = Complex64::new(0.0, 1.0 / (2.0 * K0)) * dot;

    // Magnitude of the on-axis x-dipole overlap, used to scale absolute tolerances.
    let scale = mode.focus_value() / (2.0 * K0);
    let tol = mode.tolerance().max(1e-12);
    let b_out = |x: f64, y: f64| -> Complex64 {
        let sep = [x - position[0], y - position[1], plane_z - position[2]];
        let dist = (sep[0] * sep[0] + sep[1] * sep[1] + sep[2] * sep[2]).sqrt();
        let g = Complex64::from_polar(1.0, K0 * dist) / (4.0 * PI * dist);
        let radial = g * (Complex64::new(0.0, K0) - 1.0 / dist) / Complex64::new(0.0, K0);
        // y-component of R_hat x d
        let cross_y = (sep[2] * orientation[0] - sep[0] * orientation[2]) / dist;
        radial * cross_y
    };
    let phi_tol = Tolerance::new(1e-2 * tol * scale, 1e-2 * tol);
    let outer_tol = Tolerance::new(1e-1 * tol * scale, 1e-1 * tol);
    // Upper bound of |B_out| anywhere on the plane.
    let dz = plane_z - position[2];
    let b_max = (1.0 + 1.0 / (K0 * dz)) / (4.0 * PI * dz);
    let mut failure: Option<Error> = None;
    let mut integrand = |rho: f64| -> Complex64 {
        let ex = match mode.radial_profile(rho, plane_z) {
            Ok(p) => p.ex,
            Err(e) => {
                failure.get_or_insert(e);
                return Complex64::new(0.0, 0.0);
            }
        };
        // Rings where the mode has died out cannot move the result.
        if ex.norm() * 2.0 * PI * rho * b_max * radius < 1e-3 * outer_tol.abs {
            return Complex64::new(0.0, 0.0);
        }
        let ring = integrate(
            |phi| {
                let (s, c) = phi.sin_cos();
                b_out(rho * c, rho * s)
            },
            0.0,
            2.0 * PI,
            4 + (K0 * rho / 4.0) as usize,
            phi_tol,
        );
        match ring {
            Ok(r) => ex.conj() * r.value * rho,
            Err(e) => {
                failure.get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        }
    };
    let panels = (4.0 * radius / mode.w0()).ceil() as usize + 4;
    let overlap = integrate(&mut integrand, 0.0, radius, panels, outer_tol)?;
    let tail = integrand(radius).norm() * mode.w0();
    if let Some(e) = failure {
        return Err(e);
    }
    if tail > 1e-6 * scale {
        return Err(Error::Truncation { radius, tail });
    }
    let numeric = overlap.value;
    let absolute = (numeric - closed_form).norm();
    let relative = if closed_form.norm() > 0.0 { absolute / closed_form.norm() } else { f64::INFINITY };
    Ok(ProjectionCheck {
        numeric,
        closed_form,
        absolute,
        relative,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_square_array;

    #[test]
    fn focus_matches_closed_form() {
        for &w0 in &[0.8, 1.5, 3.0] {
            let m = DetectionMode::new(w0).unwrap();
            let e = m.field(&[0.0; 3]).unwrap();
            let k2w2 = K0 * K0 * w0 * w0;
            let expected = 2.0 / k2w2 * (1.0 - (-k2w2 / 4.0).exp());
            assert!((e[0].re - expected).abs() < 1e-10 * expected, "{w0}");
            assert!(e[0].im.abs() < 1e-14);
            assert_eq!(e[2], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn on_axis_longitudinal_field_vanishes() {
        let m = DetectionMode::new(1.2).unwrap();
        for z in [-3.0, 0.0, 0.7, 4.0] {
            assert_eq!(m.field(&[0.0, 0.0, z]).unwrap()[2], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn large_waist_is_paraxial_gaussian() {
        let w0 = 20.0;
        let m = DetectionMode::new(w0).unwrap();
        let e0 = m.field(&[0.0; 3]).unwrap()[0].re;
        for k in 0..=10 {
            let rho = w0 * k as f64 / 10.0;
            let e = m.field(&[rho, 0.0, 0.0]).unwrap()[0];
            let gauss = e0 * (-(rho * rho) / (w0 * w0)).exp();
            assert!((e - gauss).norm() < 1e-4 * gauss, "rho = {rho}");
        }
    }

    #[test]
    fn conjugate_mirror_symmetry() {
        let m = DetectionMode::new(1.1).unwrap();
        for &(x, y, z) in &[(0.3, 0.2, 0.9), (1.4, -0.5, 2.5), (-0.7, 0.1, 0.05)] {
            let up = m.field(&[x, y, z]).unwrap();
            let down = m.field(&[x, y, -z]).unwrap();
            assert!((up[0] - down[0].conj()).norm() < 1e-13);
            assert!((up[2] + down[2].conj()).norm() < 1e-13);
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let m = DetectionMode::new(1.3).unwrap();
        let r = [0.4, -0.9, 1.7];
        assert_eq!(m.field(&r).unwrap(), m.field(&r).unwrap());
    }

    #[test]
    fn norm_scales_with_amplitude_squared() {
        let a = DetectionMode::new(1.5).unwrap();
        let b = DetectionMode::new(1.5).unwrap().with_amplitude(2.0).unwrap();
        assert!((b.norm().unwrap() / a.norm().unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn tolerance_must_be_small_and_positive() {
        assert!(DetectionMode::new(1.0).unwrap().with_tolerance(1e-5).is_err());
        assert!(DetectionMode::new(1.0).unwrap().with_tolerance(0.0).is_err());
        assert!(DetectionMode::new(1.0).unwrap().with_tolerance(1e-8).is_ok());
        assert!(DetectionMode::new(0.0).is_err());
    }

    #[test]
    fn single_atom_sample_is_focus_value() {
        let m = DetectionMode::new(2.0).unwrap();
        let g = build_square_array(1, 0.6).unwrap();
        let s = sample_mode(&m, &g, Model::TwoLevel).unwrap();
        let k2w2 = K0 * K0 * 4.0;
        let expected = 2.0 / k2w2 * (1.0 - (-k2w2 / 4.0).exp());
        assert!((s.scalars()[0].re - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn centered_square_samples_share_magnitude() {
        let m = DetectionMode::new(1.0).unwrap();
        let g = build_square_array(2, 0.6).unwrap();
        let s = sample_mode(&m, &g, Model::Isotropic).unwrap();
        let first = s.scalars()[0].norm();
        for (e, f) in s.scalars().iter().zip(s.fields()) {
            assert!((e.norm() - first).abs() < 1e-14 * first);
            assert_eq!(f[1], Complex64::new(0.0, 0.0));
            assert!(e.im.abs() <= 1e-10 * e.norm());
        }
    }
}
