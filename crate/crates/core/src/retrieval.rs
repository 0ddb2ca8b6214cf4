//! Optimal retrieval: the efficiency is a Hermitian form in the initial spin
//! wave, so its maximum is the top eigenvalue of that form.
//!
//! For an initial excitation `e0` the amplitude emitted into the detection
//! mode is `A(t) = w^T e(t)` with `e(t) = V diag(exp(i lambda t)) V^T e0`.
//! Integrating `|A|^2` over all times gives
//!
//! ```text
//! eta = P * s^dag K s,   K = conj(V_s) D V_s^T,
//! D[q, p] = i E[p] conj(E[q]) / (lambda_p - conj(lambda_q)),   E = V^T w,
//! ```
//!
//! where `V_s` holds the spin rows of the eigenvectors and `P` is the flux
//! prefactor of the mode.

use std::io::Write;

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detection::{sample_mode, Contraction, DetectionMode, ModeSamples};
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::greens::{interaction_matrix, Model};
use crate::spectral::{eigendecompose, SpectralDecomposition};

/// Pair denominators below this magnitude are treated as singular.
pub const PAIR_GUARD: f64 = 1e-14;

/// Hermitian efficiency form over the spin-wave amplitudes.
#[derive(Debug, Clone)]
pub struct EfficiencyMatrix {
    k: Mat<Complex64>,
    prefactor: f64,
    contraction: Contraction,
    asymmetry: f64,
}

/// Builds the efficiency form from a decomposition and matching samples.
pub fn efficiency_matrix(
    spectrum: &SpectralDecomposition,
    samples: &ModeSamples,
    contraction: Contraction,
) -> Result<EfficiencyMatrix> {
    if spectrum.model() != samples.model() {
        return Err(Error::invalid("spectrum and mode samples use different atom models"));
    }
    let n = spectrum.len();
    let rows = spectrum.model().rows_per_atom();
    if samples.len() * rows != n {
        return Err(Error::invalid(format!(
            "{} mode samples do not match a {n}-dimensional spectrum",
            samples.len()
        )));
    }
    let w = samples.weights(contraction);
    let projected = spectrum.coefficients(&w);
    let lambda = spectrum.eigenvalues();

    let mut d = Mat::<Complex64>::zeros(n, n);
    for p in 0..n {
        for q in 0..n {
            let denom = lambda[p] - lambda[q].conj();
            if denom.norm() < PAIR_GUARD {
                return Err(Error::SingularPair {
                    first: q,
                    second: p,
                    magnitude: denom.norm(),
                });
            }
            d[(q, p)] = Complex64::new(0.0, 1.0) * projected[p] * projected[q].conj() / denom;
        }
    }

    let v = spectrum.vectors();
    let atoms = samples.len();
    let spin = Mat::from_fn(atoms, n, |j, p| v[(j * rows, p)]);
    let raw = spin.conjugate() * &d * spin.transpose();
    let mut scale: f64 = 0.0;
    let mut defect: f64 = 0.0;
    for i in 0..atoms {
        for j in 0..atoms {
            scale = scale.max(raw[(i, j)].norm());
            defect = defect.max((raw[(i, j)] - raw[(j, i)].conj()).norm());
        }
    }
    let k = Mat::from_fn(atoms, atoms, |i, j| 0.5 * (raw[(i, j)] + raw[(j, i)].conj()));
    Ok(EfficiencyMatrix {
        k,
        prefactor: samples.prefactor(),
        contraction,
        asymmetry: if scale > 0.0 { defect / scale } else { 0.0 },
    })
}

impl EfficiencyMatrix {
    /// The raw Hermitian form `K`, without the flux prefactor.
    pub fn form(&self) -> &Mat<Complex64> {
        &self.k
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn contraction(&self) -> Contraction {
        self.contraction
    }

    pub fn atoms(&self) -> usize {
        self.k.nrows()
    }

    /// `max |K - K^dag| / max |K|` of the form before it was symmetrized.
    pub fn hermiticity_residual(&self) -> f64 {
        self.asymmetry
    }

    /// Efficiency of the spin wave `s`, normalized to one excitation.
    pub fn efficiency_of(&self, s: &[Complex64]) -> Result<f64> {
        if s.len() != self.atoms() {
            return Err(Error::invalid("spin wave length does not match the array"));
        }
        let norm: f64 = s.iter().map(|z| z.norm_sqr()).sum();
        if !(norm > 0.0) {
            return Err(Error::invalid("spin wave must be non-zero"));
        }
        let mut total = Complex64::new(0.0, 0.0);
        for (i, si) in s.iter().enumerate() {
            let row: Complex64 = s.iter().enumerate().map(|(j, sj)| self.k[(i, j)] * sj).sum();
            total += si.conj() * row;
        }
        Ok(self.prefactor * total.re / norm)
    }

    /// Largest attainable efficiency and the spin wave that attains it.
    pub fn optimize(&self) -> Result<(f64, Vec<Complex64>)> {
        let evd = self
            .k
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
        let n = self.atoms();
        let s = evd.S().column_vector();
        let top = (0..n).max_by(|&a, &b| s[a].re.total_cmp(&s[b].re)).expect("non-empty form");
        let u = evd.U();
        let mut wave: Vec<Complex64> = (0..n).map(|i| u[(i, top)]).collect();
        normalize_phase(&mut wave);
        Ok((self.prefactor * s[top].re, wave))
    }
}

/// Unit norm with the largest component real and positive.
pub fn normalize_phase(s: &mut [Complex64]) {
    let norm = s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut lead = 0;
    for (i, z) in s.iter().enumerate() {
        if z.norm() > s[lead].norm() * (1.0 + 1e-12) {
            lead = i;
        }
    }
    let phase = s[lead].conj() / s[lead].norm();
    for z in s.iter_mut() {
        *z = *z * phase / norm;
    }
}

/// Result of an optimal-retrieval computation.
#[derive(Debug, Clone)]
pub struct RetrievalSolution {
    pub efficiency: f64,
    pub spin_wave: Vec<Complex64>,
    pub model: Model,
    pub contraction: Contraction,
    pub w0: f64,
    pub atoms: usize,
}

impl RetrievalSolution {
    /// `1 - eta`.
    pub fn error(&self) -> f64 {
        1.0 - self.efficiency
    }

    pub fn to_doc(&self) -> RetrievalDoc {
        RetrievalDoc {
            efficiency: self.efficiency,
            error: self.error(),
            model: self.model,
            contraction: self.contraction,
            w0: self.w0,
            atoms: self.atoms,
            spin_wave: self.spin_wave.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    /// CSV of the optimal spin wave: `site,re_s,im_s,abs_s`.
    pub fn write_spin_wave_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "site,re_s,im_s,abs_s")?;
        for (i, z) in self.spin_wave.iter().enumerate() {
            writeln!(w, "{i},{},{},{}", z.re, z.im, z.norm())?;
        }
        Ok(())
    }
}

/// Serializable form of a [`RetrievalSolution`]; complex numbers are `[re, im]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalDoc {
    pub efficiency: f64,
    pub error: f64,
    pub model: Model,
    pub contraction: Contraction,
    pub w0: f64,
    pub atoms: usize,
    pub spin_wave: Vec<[f64; 2]>,
}

/// Everything needed to evaluate retrieval from one geometry and mode.
#[derive(Debug, Clone)]
pub struct RetrievalProblem {
    pub spectrum: SpectralDecomposition,
    pub samples: ModeSamples,
    pub form: EfficiencyMatrix,
}

impl RetrievalProblem {
    pub fn new(g: &Geometry, model: Model, mode: &DetectionMode, contraction: Contraction) -> Result<Self> {
        let spectrum = eigendecompose(&interaction_matrix(g, model)?)?;
        Self::with_spectrum(spectrum, g, mode, contraction)
    }

    /// Reuses a decomposition, e.g. across a waist scan.
    pub fn with_spectrum(
        spectrum: SpectralDecomposition,
        g: &Geometry,
        mode: &DetectionMode,
        contraction: Contraction,
    ) -> Result<Self> {
        let samples = sample_mode(mode, g, spectrum.model())?;
        let form = efficiency_matrix(&spectrum, &samples, contraction)?;
        Ok(RetrievalProblem { spectrum, samples, form })
    }

    pub fn solve(&self, w0: f64) -> Result<RetrievalSolution> {
        let (efficiency, spin_wave) = self.form.optimize()?;
        Ok(RetrievalSolution {
            efficiency,
            atoms: spin_wave.len(),
            spin_wave,
            model: self.spectrum.model(),
            contraction: self.form.contraction(),
            w0,
        })
    }
}

/// Maximum retrieval efficiency of `g` into the two-sided mode `mode`.
pub fn max_efficiency(g: &Geometry, model: Model, mode: &DetectionMode, contraction: Contraction) -> Result<RetrievalSolution> {
    RetrievalProblem::new(g, model, mode, contraction)?.solve(mode.w0())
}
