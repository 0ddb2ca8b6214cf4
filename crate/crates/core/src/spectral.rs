//! Eigendecomposition of the complex-symmetric interaction matrix with
//! bilinear (`v^T v = 1`) normalization.
//!
//! A complex-symmetric `M` is diagonalized as `M = V diag(lambda) V^T` with
//! `V^T V = 1`, no conjugation anywhere. Eigenvectors of distinct eigenvalues
//! are automatically bilinear-orthogonal; inside a degenerate eigenspace the
//! general-purpose solver returns an arbitrary basis, so those clusters are
//! re-orthogonalized with a pivoted bilinear Gram-Schmidt.

use std::fmt;

use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::greens::{InteractionMatrix, Model};

/// Bilinear overlap above which two normalized solver vectors are treated as
/// belonging to one degenerate eigenspace.
const CLUSTER_OVERLAP: f64 = 1e-9;
/// Smallest acceptable `|u^T u|` for a unit-norm vector.
const MIN_BILINEAR_NORM: f64 = 1e-8;

pub const BILINEAR_TOLERANCE: f64 = 1e-8;
pub const COMPLETENESS_TOLERANCE: f64 = 1e-8;
pub const DECAY_TOLERANCE: f64 = 1e-10;
pub const TRACE_TOLERANCE: f64 = 1e-9;

/// Numerical health of a decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralDiagnostics {
    /// `max |V^T V - 1|`.
    pub bilinear: f64,
    /// `max |V V^T - 1|`.
    pub completeness: f64,
    /// `max |V diag(lambda) V^T - M| / max |M|`.
    pub reconstruction: f64,
    /// Smallest `Im lambda`, i.e. half the slowest decay rate.
    pub min_decay: f64,
    /// `|sum lambda - tr M| / |tr M|`.
    pub trace: f64,
    /// Number of degenerate clusters that needed re-orthogonalization.
    pub degenerate_clusters: usize,
}

impl SpectralDiagnostics {
    pub fn within_tolerance(&self) -> bool {
        self.bilinear < BILINEAR_TOLERANCE
            && self.completeness < COMPLETENESS_TOLERANCE
            && self.min_decay > -DECAY_TOLERANCE
            && self.trace < TRACE_TOLERANCE
    }
}

impl fmt::Display for SpectralDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "bilinear {:.2e}, completeness {:.2e}, reconstruction {:.2e}, min Im(lambda) {:.3e}, trace {:.2e}",
            self.bilinear, self.completeness, self.reconstruction, self.min_decay, self.trace
        )
    }
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    model: Model,
    eigenvalues: Vec<Complex64>,
    /// Columns are the bilinear-normalized eigenvectors.
    vectors: Mat<Complex64>,
    diagnostics: SpectralDiagnostics,
}

/// Diagonalizes `m`, failing with [`Error::SpectralInvariant`] when the
/// result violates the bilinear, completeness, decay or trace checks.
pub fn eigendecompose(m: &InteractionMatrix) -> Result<SpectralDecomposition> {
    let s = eigendecompose_unchecked(m)?;
    if !s.diagnostics.within_tolerance() {
        return Err(Error::SpectralInvariant(Box::new(s.diagnostics)));
    }
    Ok(s)
}

/// Like [`eigendecompose`] but returns the decomposition regardless of its
/// diagnostics. Near-defective spectra still fail.
pub fn eigendecompose_unchecked(m: &InteractionMatrix) -> Result<SpectralDecomposition> {
    let a = m.entries();
    let n = a.nrows();
    if n == 0 {
        return Err(Error::invalid("empty interaction matrix"));
    }
    let evd = a.eigen().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let u = evd.U();
    let s = evd.S().column_vector();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].im.total_cmp(&s[j].im).then(s[i].re.total_cmp(&s[j].re)));

    let mut columns: Vec<Vec<Complex64>> = order
        .iter()
        .map(|&k| {
            let col: Vec<Complex64> = (0..n).map(|i| u[(i, k)]).collect();
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            col.into_iter().map(|z| z / norm).collect()
        })
        .collect();
    let mut eigenvalues: Vec<Complex64> = order.iter().map(|&k| s[k]).collect();

    let clusters = degenerate_clusters(&columns);
    let mut degenerate = 0;
    for cluster in &clusters {
        if cluster.len() > 1 {
            degenerate += 1;
        }
        orthonormalize_cluster(&mut columns, cluster)?;
        if cluster.len() > 1 {
            for &k in cluster {
                eigenvalues[k] = rayleigh(a, &columns[k]);
            }
        }
    }
    for col in &mut columns {
        fix_sign(col);
    }

    let vectors = Mat::from_fn(n, n, |i, j| columns[j][i]);
    let diagnostics = diagnose(a, &eigenvalues, &vectors, degenerate);
    Ok(SpectralDecomposition {
        model: m.model(),
        eigenvalues,
        vectors,
        diagnostics,
    })
}

fn bilinear(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Groups columns connected by a bilinear overlap above [`CLUSTER_OVERLAP`].
fn degenerate_clusters(columns: &[Vec<Complex64>]) -> Vec<Vec<usize>> {
    let n = columns.len();
    let u = Mat::from_fn(n, n, |i, j| columns[j][i]);
    let gram = u.transpose() * &u;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if gram[(i, j)].norm() > CLUSTER_OVERLAP {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = find(&mut parent, i);
        groups[r].push(i);
    }
    groups.into_iter().filter(|g| !g.is_empty()).collect()
}

/// Pivoted bilinear Gram-Schmidt over the columns in `cluster`. The member
/// with the largest remaining `|u^T u|` is normalized first and projected out
/// of the others.
fn orthonormalize_cluster(columns: &mut [Vec<Complex64>], cluster: &[usize]) -> Result<()> {
    let mut pending: Vec<usize> = cluster.to_vec();
    while !pending.is_empty() {
        let (pos, best) = pending
            .iter()
            .enumerate()
            .map(|(p, &k)| {
                let scale: f64 = columns[k].iter().map(|z| z.norm_sqr()).sum();
                (p, bilinear(&columns[k], &columns[k]).norm() / scale)
            })
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("pending is non-empty");
        if best < MIN_BILINEAR_NORM {
            let mut indices = pending.clone();
            indices.sort_unstable();
            return Err(Error::DefectiveSpectrum { indices });
        }
        let k = pending.swap_remove(pos);
        let root = bilinear(&columns[k], &columns[k]).sqrt();
        for z in columns[k].iter_mut() {
            *z /= root;
        }
        let pivot = columns[k].clone();
        for &other in &pending {
            let overlap = bilinear(&pivot, &columns[other]);
            for (z, p) in columns[other].iter_mut().zip(&pivot) {
                *z -= overlap * p;
            }
        }
    }
    Ok(())
}

fn rayleigh(a: &Mat<Complex64>, v: &[Complex64]) -> Complex64 {
    let n = v.len();
    let mut total = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for i in 0..n {
            row += a[(i, j)] * v[i];
        }
        total += row * v[j];
    }
    total
}

/// Fixes the remaining sign freedom: the largest-magnitude component gets a
/// non-negative real part.
fn fix_sign(v: &mut [Complex64]) {
    let mut best = 0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > v[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    if v[best].re < 0.0 {
        for z in v.iter_mut() {
            *z = -*z;
        }
    }
}

fn max_offset_from_identity(m: &Mat<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((m[(i, j)] - target).norm());
        }
    }
    worst
}

fn diagnose(a: &Mat<Complex64>, lambda: &[Complex64], v: &Mat<Complex64>, degenerate: usize) -> SpectralDiagnostics {
    let n = lambda.len();
    let bilinear = max_offset_from_identity(&(v.transpose() * v));
    let completeness = max_offset_from_identity(&(v * v.transpose()));
    let scaled = Mat::from_fn(n, n, |i, j| v[(i, j)] * lambda[j]);
    let rebuilt = &scaled * v.transpose();
    let mut scale: f64 = 0.0;
    let mut worst: f64 = 0.0;
    let mut trace = Complex64::new(0.0, 0.0);
    for j in 0..n {
        trace += a[(j, j)];
        for i in 0..n {
            scale = scale.max(a[(i, j)].norm());
            worst = worst.max((rebuilt[(i, j)] - a[(i, j)]).norm());
        }
    }
    let sum: Complex64 = lambda.iter().sum();
    SpectralDiagnostics {
        bilinear,
        completeness,
        reconstruction: worst / scale,
        min_decay: lambda.iter().map(|l| l.im).fold(f64::INFINITY, f64::min),
        trace: (sum - trace).norm() / trace.norm(),
        degenerate_clusters: degenerate,
    }
}

impl SpectralDecomposition {
    pub fn model(&self) -> Model {
        self.model
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvalues ordered by increasing `Im lambda`.
    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    /// Eigenvectors as columns, `V^T V = 1`.
    pub fn vectors(&self) -> &Mat<Complex64> {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> Vec<Complex64> {
        (0..self.len()).map(|i| self.vectors[(i, k)]).collect()
    }

    pub fn diagnostics(&self) -> &SpectralDiagnostics {
        &self.diagnostics
    }

    /// Expansion coefficients `c = V^T x` of a state in the eigenbasis.
    pub fn coefficients(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        (0..n)
            .map(|k| (0..n).map(|i| self.vectors[(i, k)] * x[i]).sum())
            .collect()
    }

    /// `V c`, the inverse of [`coefficients`](Self::coefficients).
    pub fn synthesize(&self, c: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        (0..n)
            .map(|i| (0..n).map(|k| self.vectors[(i, k)] * c[k]).sum())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_square_array;
    use crate::greens::interaction_matrix;

    #[test]
    fn single_atom_eigenvalue() {
        let g = build_square_array(1, 0.6).unwrap();
        let s = eigendecompose(&interaction_matrix(&g, Model::TwoLevel).unwrap()).unwrap();
        assert!((s.eigenvalues()[0] - Complex64::new(0.0, 0.5)).norm() < 1e-14);
        assert!((s.vectors()[(0, 0)] - 1.0).norm() < 1e-14);
    }

    #[test]
    fn pair_has_symmetric_and_antisymmetric_modes() {
        let g = build_square_array(2, 0.6).unwrap();
        let m = interaction_matrix(&g, Model::TwoLevel).unwrap();
        let s = eigendecompose(&m).unwrap();
        let d = s.diagnostics();
        assert!(d.bilinear < 1e-12 && d.completeness < 1e-12 && d.reconstruction < 1e-12);
        // The fully symmetric mode of the 2x2 plaquette has eigenvalue M00 + M01 + M02 + M03.
        let a = m.entries();
        let sym: Complex64 = (0..4).map(|j| a[(0, j)]).sum();
        assert!(s.eigenvalues().iter().any(|l| (l - sym).norm() < 1e-12));
    }

    #[test]
    fn degenerate_isotropic_spectrum_is_orthonormalized() {
        let g = build_square_array(3, 0.6).unwrap();
        let m = interaction_matrix(&g, Model::Isotropic).unwrap();
        let s = eigendecompose(&m).unwrap();
        assert!(s.diagnostics().degenerate_clusters > 0);
        assert!(s.diagnostics().bilinear < 1e-10);
        assert!(s.diagnostics().reconstruction < 1e-10);
    }

    #[test]
    fn sign_convention_is_applied() {
        let g = build_square_array(3, 0.45).unwrap();
        let s = eigendecompose(&interaction_matrix(&g, Model::TwoLevel).unwrap()).unwrap();
        for k in 0..s.len() {
            let v = s.vector(k);
            let big = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let lead = v.iter().find(|z| z.norm() >= big * (1.0 - 1e-12)).unwrap();
            assert!(lead.re >= 0.0);
        }
    }

    #[test]
    fn coefficients_round_trip() {
        let g = build_square_array(3, 0.6).unwrap();
        let s = eigendecompose(&interaction_matrix(&g, Model::TwoLevel).unwrap()).unwrap();
        let x: Vec<Complex64> = (0..9).map(|i| Complex64::new(i as f64, 1.0 - i as f64)).collect();
        let back = s.synthesize(&s.coefficients(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn exact_degeneracy_is_rejected_when_defective() {
        // [[1, i], [i, -1]] is complex symmetric and nilpotent: a Jordan block.
        let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => Complex64::new(1.0, 0.0),
            (1, 1) => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, 1.0),
        });
        let m = InteractionMatrix::from_entries(a, Model::TwoLevel).unwrap();
        assert!(eigendecompose(&m).is_err());
    }
}
