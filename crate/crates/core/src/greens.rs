//! Free-space dyadic Green's tensor and the dimensionless dipole-dipole
//! interaction matrix.
//!
//! With lengths in resonant wavelengths (`k0 = 2 pi`) and rates in units of the
//! single-atom decay rate, the off-diagonal couplings are
//! `M_jl = (3 pi / k0) d_j* . G(r_j, r_l) . d_l` and the self terms are fixed to
//! `i/2`, so an isolated atom decays at exactly unit rate.

use std::io::{Read, Write};

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, Vec3, MIN_SEPARATION};
use crate::K0;

pub type Tensor3 = [[Complex64; 3]; 3];

/// Which atomic level structure couples to the light.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// One excited state with a fixed dipole orientation per atom.
    TwoLevel,
    /// Three degenerate excited states `|e_x>, |e_y>, |e_z>`.
    Isotropic,
}

impl Model {
    pub fn rows_per_atom(self) -> usize {
        match self {
            Model::TwoLevel => 1,
            Model::Isotropic => 3,
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-level" => Ok(Model::TwoLevel),
            "isotropic" => Ok(Model::Isotropic),
            other => Err(Error::invalid(format!("unknown model `{other}`"))),
        }
    }
}

/// Green's tensor `G0(r, r')` at the resonant wavevector.
pub fn greens_tensor(r: &Vec3, r_prime: &Vec3) -> Result<Tensor3> {
    let sep = [r[0] - r_prime[0], r[1] - r_prime[1], r[2] - r_prime[2]];
    let dist = (sep[0] * sep[0] + sep[1] * sep[1] + sep[2] * sep[2]).sqrt();
    if dist == 0.0 {
        return Err(Error::SingularPoint);
    }
    Ok(greens_from_separation(&sep, dist))
}

fn greens_from_separation(sep: &Vec3, dist: f64) -> Tensor3 {
    let i = Complex64::i();
    let kr = K0 * dist;
    let kr2 = kr * kr;
    let prefactor = (i * kr).exp() / (4.0 * std::f64::consts::PI * dist);
    let transverse = prefactor * (1.0 + (i * kr - 1.0) / kr2);
    let longitudinal = prefactor * (3.0 - 3.0 * i * kr - kr2) / kr2;
    let unit = [sep[0] / dist, sep[1] / dist, sep[2] / dist];
    let mut g = [[Complex64::new(0.0, 0.0); 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            g[a][b] = longitudinal * (unit[a] * unit[b]);
        }
        g[a][a] += transverse;
    }
    g
}

/// Dense complex-symmetric interaction matrix.
#[derive(Debug, Clone)]
pub struct InteractionMatrix {
    entries: Mat<Complex64>,
    model: Model,
    atoms: usize,
}

/// Coupling prefactor `3 pi / k0`.
const COUPLING: f64 = 3.0 * std::f64::consts::PI / K0;

/// Assembles the interaction matrix of `g` for the requested level structure.
///
/// Isotropic rows are ordered atom-major: row `3 j + alpha` is atom `j`,
/// orientation `alpha` in (x, y, z).
pub fn interaction_matrix(g: &Geometry, model: Model) -> Result<InteractionMatrix> {
    let pos = g.positions();
    let ori = g.orientations();
    let atoms = g.len();
    let per = model.rows_per_atom();
    let size = atoms * per;

    // Each row `j` holds the coupling blocks to atoms l > j; mirrored below.
    let blocks: Vec<Vec<Tensor3>> = (0..atoms)
        .into_par_iter()
        .map(|j| {
            ((j + 1)..atoms)
                .map(|l| {
                    let sep = [pos[j][0] - pos[l][0], pos[j][1] - pos[l][1], pos[j][2] - pos[l][2]];
                    let dist = (sep[0] * sep[0] + sep[1] * sep[1] + sep[2] * sep[2]).sqrt();
                    if dist <= MIN_SEPARATION {
                        return Err(Error::SingularGeometry {
                            first: j,
                            second: l,
                            min_separation: MIN_SEPARATION,
                        });
                    }
                    Ok(greens_from_separation(&sep, dist))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let half_i = Complex64::new(0.0, 0.5);
    let mut m = Mat::<Complex64>::zeros(size, size);
    for j in 0..atoms {
        for a in 0..per {
            m[(j * per + a, j * per + a)] = half_i;
        }
        for (offset, tensor) in blocks[j].iter().enumerate() {
            let l = j + 1 + offset;
            match model {
                Model::TwoLevel => {
                    let v = COUPLING * project(tensor, &ori[j], &ori[l]);
                    m[(j, l)] = v;
                    m[(l, j)] = v;
                }
                Model::Isotropic => {
                    for a in 0..3 {
                        for b in 0..3 {
                            let v = COUPLING * tensor[a][b];
                            m[(3 * j + a, 3 * l + b)] = v;
                            m[(3 * l + b, 3 * j + a)] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(InteractionMatrix { entries: m, model, atoms })
}

fn project(t: &Tensor3, left: &Vec3, right: &Vec3) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..3 {
        for b in 0..3 {
            acc += t[a][b] * (left[a] * right[b]);
        }
    }
    acc
}

impl InteractionMatrix {
    /// Wraps an arbitrary square matrix; used by tests and tools that build
    /// couplings elsewhere. Symmetry is checked later by the spectral step.
    pub fn from_entries(entries: Mat<Complex64>, model: Model) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() % model.rows_per_atom() != 0 {
            return Err(Error::invalid("interaction matrix has an incompatible shape"));
        }
        let atoms = entries.nrows() / model.rows_per_atom();
        Ok(InteractionMatrix { entries, model, atoms })
    }

    pub fn entries(&self) -> &Mat<Complex64> {
        &self.entries
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    /// Rows that hold the amplitude loaded from the stored spin wave: the atom
    /// rows for two-level atoms, the `e_x` rows for isotropic atoms.
    pub fn spin_rows(&self) -> Vec<usize> {
        let per = self.model.rows_per_atom();
        (0..self.atoms).map(|j| j * per).collect()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        let mut max: f64 = 0.0;
        for j in 0..self.size() {
            for i in 0..self.size() {
                max = max.max(self.entries[(i, j)].norm());
            }
        }
        max
    }

    /// Writes the matrix as a debug dump: magic `AMIM`, model byte
    /// (0 two-level, 1 isotropic), size as little-endian u64, then row-major
    /// (re, im) little-endian f64 pairs.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"AMIM")?;
        w.write_all(&[match self.model {
            Model::TwoLevel => 0u8,
            Model::Isotropic => 1u8,
        }])?;
        w.write_all(&(self.size() as u64).to_le_bytes())?;
        for i in 0..self.size() {
            for j in 0..self.size() {
                let z = self.entries[(i, j)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"AMIM" {
            return Err(Error::invalid("not an interaction-matrix dump"));
        }
        let mut model = [0u8; 1];
        r.read_exact(&mut model)?;
        let model = match model[0] {
            0 => Model::TwoLevel,
            1 => Model::Isotropic,
            other => return Err(Error::invalid(format!("unknown model byte {other}"))),
        };
        let mut size = [0u8; 8];
        r.read_exact(&mut size)?;
        let size = u64::from_le_bytes(size) as usize;
        let mut m = Mat::<Complex64>::zeros(size, size);
        let mut buf = [0u8; 16];
        for i in 0..size {
            for j in 0..size {
                r.read_exact(&mut buf)?;
                let re = f64::from_le_bytes(buf[..8].try_into().unwrap());
                let im = f64::from_le_bytes(buf[8..].try_into().unwrap());
                m[(i, j)] = Complex64::new(re, im);
            }
        }
        InteractionMatrix::from_entries(m, model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_square_array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn reciprocity() {
        let a = [0.13, -0.4, 0.22];
        let b = [-0.7, 0.05, 0.31];
        let gab = greens_tensor(&a, &b).unwrap();
        let gba = greens_tensor(&b, &a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((gab[i][j] - gba[j][i]).norm() <= 1e-12 * gab[i][j].norm().max(1e-300));
            }
        }
    }

    #[test]
    fn longitudinal_component_on_axis() {
        // Substituting R_hat R_hat = x x into the tensor:
        // G_xx = e^{ikR}/(4 pi R) * 2 (1 - i k R) / (k R)^2.
        for &r in &[0.1, 0.37, 1.0, 2.5] {
            let g = greens_tensor(&[r, 0.0, 0.0], &[0.0; 3]).unwrap();
            let kr = K0 * r;
            let expected = (c(0.0, kr)).exp() / (4.0 * std::f64::consts::PI * r) * (c(2.0, -2.0 * kr) / (kr * kr));
            assert!((g[0][0] - expected).norm() < 1e-13 * expected.norm());
            assert!(g[0][1].norm() < 1e-16 && g[1][2].norm() < 1e-16);
        }
    }

    #[test]
    fn far_field_transverse_amplitude() {
        let r = 1e3;
        let g = greens_tensor(&[r, 0.0, 0.0], &[0.0; 3]).unwrap();
        let target = 1.0 / (4.0 * std::f64::consts::PI);
        assert!((g[1][1].norm() * r - target).abs() < 1e-4 * target);
    }

    #[test]
    fn coincident_points_fail() {
        assert!(matches!(greens_tensor(&[1.0; 3], &[1.0; 3]), Err(Error::SingularPoint)));
    }

    #[test]
    fn single_atom_matrix() {
        let g = build_square_array(1, 0.6).unwrap();
        let m = interaction_matrix(&g, Model::TwoLevel).unwrap();
        assert_eq!(m.size(), 1);
        assert_eq!(m.entries()[(0, 0)], c(0.0, 0.5));
        let iso = interaction_matrix(&g, Model::Isotropic).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let expected = if a == b { c(0.0, 0.5) } else { c(0.0, 0.0) };
                assert_eq!(iso.entries()[(a, b)], expected);
            }
        }
    }

    #[test]
    fn symmetric_with_fixed_diagonal() {
        let g = build_square_array(3, 0.45).unwrap();
        for model in [Model::TwoLevel, Model::Isotropic] {
            let m = interaction_matrix(&g, model).unwrap();
            let e = m.entries();
            for i in 0..m.size() {
                assert_eq!(e[(i, i)], c(0.0, 0.5));
                for j in 0..m.size() {
                    assert_eq!(e[(i, j)], e[(j, i)]);
                }
            }
        }
    }

    #[test]
    fn distant_pair_is_weakly_coupled() {
        let g = Geometry::from_positions(vec![[0.0; 3], [1e3, 0.0, 0.0]], vec![[1.0, 0.0, 0.0]; 2]).unwrap();
        let m = interaction_matrix(&g, Model::TwoLevel).unwrap();
        assert!(m.entries()[(0, 1)].norm() < 1e-3);
    }

    #[test]
    fn two_level_is_xx_block_of_isotropic() {
        let g = build_square_array(2, 0.6).unwrap();
        let tl = interaction_matrix(&g, Model::TwoLevel).unwrap();
        let iso = interaction_matrix(&g, Model::Isotropic).unwrap();
        for j in 0..4 {
            for l in 0..4 {
                assert_eq!(tl.entries()[(j, l)], iso.entries()[(3 * j, 3 * l)]);
            }
        }
    }

    #[test]
    fn binary_dump_round_trip() {
        let g = build_square_array(2, 0.5).unwrap();
        let m = interaction_matrix(&g, Model::Isotropic).unwrap();
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 1 + 8 + 16 * 144);
        let back = InteractionMatrix::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.model(), Model::Isotropic);
        assert_eq!(back.entries(), m.entries());
    }
}
