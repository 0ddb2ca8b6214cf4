//! Atom configurations: perfect square lattices, lattices with holes and
//! lattices with Gaussian in-plane position disorder.
//!
//! Lengths are in units of the resonant wavelength. Lattices are centered on
//! the origin in the `z = 0` plane so that the detection beam focus sits on
//! the array center.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Minimum allowed distance between two atoms.
pub const MIN_SEPARATION: f64 = 1e-9;

const UNIT_TOLERANCE: f64 = 1e-12;

/// Square-lattice metadata shared by every lattice-derived geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    /// Linear size: the lattice has `n * n` sites.
    pub n: usize,
    /// Lattice constant.
    pub d: f64,
}

impl Lattice {
    pub fn sites(&self) -> usize {
        self.n * self.n
    }

    /// Position of lattice site `site` (row-major, y outer).
    pub fn site_position(&self, site: usize) -> Vec3 {
        let half = (self.n as f64 - 1.0) / 2.0;
        let ix = site % self.n;
        let iy = site / self.n;
        [
            (ix as f64 - half) * self.d,
            (iy as f64 - half) * self.d,
            0.0,
        ]
    }
}

/// An immutable atom configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    positions: Vec<Vec3>,
    orientations: Vec<Vec3>,
    lattice: Option<Lattice>,
    /// Lattice site of every atom (new index -> old site).
    sites: Vec<usize>,
    holes: Vec<usize>,
    sigma: f64,
    disorder_seed: Option<u64>,
}

/// Builds an `n x n` square array with lattice constant `d`, all dipoles along x.
pub fn build_square_array(n: usize, d: f64) -> Result<Geometry> {
    if n == 0 {
        return Err(Error::invalid("lattice size N must be positive"));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::invalid(format!("lattice constant must be positive, got {d}")));
    }
    let lattice = Lattice { n, d };
    let positions: Vec<Vec3> = (0..lattice.sites()).map(|s| lattice.site_position(s)).collect();
    Ok(Geometry {
        orientations: vec![[1.0, 0.0, 0.0]; positions.len()],
        sites: (0..positions.len()).collect(),
        positions,
        lattice: Some(lattice),
        holes: Vec::new(),
        sigma: 0.0,
        disorder_seed: None,
    })
}

/// Removes the atoms at the given indices of `g`.
///
/// The removed lattice sites are recorded in the hole set; surviving atoms keep
/// their relative order, and [`Geometry::site_of`] maps them back to sites.
pub fn remove_holes(g: &Geometry, holes: &[usize]) -> Result<Geometry> {
    let mut remove = vec![false; g.len()];
    for &h in holes {
        if h >= g.len() {
            return Err(Error::invalid(format!(
                "hole index {h} out of range for {} atoms",
                g.len()
            )));
        }
        if remove[h] {
            return Err(Error::invalid(format!("hole index {h} given twice")));
        }
        remove[h] = true;
    }
    let mut out = g.clone();
    out.positions.clear();
    out.orientations.clear();
    out.sites.clear();
    for i in 0..g.len() {
        if remove[i] {
            out.holes.push(g.sites[i]);
        } else {
            out.positions.push(g.positions[i]);
            out.orientations.push(g.orientations[i]);
            out.sites.push(g.sites[i]);
        }
    }
    out.holes.sort_unstable();
    Ok(out)
}

/// Displaces every atom in-plane by independent Gaussian draws of standard
/// deviation `sigma`. Draws come from ChaCha8 seeded with `seed`, x then y per
/// atom in index order.
pub fn apply_position_disorder(g: &Geometry, sigma: f64, seed: u64) -> Result<Geometry> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("disorder sigma must be >= 0, got {sigma}")));
    }
    let mut out = g.clone();
    out.sigma = sigma;
    out.disorder_seed = Some(seed);
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in out.positions.iter_mut() {
        p[0] += normal.sample(&mut rng);
        p[1] += normal.sample(&mut rng);
    }
    Ok(out)
}

impl Geometry {
    /// Geometry from explicit positions and dipole orientations (no lattice).
    pub fn from_positions(positions: Vec<Vec3>, orientations: Vec<Vec3>) -> Result<Self> {
        if positions.len() != orientations.len() {
            return Err(Error::invalid("positions and orientations differ in length"));
        }
        let g = Geometry {
            sites: (0..positions.len()).collect(),
            positions,
            orientations,
            lattice: None,
            holes: Vec::new(),
            sigma: 0.0,
            disorder_seed: None,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn orientations(&self) -> &[Vec3] {
        &self.orientations
    }

    pub fn lattice(&self) -> Option<Lattice> {
        self.lattice
    }

    /// Removed lattice sites, sorted.
    pub fn holes(&self) -> &[usize] {
        &self.holes
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn disorder_seed(&self) -> Option<u64> {
        self.disorder_seed
    }

    /// Lattice site of atom `index`.
    pub fn site_of(&self, index: usize) -> usize {
        self.sites[index]
    }

    /// Current atom index of lattice site `site`, if the site is occupied.
    pub fn index_of_site(&self, site: usize) -> Option<usize> {
        self.sites.binary_search(&site).ok()
    }

    /// Same geometry with atoms reordered: atom `i` of the result is atom
    /// `perm[i]` of `self`. Lattice bookkeeping is dropped.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        if perm.len() != self.len() || perm.iter().any(|&p| p >= self.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid("not a permutation of the atom indices"));
        }
        Geometry::from_positions(
            perm.iter().map(|&p| self.positions[p]).collect(),
            perm.iter().map(|&p| self.orientations[p]).collect(),
        )
    }

    /// Closest pair of atoms, if any.
    pub fn closest_pair(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let dist = distance(&self.positions[i], &self.positions[j]);
                if best.map_or(true, |b| dist < b.2) {
                    best = Some((i, j, dist));
                }
            }
        }
        best
    }

    /// Checks unit orientations, pairwise separation and lattice bookkeeping.
    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.orientations.iter().enumerate() {
            let norm = (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt();
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::invalid(format!("orientation of atom {i} has norm {norm}")));
            }
        }
        if let Some((first, second, dist)) = self.closest_pair() {
            if dist <= MIN_SEPARATION {
                return Err(Error::SingularGeometry {
                    first,
                    second,
                    min_separation: MIN_SEPARATION,
                });
            }
        }
        if let Some(l) = self.lattice {
            if self.len() + self.holes.len() != l.sites() {
                return Err(Error::invalid("atom count does not match lattice minus holes"));
            }
        }
        Ok(())
    }

    pub fn to_doc(&self, include_positions: bool) -> GeometryDoc {
        let lattice = self.lattice.unwrap_or(Lattice { n: 0, d: 0.0 });
        GeometryDoc {
            n: lattice.n,
            d: lattice.d,
            holes: self.holes.clone(),
            sigma: self.sigma,
            seed: self.disorder_seed,
            positions: include_positions.then(|| self.positions.clone()),
        }
    }

    /// Rebuilds a geometry from its JSON document. Positions, when present,
    /// replace the regenerated lattice positions.
    pub fn from_doc(doc: &GeometryDoc) -> Result<Self> {
        if doc.n == 0 {
            let positions = doc
                .positions
                .clone()
                .ok_or_else(|| Error::invalid("geometry document needs N or positions"))?;
            let n = positions.len();
            return Geometry::from_positions(positions, vec![[1.0, 0.0, 0.0]; n]);
        }
        let lattice = build_square_array(doc.n, doc.d)?;
        let mut g = remove_holes(&lattice, &doc.holes)?;
        if doc.sigma > 0.0 {
            let seed = doc
                .seed
                .ok_or_else(|| Error::invalid("disordered geometry document needs a seed"))?;
            g = apply_position_disorder(&g, doc.sigma, seed)?;
        } else {
            g.disorder_seed = doc.seed;
        }
        if let Some(p) = &doc.positions {
            if p.len() != g.len() {
                return Err(Error::invalid(format!(
                    "document lists {} positions for {} atoms",
                    p.len(),
                    g.len()
                )));
            }
            g.positions = p.clone();
        }
        g.validate()?;
        Ok(g)
    }
}

/// JSON form of a geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryDoc {
    #[serde(rename = "N", default)]
    pub n: usize,
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub holes: Vec<usize>,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Vec3>>,
}

pub(crate) fn distance(a: &Vec3, b: &Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_is_at_origin() {
        let g = build_square_array(1, 0.6).unwrap();
        assert_eq!(g.positions(), &[[0.0, 0.0, 0.0]]);
    }

    #[test]
    fn two_by_two_is_symmetric() {
        let g = build_square_array(2, 0.6).unwrap();
        assert_eq!(g.len(), 4);
        for p in g.positions() {
            assert!((p[0].abs() - 0.3).abs() < 1e-15);
            assert!((p[1].abs() - 0.3).abs() < 1e-15);
            assert_eq!(p[2], 0.0);
        }
        let sx: f64 = g.positions().iter().map(|p| p[0]).sum();
        let sy: f64 = g.positions().iter().map(|p| p[1]).sum();
        assert_eq!((sx, sy), (0.0, 0.0));
    }

    #[test]
    fn ten_by_ten_extent() {
        let g = build_square_array(10, 0.6).unwrap();
        assert_eq!(g.len(), 100);
        let max = g
            .positions()
            .iter()
            .flat_map(|p| [p[0].abs(), p[1].abs()])
            .fold(0.0, f64::max);
        assert!((max - 2.7).abs() < 1e-12);
        assert!(g.orientations().iter().all(|o| *o == [1.0, 0.0, 0.0]));
    }

    #[test]
    fn rejects_bad_lattice_arguments() {
        assert!(matches!(build_square_array(0, 0.6), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_square_array(3, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_square_array(3, -1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn holes_bookkeeping() {
        let g = build_square_array(10, 0.6).unwrap();
        assert_eq!(remove_holes(&g, &[]).unwrap(), g);
        let holes: Vec<usize> = (0..20).map(|k| 5 * k).collect();
        let h = remove_holes(&g, &holes).unwrap();
        assert_eq!(h.len(), 80);
        assert_eq!(h.holes(), holes.as_slice());
        assert_eq!(h.index_of_site(5), None);
        assert_eq!(h.index_of_site(6), Some(4));
        assert_eq!(h.site_of(4), 6);
        h.validate().unwrap();
        assert!(remove_holes(&g, &[3, 3]).is_err());
        assert!(remove_holes(&g, &[100]).is_err());
    }

    #[test]
    fn zero_disorder_is_identity() {
        let g = build_square_array(4, 0.6).unwrap();
        for seed in [0, 1, 99] {
            let d = apply_position_disorder(&g, 0.0, seed).unwrap();
            assert_eq!(d.positions(), g.positions());
        }
        assert!(apply_position_disorder(&g, -0.1, 1).is_err());
    }

    #[test]
    fn disorder_is_seeded_and_in_plane() {
        let g = build_square_array(6, 0.6).unwrap();
        let a = apply_position_disorder(&g, 0.03, 7).unwrap();
        let b = apply_position_disorder(&g, 0.03, 7).unwrap();
        let c = apply_position_disorder(&g, 0.03, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.positions(), c.positions());
        assert!(a.positions().iter().all(|p| p[2] == 0.0));
    }

    #[test]
    fn disorder_sample_std_matches_sigma() {
        let d = 0.6;
        let sigma = 0.05 * d;
        let g = build_square_array(100, d).unwrap();
        let shaken = apply_position_disorder(&g, sigma, 2024).unwrap();
        for axis in 0..2 {
            let deltas: Vec<f64> = shaken
                .positions()
                .iter()
                .zip(g.positions())
                .map(|(a, b)| a[axis] - b[axis])
                .collect();
            let n = deltas.len() as f64;
            let mean = deltas.iter().sum::<f64>() / n;
            let var = deltas.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((var.sqrt() / sigma - 1.0).abs() < 0.02, "axis {axis}: {}", var.sqrt());
        }
    }

    #[test]
    fn json_round_trip_regenerates_positions() {
        let g = build_square_array(5, 0.6).unwrap();
        let g = remove_holes(&g, &[0, 12]).unwrap();
        let g = apply_position_disorder(&g, 0.01, 42).unwrap();
        let text = serde_json::to_string(&g.to_doc(false)).unwrap();
        let back = Geometry::from_doc(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, g);
        let with_positions: GeometryDoc = serde_json::from_str(&serde_json::to_string(&g.to_doc(true)).unwrap()).unwrap();
        assert_eq!(Geometry::from_doc(&with_positions).unwrap().positions(), g.positions());
    }

    #[test]
    fn duplicate_positions_are_flagged() {
        let r = Geometry::from_positions(vec![[0.0; 3], [0.0; 3]], vec![[1.0, 0.0, 0.0]; 2]);
        assert!(matches!(r, Err(Error::SingularGeometry { .. })));
    }
}
