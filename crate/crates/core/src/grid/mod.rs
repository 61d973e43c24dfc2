//! Box/torus domains, collocation grids, and the spectral basis of `Δ − I`.

mod basis;
mod field;

pub use basis::{build_basis, ModeCoefficients, Norms, SpectralBasis};
pub use field::{inner_l2, ScalarField, VectorField};

use crate::error::{Error, Result};

/// Boundary condition selecting the eigenbasis: homogeneous Neumann on a
/// bounded box, or the flat torus.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Boundary {
    Neumann,
    Periodic,
}

/// An axis-aligned box `[0,L_1]×...×[0,L_m]` with a midpoint-shifted uniform
/// grid per axis. The midpoint shift makes the discrete cosine/Fourier
/// transforms exactly orthogonal under uniform quadrature weights.
#[derive(Clone, PartialEq, Debug)]
pub struct BoxDomain {
    lengths: Vec<f64>,
    resolution: Vec<usize>,
    boundary: Boundary,
}

impl BoxDomain {
    pub fn new(lengths: Vec<f64>, resolution: Vec<usize>, boundary: Boundary) -> Result<Self> {
        if lengths.is_empty() || lengths.len() != resolution.len() {
            return Err(Error::BadDomain(format!(
                "need matching nonempty axis lists, got {} lengths and {} resolutions",
                lengths.len(),
                resolution.len()
            )));
        }
        for (a, &l) in lengths.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::BadDomain(format!("lengths[{a}] = {l} must be positive")));
            }
        }
        for (a, &r) in resolution.iter().enumerate() {
            if r < 4 {
                return Err(Error::BadDomain(format!("resolution[{a}] = {r} must be >= 4")));
            }
        }
        Ok(Self { lengths, resolution, boundary })
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn num_points(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Uniform quadrature weight attached to every grid point.
    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.num_points() as f64
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.resolution[axis] as f64
    }

    /// Coordinate of grid index `i` on `axis`: `(i + 1/2) h`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        (i as f64 + 0.5) * self.spacing(axis)
    }

    /// Writes the coordinates of the flattened point index into `out`.
    /// Flattening is axis-0 fastest: `p = i_1 + N_1 (i_2 + N_2 i_3)`.
    pub fn point_into(&self, mut p: usize, out: &mut [f64]) {
        for a in 0..self.dim() {
            let n = self.resolution[a];
            out[a] = self.coord(a, p % n);
            p /= n;
        }
    }

    pub fn same_grid(&self, other: &BoxDomain) -> bool {
        self == other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_domains() {
        assert!(BoxDomain::new(vec![], vec![], Boundary::Neumann).is_err());
        assert!(BoxDomain::new(vec![1.0], vec![3], Boundary::Neumann).is_err());
        assert!(BoxDomain::new(vec![-1.0], vec![8], Boundary::Neumann).is_err());
        assert!(BoxDomain::new(vec![1.0, 1.0], vec![8], Boundary::Neumann).is_err());
    }

    #[test]
    fn grid_geometry() {
        let d = BoxDomain::new(vec![2.0, 1.0], vec![4, 8], Boundary::Neumann).unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(d.num_points(), 32);
        assert!((d.volume() - 2.0).abs() < 1e-15);
        assert!((d.cell_volume() - 2.0 / 32.0).abs() < 1e-15);
        assert!((d.coord(0, 0) - 0.25).abs() < 1e-15);
        let mut x = [0.0; 2];
        d.point_into(5, &mut x); // i1 = 1, i2 = 1
        assert!((x[0] - 0.75).abs() < 1e-15);
        assert!((x[1] - 0.1875).abs() < 1e-15);
    }
}
