use super::BoxDomain;
use crate::error::{Error, Result};

/// Real-valued samples on the collocation grid.
#[derive(Clone, Debug)]
pub struct ScalarField {
    domain: BoxDomain,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(domain: &BoxDomain) -> Self {
        Self { domain: domain.clone(), data: vec![0.0; domain.num_points()] }
    }

    pub fn from_fn(domain: &BoxDomain, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut s = Self::zeros(domain);
        let mut x = vec![0.0; domain.dim()];
        for p in 0..domain.num_points() {
            domain.point_into(p, &mut x);
            s.data[p] = f(&x);
        }
        s
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn integral(&self) -> f64 {
        self.domain.cell_volume() * self.data.iter().sum::<f64>()
    }
}

/// Vector-valued samples on the collocation grid, component-interleaved:
/// `data[p*ncomp + c]`. Magnetization uses `ncomp = 3`; a current density on
/// an m-dimensional domain uses `ncomp = m`; Jacobians use `ncomp = 3m` with
/// layout `c*m + a` for `∂u_c/∂x_a`.
#[derive(Clone, Debug)]
pub struct VectorField {
    domain: BoxDomain,
    ncomp: usize,
    data: Vec<f64>,
}

impl VectorField {
    pub fn zeros(domain: &BoxDomain, ncomp: usize) -> Self {
        assert!(ncomp >= 1);
        Self { domain: domain.clone(), ncomp, data: vec![0.0; ncomp * domain.num_points()] }
    }

    /// Samples `f(x, out)` at every grid point; `out` has `ncomp` slots.
    pub fn from_fn(domain: &BoxDomain, ncomp: usize, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let mut v = Self::zeros(domain, ncomp);
        let mut x = vec![0.0; domain.dim()];
        for p in 0..domain.num_points() {
            domain.point_into(p, &mut x);
            f(&x, &mut v.data[p * ncomp..(p + 1) * ncomp]);
        }
        v
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn num_points(&self) -> usize {
        self.domain.num_points()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn at(&self, p: usize) -> &[f64] {
        &self.data[p * self.ncomp..(p + 1) * self.ncomp]
    }

    pub fn at_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.data[p * self.ncomp..(p + 1) * self.ncomp]
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::BadDomain("field contains non-finite samples".into()))
        }
    }

    /// Largest pointwise Euclidean modulus.
    pub fn max_modulus(&self) -> f64 {
        let mut m: f64 = 0.0;
        for p in 0..self.num_points() {
            let s: f64 = self.at(p).iter().map(|v| v * v).sum();
            m = m.max(s);
        }
        m.sqrt()
    }

    /// L² norm under the uniform quadrature.
    pub fn l2_norm(&self) -> f64 {
        (self.domain.cell_volume() * self.data.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Largest pointwise defect `| |u|² − 1 |`, for unit-length preconditions.
    pub fn unit_defect(&self) -> f64 {
        let mut m: f64 = 0.0;
        for p in 0..self.num_points() {
            let s: f64 = self.at(p).iter().map(|v| v * v).sum();
            m = m.max((s - 1.0).abs());
        }
        m
    }

    /// `self + a * other`, matching shapes required.
    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        assert_eq!(self.data.len(), other.data.len());
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for s in self.data.iter_mut() {
            *s *= a;
        }
    }
}

/// L² inner product of two same-shape fields under the uniform quadrature.
pub fn inner_l2(a: &VectorField, b: &VectorField) -> f64 {
    assert!(a.domain.same_grid(&b.domain) && a.ncomp == b.ncomp, "field shape mismatch");
    a.domain.cell_volume() * a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum::<f64>()
}
