use std::f64::consts::PI;

use super::{Boundary, BoxDomain, ScalarField, VectorField};
use crate::error::{Error, Result};

/// Coefficients of a field in the span of a basis, `data[i*ncomp + c]`.
#[derive(Clone, Debug)]
pub struct ModeCoefficients {
    ncomp: usize,
    data: Vec<f64>,
}

impl ModeCoefficients {
    pub fn zeros(n: usize, ncomp: usize) -> Self {
        Self { ncomp, data: vec![0.0; n * ncomp] }
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.ncomp
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncomp..(i + 1) * self.ncomp]
    }

    pub fn at_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncomp..(i + 1) * self.ncomp]
    }

    /// Σ|c_i|², which by Parseval is the squared L² norm of the synthesis.
    pub fn l2_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn axpy(&mut self, a: f64, other: &ModeCoefficients) {
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

/// Norm bundle reported by [`SpectralBasis::norms`]. `h2_equiv` is the sum
/// `‖u‖ + ‖Δu‖`, which is equivalent to (but not equal to) the quadratic
/// Sobolev norm reported as `h2_sobolev`.
#[derive(Clone, Copy, Debug)]
pub struct Norms {
    pub l2: f64,
    pub h1: f64,
    pub h2_equiv: f64,
    pub h2_sobolev: f64,
}

/// Per-axis factor tables of the tensor-product eigenbasis.
struct AxisTable {
    /// Mode labels: Neumann k >= 0 (cosine); periodic +k cosine, -k sine.
    modes: Vec<i64>,
    /// Eigencontribution μ(k) with (d²/dx² − stuff) ... μ = (kπ/L)² or (2πk/L)².
    mu: Vec<f64>,
    /// Point values, row-major N×C: synth[j*C + q] = e_q(x_j).
    synth: Vec<f64>,
    /// Derivative point values, N×C: diff[j*C + q] = e_q'(x_j).
    diff: Vec<f64>,
    /// Quadrature-weighted transpose, C×N: anal[q*N + j] = h·e_q(x_j).
    anal: Vec<f64>,
    npts: usize,
    nmodes: usize,
}

fn axis_table(boundary: Boundary, npts: usize, len: f64) -> AxisTable {
    let h = len / npts as f64;
    let (modes, mu): (Vec<i64>, Vec<f64>) = match boundary {
        Boundary::Neumann => {
            // Cap 3k_max < 2N so cubic products are still integrated exactly
            // by the N-point midpoint rule against any retained mode.
            let kmax = (2 * npts - 1) / 3;
            let modes: Vec<i64> = (0..=kmax as i64).collect();
            let mu = modes.iter().map(|&k| (k as f64 * PI / len).powi(2)).collect();
            (modes, mu)
        }
        Boundary::Periodic => {
            // Cap 3|k|_max < N for the same exact-cubic-quadrature property.
            let kmax = (npts - 1) / 3;
            let mut modes = vec![0i64];
            for k in 1..=kmax as i64 {
                modes.push(k);
                modes.push(-k);
            }
            let mu = modes.iter().map(|&k| (2.0 * PI * k as f64 / len).powi(2)).collect();
            (modes, mu)
        }
    };
    let nmodes = modes.len();
    let mut synth = vec![0.0; npts * nmodes];
    let mut diff = vec![0.0; npts * nmodes];
    let mut anal = vec![0.0; nmodes * npts];
    let c0 = (1.0 / len).sqrt();
    let c1 = (2.0 / len).sqrt();
    for j in 0..npts {
        let x = (j as f64 + 0.5) * h;
        for (q, &k) in modes.iter().enumerate() {
            let (v, d) = match boundary {
                Boundary::Neumann => {
                    if k == 0 {
                        (c0, 0.0)
                    } else {
                        let w = k as f64 * PI / len;
                        (c1 * (w * x).cos(), -w * c1 * (w * x).sin())
                    }
                }
                Boundary::Periodic => {
                    if k == 0 {
                        (c0, 0.0)
                    } else {
                        let w = 2.0 * PI * k.unsigned_abs() as f64 / len;
                        if k > 0 {
                            (c1 * (w * x).cos(), -w * c1 * (w * x).sin())
                        } else {
                            (c1 * (w * x).sin(), w * c1 * (w * x).cos())
                        }
                    }
                }
            };
            synth[j * nmodes + q] = v;
            diff[j * nmodes + q] = d;
            anal[q * npts + j] = h * v;
        }
    }
    AxisTable { modes, mu, synth, diff, anal, npts, nmodes }
}

/// Tensor-product eigenbasis of `Δ − I`: `(Δ − I) f_i = −λ_i f_i` with the
/// domain's boundary condition, discretely L²-orthonormal under the uniform
/// midpoint quadrature. Modes are sorted by eigenvalue, ties broken
/// lexicographically by multi-index, so a truncation is deterministic.
pub struct SpectralBasis {
    domain: BoxDomain,
    modes: Vec<Vec<i64>>,
    eigenvalues: Vec<f64>,
    axes: Vec<AxisTable>,
    /// Flattened index of each retained mode inside the full tensor array.
    mode_to_tensor: Vec<usize>,
}

/// Builds the `n` lowest eigenpairs of `Δ − I` on the domain's grid.
///
/// The per-axis mode count is capped so that the collocation grid itself is
/// a ≥3/2 dealiasing grid: cubic pointwise products of retained modes are
/// integrated exactly by the uniform quadrature. Requesting more modes fails
/// with `TruncationTooLarge`.
pub fn build_basis(domain: &BoxDomain, n: usize) -> Result<SpectralBasis> {
    if n < 1 {
        return Err(Error::BadDomain("truncation must be >= 1".into()));
    }
    let m = domain.dim();
    let axes: Vec<AxisTable> = (0..m)
        .map(|a| axis_table(domain.boundary(), domain.resolution()[a], domain.lengths()[a]))
        .collect();
    let total: usize = axes.iter().map(|t| t.nmodes).product();
    if n > total {
        return Err(Error::TruncationTooLarge { requested: n, available: total });
    }

    struct Entry {
        lambda: f64,
        multi: Vec<i64>,
        tensor: usize,
    }
    let mut entries = Vec::with_capacity(total);
    let mut pos = vec![0usize; m];
    loop {
        let mut lambda = 1.0;
        let mut multi = Vec::with_capacity(m);
        let mut tensor = 0usize;
        let mut stride = 1usize;
        for a in 0..m {
            lambda += axes[a].mu[pos[a]];
            multi.push(axes[a].modes[pos[a]]);
            tensor += pos[a] * stride;
            stride *= axes[a].nmodes;
        }
        entries.push(Entry { lambda, multi, tensor });
        // odometer increment
        let mut a = 0;
        loop {
            if a == m {
                break;
            }
            pos[a] += 1;
            if pos[a] < axes[a].nmodes {
                break;
            }
            pos[a] = 0;
            a += 1;
        }
        if a == m {
            break;
        }
    }
    entries.sort_by(|x, y| {
        x.lambda.partial_cmp(&y.lambda).unwrap().then_with(|| x.multi.cmp(&y.multi))
    });
    entries.truncate(n);

    Ok(SpectralBasis {
        domain: domain.clone(),
        modes: entries.iter().map(|e| e.multi.clone()).collect(),
        eigenvalues: entries.iter().map(|e| e.lambda).collect(),
        axes,
        mode_to_tensor: entries.iter().map(|e| e.tensor).collect(),
    })
}

/// Applies a row-major `n_out × n_in` matrix along one axis of a tensor whose
/// layout is `idx = in + inner*(k + n_in*out)`.
fn apply_axis(
    data: &[f64],
    inner: usize,
    n_in: usize,
    outer: usize,
    mat: &[f64],
    n_out: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; inner * n_out * outer];
    for o in 0..outer {
        for q in 0..n_out {
            let row = &mat[q * n_in..(q + 1) * n_in];
            let dst_off = inner * (q + n_out * o);
            for (i, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let src_off = inner * (i + n_in * o);
                let (src, dst) = (&data[src_off..src_off + inner], &mut out[dst_off..dst_off + inner]);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    out
}

impl SpectralBasis {
    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.modes.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mode(&self, i: usize) -> &[i64] {
        &self.modes[i]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    fn check_domain(&self, d: &BoxDomain) -> Result<()> {
        if self.domain.same_grid(d) {
            Ok(())
        } else {
            Err(Error::DomainMismatch("field grid differs from basis grid".into()))
        }
    }

    /// Forward transform: quadrature inner products with every retained mode.
    /// Realizes the projection P_n in coefficient form.
    pub fn analyze(&self, field: &VectorField) -> Result<ModeCoefficients> {
        self.check_domain(field.domain())?;
        let nc = field.ncomp();
        let m = self.domain.dim();
        let mut cur = field.data().to_vec();
        let mut inner = nc;
        for a in 0..m {
            let n_in = self.axes[a].npts;
            let outer = cur.len() / (inner * n_in);
            cur = apply_axis(&cur, inner, n_in, outer, &self.axes[a].anal, self.axes[a].nmodes);
            inner *= self.axes[a].nmodes;
        }
        let mut out = ModeCoefficients::zeros(self.n(), nc);
        for (i, &t) in self.mode_to_tensor.iter().enumerate() {
            out.data[i * nc..(i + 1) * nc].copy_from_slice(&cur[t * nc..(t + 1) * nc]);
        }
        Ok(out)
    }

    /// Inverse transform: pointwise sum of retained modes on the grid.
    pub fn synthesize(&self, coeffs: &ModeCoefficients) -> VectorField {
        let nc = coeffs.ncomp();
        let m = self.domain.dim();
        let tensor_len: usize = self.axes.iter().map(|t| t.nmodes).product::<usize>() * nc;
        let mut cur = vec![0.0; tensor_len];
        for (i, &t) in self.mode_to_tensor.iter().enumerate() {
            cur[t * nc..(t + 1) * nc].copy_from_slice(&coeffs.data[i * nc..(i + 1) * nc]);
        }
        let mut inner = nc;
        for a in 0..m {
            let n_in = self.axes[a].nmodes;
            let outer = cur.len() / (inner * n_in);
            cur = apply_axis(&cur, inner, n_in, outer, &self.axes[a].synth, self.axes[a].npts);
            inner *= self.axes[a].npts;
        }
        let mut f = VectorField::zeros(&self.domain, nc);
        f.data_mut().copy_from_slice(&cur);
        f
    }

    /// P_n as a field-to-field map.
    pub fn project(&self, field: &VectorField) -> Result<VectorField> {
        Ok(self.synthesize(&self.analyze(field)?))
    }

    /// Spectral Laplacian in coefficient space: mode i scaled by −(λ_i − 1).
    pub fn laplacian_coeffs(&self, coeffs: &ModeCoefficients) -> ModeCoefficients {
        let mut out = coeffs.clone();
        let nc = coeffs.ncomp();
        for i in 0..self.n() {
            let s = -(self.eigenvalues[i] - 1.0);
            for v in out.data[i * nc..(i + 1) * nc].iter_mut() {
                *v *= s;
            }
        }
        out
    }

    /// Spectral Laplacian of a band-limited field.
    pub fn laplacian(&self, field: &VectorField) -> Result<VectorField> {
        Ok(self.synthesize(&self.laplacian_coeffs(&self.analyze(field)?)))
    }

    /// Gradient of a band-limited field. Output has `ncomp·m` components laid
    /// out as `c*m + a` = ∂u_c/∂x_a; Neumann cosines differentiate to sines.
    pub fn gradient(&self, field: &VectorField) -> Result<VectorField> {
        let coeffs = self.analyze(field)?;
        let nc = field.ncomp();
        let m = self.domain.dim();
        let mut out = VectorField::zeros(&self.domain, nc * m);
        let tensor_len: usize = self.axes.iter().map(|t| t.nmodes).product::<usize>() * nc;
        let mut scattered = vec![0.0; tensor_len];
        for (i, &t) in self.mode_to_tensor.iter().enumerate() {
            scattered[t * nc..(t + 1) * nc].copy_from_slice(&coeffs.data[i * nc..(i + 1) * nc]);
        }
        for da in 0..m {
            let mut cur = scattered.clone();
            let mut inner = nc;
            for a in 0..m {
                let n_in = self.axes[a].nmodes;
                let outer = cur.len() / (inner * n_in);
                let mat = if a == da { &self.axes[a].diff } else { &self.axes[a].synth };
                cur = apply_axis(&cur, inner, n_in, outer, mat, self.axes[a].npts);
                inner *= self.axes[a].npts;
            }
            let od = out.data_mut();
            for p in 0..self.domain.num_points() {
                for c in 0..nc {
                    od[p * nc * m + c * m + da] = cur[p * nc + c];
                }
            }
        }
        Ok(out)
    }

    /// Gradient of a band-limited scalar field, `m` components.
    pub fn gradient_scalar(&self, field: &ScalarField) -> Result<VectorField> {
        let mut v = VectorField::zeros(&self.domain, 1);
        v.data_mut().copy_from_slice(field.data());
        self.gradient(&v)
    }

    /// Pointwise directional derivative `(J·∇u)_c = Σ_a J_a ∂u_c/∂x_a`.
    /// `j` must have one component per domain axis.
    pub fn directional_derivative(&self, j: &VectorField, u: &VectorField) -> Result<VectorField> {
        self.check_domain(j.domain())?;
        let m = self.domain.dim();
        if j.ncomp() != m {
            return Err(Error::DomainMismatch(format!(
                "current density needs {m} components, has {}",
                j.ncomp()
            )));
        }
        let nc = u.ncomp();
        let grad = self.gradient(u)?;
        let mut out = VectorField::zeros(&self.domain, nc);
        let (od, gd, jd) = (out.data_mut(), grad.data(), j.data());
        // split borrows: od is the only mutable one
        for p in 0..jd.len() / m {
            for c in 0..nc {
                let mut s = 0.0;
                for a in 0..m {
                    s += jd[p * m + a] * gd[p * nc * m + c * m + a];
                }
                od[p * nc + c] = s;
            }
        }
        Ok(out)
    }

    /// Σ (λ_i − 1)|c_i|² = ‖∇u‖²_{L²} of the synthesis, exactly.
    pub fn grad_l2_sq(&self, coeffs: &ModeCoefficients) -> f64 {
        let nc = coeffs.ncomp();
        let mut s = 0.0;
        for i in 0..self.n() {
            let w = self.eigenvalues[i] - 1.0;
            s += w * coeffs.data[i * nc..(i + 1) * nc].iter().map(|v| v * v).sum::<f64>();
        }
        s
    }

    /// Σ (λ_i − 1)²|c_i|² = ‖Δu‖²_{L²} of the synthesis.
    pub fn lap_l2_sq(&self, coeffs: &ModeCoefficients) -> f64 {
        let nc = coeffs.ncomp();
        let mut s = 0.0;
        for i in 0..self.n() {
            let w = (self.eigenvalues[i] - 1.0).powi(2);
            s += w * coeffs.data[i * nc..(i + 1) * nc].iter().map(|v| v * v).sum::<f64>();
        }
        s
    }

    /// Norm bundle of a band-limited field, computed in coefficient space.
    /// For tensor eigenmodes the mixed second partials are orthogonal and
    /// Σ_{a,b}‖∂_a∂_b u‖² = ‖Δu‖², so the quadratic H² norm closes from the
    /// same three quadratures.
    pub fn norms(&self, field: &VectorField) -> Result<Norms> {
        let coeffs = self.analyze(field)?;
        let l2_sq = coeffs.l2_sq();
        let grad_sq = self.grad_l2_sq(&coeffs);
        let lap_sq = self.lap_l2_sq(&coeffs);
        let l2 = l2_sq.sqrt();
        Ok(Norms {
            l2,
            h1: (l2_sq + grad_sq).sqrt(),
            h2_equiv: l2 + lap_sq.sqrt(),
            h2_sobolev: (l2_sq + grad_sq + lap_sq).sqrt(),
        })
    }
}
