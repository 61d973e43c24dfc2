//! Model ingredients for the magnetization flows: the pointwise clipping map,
//! the anisotropy potential and its C¹ extension to the unit ball, prescribed
//! spin currents, effective fields, tension fields, and the energy breakdown.

use std::sync::Arc;

use crate::demag::DemagKernel;
use crate::error::{Error, Result};
use crate::grid::{inner_l2, Boundary, BoxDomain, SpectralBasis, VectorField};

/// Euclidean inner product of two slices of equal length.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cross product of two 3-vectors.
pub fn cross3(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn clip_in_place(z: &mut [f64]) {
    let r = dot(z, z).sqrt();
    if r > 1.0 {
        for v in z.iter_mut() {
            *v /= r;
        }
    }
}

/// Pointwise radial clipping `u / max(1, |u|)`: maps every sample into the
/// closed unit ball and fixes samples already inside it.
pub fn clip(u: &VectorField) -> VectorField {
    let mut out = u.clone();
    let nc = u.ncomp();
    for p in 0..u.num_points() {
        clip_in_place(&mut out.data_mut()[p * nc..(p + 1) * nc]);
    }
    out
}

/// An anisotropy energy density on the sphere, supplied as a value and its
/// ambient gradient. Implementations must be consistent: the gradient is
/// probed against finite differences of the value at load time.
pub trait PhiFn: Send + Sync {
    fn value(&self, z: &[f64; 3]) -> f64;
    fn gradient(&self, z: &[f64; 3]) -> [f64; 3];
}

/// Uniaxial density `Φ(u) = u₂² + u₃²` with easy axis e₁.
pub struct UniaxialPhi;

impl PhiFn for UniaxialPhi {
    fn value(&self, z: &[f64; 3]) -> f64 {
        z[1] * z[1] + z[2] * z[2]
    }

    fn gradient(&self, z: &[f64; 3]) -> [f64; 3] {
        [0.0, 2.0 * z[1], 2.0 * z[2]]
    }
}

/// The identically zero density.
pub struct ZeroPhi;

impl PhiFn for ZeroPhi {
    fn value(&self, _z: &[f64; 3]) -> f64 {
        0.0
    }

    fn gradient(&self, _z: &[f64; 3]) -> [f64; 3] {
        [0.0; 3]
    }
}

/// Largest deviation between the declared gradient of `phi` and central
/// finite differences of its value, sampled at `trials` points in the shell
/// 0.8 ≤ |z| ≤ 1.2. Used as a self-test when loading user-supplied densities.
pub fn phi_gradient_probe(phi: &dyn PhiFn, trials: usize, seed: u64) -> f64 {
    let mut rng = crate::rng::SplitMix64::new(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mut z = [0.0; 3];
        loop {
            for v in z.iter_mut() {
                *v = 1.2 * rng.next_symmetric();
            }
            let r = dot(&z, &z).sqrt();
            if (0.8..=1.2).contains(&r) {
                break;
            }
        }
        let g = phi.gradient(&z);
        for a in 0..3 {
            let mut zp = z;
            let mut zm = z;
            zp[a] += h;
            zm[a] -= h;
            let fd = (phi.value(&zp) - phi.value(&zm)) / (2.0 * h);
            worst = worst.max((fd - g[a]).abs());
        }
    }
    worst
}

/// Quintic smoothstep: C², 0 below 0 and 1 above 1, with vanishing first and
/// second derivatives at both ends.
fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (6.0 * t - 15.0))
    }
}

fn smoothstep_prime(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        let s = t * (1.0 - t);
        30.0 * s * s
    }
}

/// Anisotropy density together with the cutoff that extends it from the unit
/// sphere to the closed unit ball.
///
/// The extension is `Φ̃(z) = ζ(|z|²) Φ(z/|z|)`, where ζ is C², vanishes
/// identically on [0, 2δ₀], and reaches ζ(1) = 1 with zero slope. It agrees
/// with Φ on the sphere, is identically zero near the origin, and is C¹ in
/// between, so clipped fields can be fed to it without any smoothness loss.
#[derive(Clone)]
pub struct AnisotropyPotential {
    phi: Arc<dyn PhiFn>,
    delta0: f64,
}

impl AnisotropyPotential {
    /// Wraps a density with cutoff radius parameter `delta0 ∈ (0, 1/2)`.
    pub fn new(phi: Arc<dyn PhiFn>, delta0: f64) -> Self {
        assert!(
            delta0.is_finite() && delta0 > 0.0 && delta0 < 0.5,
            "delta0 must lie in (0, 1/2)"
        );
        Self { phi, delta0 }
    }

    /// The built-in uniaxial density with the default cutoff.
    pub fn uniaxial() -> Self {
        Self::new(Arc::new(UniaxialPhi), 0.25)
    }

    /// The zero density; the extension and its gradient vanish identically.
    pub fn zero() -> Self {
        Self::new(Arc::new(ZeroPhi), 0.25)
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    /// The cutoff ζ as a function of s = |z|²: a quintic smoothstep rescaled
    /// to rise on [2δ₀, 1].
    pub fn zeta(&self, s: f64) -> f64 {
        smoothstep((s - 2.0 * self.delta0) / (1.0 - 2.0 * self.delta0))
    }

    /// dζ/ds.
    pub fn zeta_prime(&self, s: f64) -> f64 {
        smoothstep_prime((s - 2.0 * self.delta0) / (1.0 - 2.0 * self.delta0))
            / (1.0 - 2.0 * self.delta0)
    }

    fn ball_check(&self, z: &[f64; 3]) -> Result<()> {
        let r2 = dot(z, z);
        if r2 > (1.0 + 1e-9) * (1.0 + 1e-9) {
            Err(Error::OutsideBall { modulus: r2.sqrt() })
        } else {
            Ok(())
        }
    }

    /// Extended density at a point of the closed unit ball.
    pub fn phi_extended(&self, z: &[f64; 3]) -> Result<f64> {
        self.ball_check(z)?;
        Ok(self.val_ext(z))
    }

    /// Gradient of the extended density, by the chain rule through ζ and the
    /// radial projection z ↦ z/|z|.
    pub fn grad_phi_extended(&self, z: &[f64; 3]) -> Result<[f64; 3]> {
        self.ball_check(z)?;
        Ok(self.grad_ext(z))
    }

    pub(crate) fn val_ext(&self, z: &[f64; 3]) -> f64 {
        let s = dot(z, z);
        if s <= 2.0 * self.delta0 {
            return 0.0;
        }
        let r = s.sqrt();
        let zh = [z[0] / r, z[1] / r, z[2] / r];
        self.zeta(s) * self.phi.value(&zh)
    }

    pub(crate) fn grad_ext(&self, z: &[f64; 3]) -> [f64; 3] {
        let s = dot(z, z);
        if s <= 2.0 * self.delta0 {
            return [0.0; 3];
        }
        let r = s.sqrt();
        let zh = [z[0] / r, z[1] / r, z[2] / r];
        let val = self.phi.value(&zh);
        let g = self.phi.gradient(&zh);
        let gt = dot(&g, &zh);
        let zp = self.zeta_prime(s);
        let zv = self.zeta(s) / r;
        let mut out = [0.0; 3];
        for a in 0..3 {
            out[a] = 2.0 * zp * val * z[a] + zv * (g[a] - gt * zh[a]);
        }
        out
    }
}

/// A prescribed current density J(x, t) with one component per domain axis.
pub trait CurrentFn: Send + Sync {
    /// Writes J(x, t) into `out`.
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]);
}

#[derive(Clone)]
enum CurrentKind {
    Zero,
    Analytic(Arc<dyn CurrentFn>),
    Tabulated { times: Vec<f64>, frames: Vec<VectorField> },
}

/// A spin current: either identically zero, an analytic rule, or a tabulated
/// time series interpolated linearly. Carries a sampled series of sup norms
/// t ↦ ‖J(·,t)‖_{L∞} used for the accumulated current strength I(T) and for
/// step-size probes.
#[derive(Clone)]
pub struct SpinCurrent {
    ncomp: usize,
    kind: CurrentKind,
    sup_series: Vec<(f64, f64)>,
}

impl SpinCurrent {
    /// The zero current on an m-dimensional domain. Covers every horizon.
    pub fn zero(m: usize) -> Self {
        Self { ncomp: m, kind: CurrentKind::Zero, sup_series: Vec::new() }
    }

    /// An analytic current on the given grid. The sup-norm series is sampled
    /// over the grid at `sample_times`, which must be strictly increasing.
    pub fn analytic(f: Arc<dyn CurrentFn>, domain: &BoxDomain, sample_times: &[f64]) -> Self {
        assert!(
            sample_times.windows(2).all(|w| w[0] < w[1]),
            "sample times must be strictly increasing"
        );
        let m = domain.dim();
        let mut series = Vec::with_capacity(sample_times.len());
        let mut x = vec![0.0; m];
        let mut out = vec![0.0; m];
        for &t in sample_times {
            let mut sup: f64 = 0.0;
            for p in 0..domain.num_points() {
                domain.point_into(p, &mut x);
                f.eval(&x, t, &mut out);
                sup = sup.max(dot(&out, &out));
            }
            series.push((t, sup.sqrt()));
        }
        Self { ncomp: m, kind: CurrentKind::Analytic(f), sup_series: series }
    }

    /// A tabulated current, linearly interpolated between frames.
    pub fn tabulated(times: Vec<f64>, frames: Vec<VectorField>) -> Result<Self> {
        assert_eq!(times.len(), frames.len(), "one frame per sample time");
        assert!(!times.is_empty(), "need at least one frame");
        assert!(
            times.windows(2).all(|w| w[0] < w[1]),
            "sample times must be strictly increasing"
        );
        let m = frames[0].domain().dim();
        for f in &frames {
            if !f.domain().same_grid(frames[0].domain()) {
                return Err(Error::DomainMismatch("current frames on different grids".into()));
            }
            if f.ncomp() != m {
                return Err(Error::DomainMismatch(format!(
                    "current needs {m} components, a frame has {}",
                    f.ncomp()
                )));
            }
        }
        let series = times.iter().zip(&frames).map(|(&t, f)| (t, f.max_modulus())).collect();
        Ok(Self { ncomp: m, kind: CurrentKind::Tabulated { times, frames }, sup_series: series })
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    /// True for the identically zero current, letting callers skip the
    /// advection transforms entirely.
    pub fn is_zero(&self) -> bool {
        matches!(self.kind, CurrentKind::Zero)
    }

    /// The sampled sup-norm series (t, ‖J(·,t)‖_{L∞}).
    pub fn sup_norm_series(&self) -> &[(f64, f64)] {
        &self.sup_series
    }

    /// Sup norm at time t, interpolated from the series.
    pub fn sup_norm_at(&self, t: f64) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        let (first, last) = self.series_span();
        if t < first - 1e-9 || t > last + 1e-9 {
            return Err(Error::SeriesTooShort { have: last, need: t });
        }
        Ok(interp_series(&self.sup_series, t))
    }

    fn series_span(&self) -> (f64, f64) {
        let first = self.sup_series.first().map_or(f64::INFINITY, |p| p.0);
        let last = self.sup_series.last().map_or(f64::NEG_INFINITY, |p| p.0);
        (first, last)
    }

    /// The current as a grid field at time t.
    pub fn field_at(&self, domain: &BoxDomain, t: f64) -> Result<VectorField> {
        if domain.dim() != self.ncomp {
            return Err(Error::DomainMismatch(format!(
                "current has {} components for a {}-dimensional domain",
                self.ncomp,
                domain.dim()
            )));
        }
        match &self.kind {
            CurrentKind::Zero => Ok(VectorField::zeros(domain, self.ncomp)),
            CurrentKind::Analytic(f) => {
                Ok(VectorField::from_fn(domain, self.ncomp, |x, out| f.eval(x, t, out)))
            }
            CurrentKind::Tabulated { times, frames } => {
                if !frames[0].domain().same_grid(domain) {
                    return Err(Error::DomainMismatch(
                        "tabulated current lives on a different grid".into(),
                    ));
                }
                let last = *times.last().unwrap();
                if t < times[0] - 1e-9 || t > last + 1e-9 {
                    return Err(Error::SeriesTooShort { have: last, need: t });
                }
                let i = match times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
                    Ok(i) => return Ok(frames[i].clone()),
                    Err(0) => return Ok(frames[0].clone()),
                    Err(i) if i == times.len() => return Ok(frames[i - 1].clone()),
                    Err(i) => i,
                };
                let (t0, t1) = (times[i - 1], times[i]);
                let w = (t - t0) / (t1 - t0);
                let mut f = frames[i - 1].clone();
                f.scale(1.0 - w);
                f.axpy(w, &frames[i]);
                Ok(f)
            }
        }
    }
}

fn interp_series(series: &[(f64, f64)], t: f64) -> f64 {
    let i = series.partition_point(|p| p.0 < t);
    if i == 0 {
        return series[0].1;
    }
    if i == series.len() {
        return series[series.len() - 1].1;
    }
    let (t0, s0) = series[i - 1];
    let (t1, s1) = series[i];
    s0 + (s1 - s0) * (t - t0) / (t1 - t0)
}

/// Accumulated current strength I(T) = β² ∫₀ᵀ ‖J(·,t)‖²_{L∞} dt, by the
/// trapezoidal rule on the sampled sup-norm series.
pub fn accumulate_i(current: &SpinCurrent, beta: f64, t_final: f64) -> Result<f64> {
    if current.is_zero() || beta == 0.0 || t_final <= 0.0 {
        return Ok(0.0);
    }
    let (first, last) = current.series_span();
    if first > 1e-9 || last < t_final - 1e-9 {
        return Err(Error::SeriesTooShort { have: last, need: t_final });
    }
    let f = |s: f64| beta * beta * s * s;
    let mut acc = 0.0;
    for w in current.sup_series.windows(2) {
        let (t0, s0) = w[0];
        let (t1, s1) = w[1];
        let lo = t0.max(0.0);
        let hi = t1.min(t_final);
        if hi <= lo || t1 <= t0 {
            continue;
        }
        let sl = s0 + (s1 - s0) * (lo - t0) / (t1 - t0);
        let sh = s0 + (s1 - s0) * (hi - t0) / (t1 - t0);
        acc += 0.5 * (f(sl) + f(sh)) * (hi - lo);
    }
    Ok(acc)
}

/// Which evolution the model drives.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FlowKind {
    /// Damped precession with spin-transfer torque on a bounded box.
    LlgSpinCurrent,
    /// Current-perturbed harmonic map heat flow on a bounded box.
    HeatFlowBounded,
    /// The same heat flow on a flat torus.
    HeatFlowTorus,
}

impl FlowKind {
    /// The boundary treatment each flow is posed with.
    pub fn required_boundary(self) -> Boundary {
        match self {
            FlowKind::LlgSpinCurrent | FlowKind::HeatFlowBounded => Boundary::Neumann,
            FlowKind::HeatFlowTorus => Boundary::Periodic,
        }
    }
}

/// Full model description: damping α, torque strength β, regularization ε,
/// the flow kind, the stray-field switch, the anisotropy, and the current.
///
/// The precession factor γ is not a free parameter; it is tied to damping as
/// γ = 1 + α².
#[derive(Clone)]
pub struct ModelConfig {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub flow: FlowKind,
    pub demag: bool,
    pub demag_kernel: Option<Arc<DemagKernel>>,
    pub anisotropy: AnisotropyPotential,
    pub current: SpinCurrent,
}

impl ModelConfig {
    /// A model with no anisotropy, no current, and no stray field, for an
    /// m-dimensional domain.
    pub fn plain(alpha: f64, beta: f64, epsilon: f64, flow: FlowKind, m: usize) -> Self {
        Self {
            alpha,
            beta,
            epsilon,
            flow,
            demag: false,
            demag_kernel: None,
            anisotropy: AnisotropyPotential::zero(),
            current: SpinCurrent::zero(m),
        }
    }

    /// γ = 1 + α².
    pub fn gamma(&self) -> f64 {
        1.0 + self.alpha * self.alpha
    }

    /// Checks the cross-object invariants against a concrete domain: the
    /// boundary matches the flow, the current has one component per axis,
    /// and the stray field is only enabled on 3-D boxes under the damped
    /// precession flow with a kernel built for this grid.
    pub fn validate_for(&self, domain: &BoxDomain) -> Result<()> {
        let want = self.flow.required_boundary();
        if domain.boundary() != want {
            return Err(Error::FlowMismatch(format!(
                "{:?} flow needs {:?} boundaries, domain has {:?}",
                self.flow,
                want,
                domain.boundary()
            )));
        }
        if self.current.ncomp() != domain.dim() {
            return Err(Error::DomainMismatch(format!(
                "current has {} components for a {}-dimensional domain",
                self.current.ncomp(),
                domain.dim()
            )));
        }
        if self.demag {
            if self.flow != FlowKind::LlgSpinCurrent {
                return Err(Error::FlowMismatch(
                    "stray field is only defined for the damped precession flow".into(),
                ));
            }
            if domain.dim() != 3 {
                return Err(Error::WrongDimension { need: 3, have: domain.dim() });
            }
            match &self.demag_kernel {
                None => {
                    return Err(Error::FlowMismatch(
                        "stray field enabled but no kernel attached".into(),
                    ))
                }
                Some(k) => {
                    if !k.domain().same_grid(domain) {
                        return Err(Error::DomainMismatch(
                            "stray-field kernel built for a different grid".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// The effective field driving the torques:
///
/// `h = Δu − ∇Φ̃(J(u)) + h_d(u) + β J·∇u`
///
/// where J(u) is the clipped field, the stray-field term appears only when
/// enabled (damped precession flow), and the current term uses the spectral
/// directional derivative. The Laplacian acts on the unclipped field.
pub fn effective_field(
    u: &VectorField,
    basis: &SpectralBasis,
    cfg: &ModelConfig,
    t: f64,
) -> Result<VectorField> {
    if u.ncomp() != 3 {
        return Err(Error::WrongDimension { need: 3, have: u.ncomp() });
    }
    let mut h = basis.laplacian(u)?;
    {
        let ud = u.data();
        let hd = h.data_mut();
        for p in 0..ud.len() / 3 {
            let mut z = [ud[3 * p], ud[3 * p + 1], ud[3 * p + 2]];
            clip_in_place(&mut z);
            let g = cfg.anisotropy.grad_ext(&z);
            hd[3 * p] -= g[0];
            hd[3 * p + 1] -= g[1];
            hd[3 * p + 2] -= g[2];
        }
    }
    if cfg.demag {
        let kernel = cfg
            .demag_kernel
            .as_deref()
            .ok_or_else(|| Error::FlowMismatch("stray field enabled but no kernel attached".into()))?;
        let hd = kernel.demag_field(u)?;
        h.axpy(1.0, &hd);
    }
    if cfg.beta != 0.0 && !cfg.current.is_zero() {
        let j = cfg.current.field_at(u.domain(), t)?;
        let adv = basis.directional_derivative(&j, u)?;
        h.axpy(cfg.beta, &adv);
    }
    Ok(h)
}

/// Tension field `τ(u) = Δu + |∇u|² u` of a band-limited field, evaluated
/// pointwise on the grid.
pub fn tension_field(u: &VectorField, basis: &SpectralBasis) -> Result<VectorField> {
    let mut out = basis.laplacian(u)?;
    let grad = basis.gradient(u)?;
    let nc = u.ncomp();
    let stride = grad.ncomp();
    let (od, gd, ud) = (out.data_mut(), grad.data(), u.data());
    for p in 0..ud.len() / nc {
        let g2 = dot(&gd[p * stride..(p + 1) * stride], &gd[p * stride..(p + 1) * stride]);
        for c in 0..nc {
            od[p * nc + c] += g2 * ud[p * nc + c];
        }
    }
    Ok(out)
}

/// Anisotropic tension field `τ_Φ(u) = τ(u) − (∇Φ̃(u) − ⟨∇Φ̃(u),u⟩u)`:
/// the tension field minus the tangential part of the extended gradient.
/// Requires |u| = 1 pointwise to 1e-6; the gradient is evaluated at the
/// pointwise normalization of u so the subtracted part is exactly tangential.
pub fn tau_phi(
    u: &VectorField,
    basis: &SpectralBasis,
    pot: &AnisotropyPotential,
) -> Result<VectorField> {
    let nc = u.ncomp();
    let mut defect: f64 = 0.0;
    for p in 0..u.num_points() {
        let r = dot(u.at(p), u.at(p)).sqrt();
        defect = defect.max((r - 1.0).abs());
    }
    if defect > 1e-6 {
        return Err(Error::NotUnitLength { defect });
    }
    let mut out = tension_field(u, basis)?;
    let (od, ud) = (out.data_mut(), u.data());
    for p in 0..ud.len() / nc {
        let w = &ud[p * nc..(p + 1) * nc];
        let r = dot(w, w).sqrt();
        let zh = [w[0] / r, w[1] / r, w[2] / r];
        let g = pot.grad_ext(&zh);
        let gt = dot(&g, &zh);
        for c in 0..nc {
            od[p * nc + c] -= g[c] - gt * zh[c];
        }
    }
    Ok(out)
}

/// Energy terms of a magnetization state.
#[derive(Clone, Copy, Debug)]
pub struct EnergyBreakdown {
    /// ∫ Φ̃(J(u)) dx.
    pub anisotropy: f64,
    /// ½ ∫ |∇u|² dx, computed spectrally.
    pub exchange: f64,
    /// −½ ∫ h_d(u)·u dx, zero when the stray field is disabled.
    pub selfinduced: f64,
    pub total: f64,
}

/// Evaluates the energy breakdown by exact quadrature of band-limited terms.
pub fn energy(u: &VectorField, basis: &SpectralBasis, cfg: &ModelConfig) -> Result<EnergyBreakdown> {
    let coeffs = basis.analyze(u)?;
    let exchange = 0.5 * basis.grad_l2_sq(&coeffs);
    let nc = u.ncomp();
    let mut aniso = 0.0;
    let ud = u.data();
    for p in 0..u.num_points() {
        let mut z = [ud[p * nc], ud[p * nc + 1], ud[p * nc + 2]];
        clip_in_place(&mut z);
        aniso += cfg.anisotropy.val_ext(&z);
    }
    aniso *= u.domain().cell_volume();
    let selfinduced = if cfg.demag {
        let kernel = cfg
            .demag_kernel
            .as_deref()
            .ok_or_else(|| Error::FlowMismatch("stray field enabled but no kernel attached".into()))?;
        let hd = kernel.demag_field(u)?;
        -0.5 * inner_l2(&hd, u)
    } else {
        0.0
    };
    Ok(EnergyBreakdown {
        anisotropy: aniso,
        exchange,
        selfinduced,
        total: aniso + exchange + selfinduced,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::grid::{build_basis, ModeCoefficients};
    use crate::rng::SplitMix64;

    fn cube(res: usize, boundary: Boundary) -> BoxDomain {
        BoxDomain::new(vec![1.0; 3], vec![res; 3], boundary).unwrap()
    }

    fn random_band_field(basis: &SpectralBasis, ncomp: usize, seed: u64, scale: f64) -> VectorField {
        let mut rng = SplitMix64::new(seed);
        let mut c = ModeCoefficients::zeros(basis.n(), ncomp);
        for v in c.data_mut() {
            *v = scale * rng.next_symmetric();
        }
        basis.synthesize(&c)
    }

    #[test]
    fn clip_examples_and_properties() {
        let d = cube(4, Boundary::Neumann);
        let mut u = VectorField::zeros(&d, 3);
        u.at_mut(0).copy_from_slice(&[0.0, 0.0, 2.0]);
        u.at_mut(1).copy_from_slice(&[0.5, 0.0, 0.0]);
        u.at_mut(2).copy_from_slice(&[3.0, 4.0, 0.0]);
        let c = clip(&u);
        assert!(c.at(0).iter().zip(&[0.0, 0.0, 1.0]).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(c.at(1).iter().zip(&[0.5, 0.0, 0.0]).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(c.at(2).iter().zip(&[0.6, 0.8, 0.0]).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(c.max_modulus() <= 1.0 + 1e-15);

        let mut rng = SplitMix64::new(7);
        let mut w = VectorField::zeros(&d, 3);
        for v in w.data_mut() {
            *v = 2.0 * rng.next_symmetric();
        }
        let c1 = clip(&w);
        let c2 = clip(&c1);
        for (a, b) in c1.data().iter().zip(c2.data()) {
            assert_eq!(a, b, "clipping must be idempotent");
        }
        // 1-Lipschitz on sample pairs
        for p in 0..w.num_points() - 1 {
            let (a, b) = (w.at(p), w.at(p + 1));
            let (ca, cb) = (c1.at(p), c1.at(p + 1));
            let pre: f64 = dot(a, a) - 2.0 * dot(a, b) + dot(b, b);
            let post: f64 = dot(ca, ca) - 2.0 * dot(ca, cb) + dot(cb, cb);
            assert!(post <= pre + 1e-12);
        }
    }

    #[test]
    fn cutoff_shape() {
        let pot = AnisotropyPotential::uniaxial();
        assert_eq!(pot.zeta(0.0), 0.0);
        assert_eq!(pot.zeta(0.5), 0.0);
        assert_eq!(pot.zeta(1.0), 1.0);
        assert!(pot.zeta(0.75) > 0.0 && pot.zeta(0.75) < 1.0);
        // dζ/ds against finite differences across the rise
        for i in 0..20 {
            let s = 0.45 + 0.6 * (i as f64) / 19.0;
            let h = 1e-6;
            let fd = (pot.zeta(s + h) - pot.zeta(s - h)) / (2.0 * h);
            assert!((fd - pot.zeta_prime(s)).abs() < 1e-7, "s = {s}");
        }
    }

    #[test]
    fn extension_vanishes_inside_cutoff() {
        let pot = AnisotropyPotential::uniaxial();
        for z in [[0.3, 0.2, 0.1], [0.0, 0.45, 0.0], [0.4, 0.4, 0.4]] {
            assert!(dot(&z, &z) <= 0.5 + 1e-12);
            assert_eq!(pot.phi_extended(&z).unwrap(), 0.0);
            assert_eq!(pot.grad_phi_extended(&z).unwrap(), [0.0; 3]);
        }
    }

    #[test]
    fn extension_restricts_to_sphere() {
        let pot = AnisotropyPotential::uniaxial();
        let mut rng = SplitMix64::new(11);
        for _ in 0..50 {
            let mut z = [rng.next_symmetric(), rng.next_symmetric(), rng.next_symmetric()];
            let r = dot(&z, &z).sqrt().max(1e-9);
            for v in z.iter_mut() {
                *v /= r;
            }
            let want = z[1] * z[1] + z[2] * z[2];
            assert!((pot.phi_extended(&z).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn extension_value_at_interior_point() {
        let pot = AnisotropyPotential::uniaxial();
        let z = [0.0, 0.9, 0.0];
        let got = pot.phi_extended(&z).unwrap();
        // direct evaluation: ζ(0.81)·Φ(0,1,0) with Φ(0,1,0) = 1
        let want = pot.zeta(0.81);
        assert!((got - want).abs() < 1e-14);
        assert!(got > 0.0 && got < 1.0);
    }

    #[test]
    fn extension_gradient_matches_differences() {
        let pot = AnisotropyPotential::uniaxial();
        let mut rng = SplitMix64::new(3);
        let h = 1e-5;
        let mut count = 0;
        while count < 1000 {
            let z = [rng.next_symmetric(), rng.next_symmetric(), rng.next_symmetric()];
            if dot(&z, &z).sqrt() > 0.9995 {
                continue;
            }
            count += 1;
            let g = pot.grad_phi_extended(&z).unwrap();
            for a in 0..3 {
                let mut zp = z;
                let mut zm = z;
                zp[a] += h;
                zm[a] -= h;
                let fd =
                    (pot.phi_extended(&zp).unwrap() - pot.phi_extended(&zm).unwrap()) / (2.0 * h);
                assert!((fd - g[a]).abs() < 1e-6, "z = {z:?}, axis {a}");
            }
        }
    }

    #[test]
    fn extension_is_c1_at_junctions() {
        let pot = AnisotropyPotential::uniaxial();
        let dir = {
            let mut d = [0.4, -0.7, 0.59];
            let r = dot(&d, &d).sqrt();
            for v in d.iter_mut() {
                *v /= r;
            }
            d
        };
        // value and gradient continuous across |z|² ∈ {δ₀, 2δ₀} and up to 1
        for s in [0.25f64, 0.5, 1.0] {
            let gap = 1e-7;
            let rm = (s - gap).sqrt();
            let rp = (s + gap).min(1.0).sqrt();
            let zm = [dir[0] * rm, dir[1] * rm, dir[2] * rm];
            let zp = [dir[0] * rp, dir[1] * rp, dir[2] * rp];
            let dv = (pot.phi_extended(&zp).unwrap() - pot.phi_extended(&zm).unwrap()).abs();
            assert!(dv < 1e-5, "value jump {dv} at s = {s}");
            let gm = pot.grad_phi_extended(&zm).unwrap();
            let gp = pot.grad_phi_extended(&zp).unwrap();
            for a in 0..3 {
                assert!((gp[a] - gm[a]).abs() < 1e-4, "gradient jump at s = {s}");
            }
        }
    }

    #[test]
    fn outside_ball_rejected() {
        let pot = AnisotropyPotential::uniaxial();
        let z = [0.0, 1.1, 0.0];
        assert!(matches!(pot.phi_extended(&z), Err(Error::OutsideBall { .. })));
        assert!(matches!(pot.grad_phi_extended(&z), Err(Error::OutsideBall { .. })));
    }

    #[test]
    fn builtin_gradients_pass_probe() {
        assert!(phi_gradient_probe(&UniaxialPhi, 200, 5) < 1e-9);
        assert!(phi_gradient_probe(&ZeroPhi, 50, 6) == 0.0);
    }

    #[test]
    fn double_cross_identity() {
        let mut rng = SplitMix64::new(19);
        for _ in 0..100 {
            let mut u = [rng.next_symmetric(), rng.next_symmetric(), rng.next_symmetric()];
            let r = dot(&u, &u).sqrt().max(1e-9);
            for v in u.iter_mut() {
                *v /= r;
            }
            let h = [rng.next_symmetric(), rng.next_symmetric(), rng.next_symmetric()];
            let uxh = cross3(&u, &h);
            let uxuxh = cross3(&u, &uxh);
            let uh = dot(&u, &h);
            for a in 0..3 {
                assert!((uxuxh[a] - (uh * u[a] - h[a])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn effective_field_constant_state_is_zero() {
        let d = cube(8, Boundary::Neumann);
        let basis = build_basis(&d, 16).unwrap();
        let u = VectorField::from_fn(&d, 3, |_, out| out.copy_from_slice(&[0.0, 0.0, 1.0]));
        let cfg = ModelConfig::plain(0.5, 0.0, 0.1, FlowKind::LlgSpinCurrent, 3);
        let h = effective_field(&u, &basis, &cfg, 0.0).unwrap();
        assert!(h.max_modulus() < 1e-12);
    }

    #[test]
    fn effective_field_pure_laplacian() {
        let d = cube(8, Boundary::Neumann);
        let basis = build_basis(&d, 30).unwrap();
        let u = VectorField::from_fn(&d, 3, |x, out| {
            out.copy_from_slice(&[0.0, 0.0, (PI * x[0]).cos()])
        });
        let cfg = ModelConfig::plain(0.5, 0.0, 0.1, FlowKind::LlgSpinCurrent, 3);
        let h = effective_field(&u, &basis, &cfg, 0.0).unwrap();
        let mut worst: f64 = 0.0;
        for p in 0..u.num_points() {
            let want = -PI * PI * u.at(p)[2];
            worst = worst.max((h.at(p)[2] - want).abs());
            worst = worst.max(h.at(p)[0].abs()).max(h.at(p)[1].abs());
        }
        assert!(worst < 1e-10, "worst deviation {worst}");
    }

    struct SwirlCurrent;

    impl CurrentFn for SwirlCurrent {
        fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
            out[0] = (PI * x[1]).cos() * (1.0 + 0.5 * t);
            out[1] = (PI * x[0]).cos() - 0.25 * t * x[2];
            out[2] = 0.5 * (PI * x[2]).cos();
        }
    }

    #[test]
    fn effective_field_term_assembly() {
        let d = cube(8, Boundary::Neumann);
        let basis = build_basis(&d, 24).unwrap();
        let u = random_band_field(&basis, 3, 23, 0.3);
        let times: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let current = SpinCurrent::analytic(Arc::new(SwirlCurrent), &d, &times);

        let cfg_lap = ModelConfig::plain(0.5, 0.0, 0.1, FlowKind::LlgSpinCurrent, 3);
        let mut cfg_phi = cfg_lap.clone();
        cfg_phi.anisotropy = AnisotropyPotential::uniaxial();
        let mut cfg_cur = cfg_lap.clone();
        cfg_cur.beta = 0.7;
        cfg_cur.current = current.clone();
        let mut cfg_all = cfg_phi.clone();
        cfg_all.beta = 0.7;
        cfg_all.current = current.clone();

        let t = 0.3;
        let lap = effective_field(&u, &basis, &cfg_lap, t).unwrap();
        let phi = effective_field(&u, &basis, &cfg_phi, t).unwrap();
        let cur = effective_field(&u, &basis, &cfg_cur, t).unwrap();
        let all = effective_field(&u, &basis, &cfg_all, t).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..all.data().len() {
            let sum = phi.data()[i] + cur.data()[i] - lap.data()[i];
            worst = worst.max((all.data()[i] - sum).abs());
        }
        assert!(worst < 1e-12, "assembly not additive: {worst}");

        // affine in β: h(β=2) + h(β=0) = 2·h(β=1)
        let mut c0 = cfg_all.clone();
        c0.beta = 0.0;
        let mut c1 = cfg_all.clone();
        c1.beta = 1.0;
        let mut c2 = cfg_all.clone();
        c2.beta = 2.0;
        let h0 = effective_field(&u, &basis, &c0, t).unwrap();
        let h1 = effective_field(&u, &basis, &c1, t).unwrap();
        let h2 = effective_field(&u, &basis, &c2, t).unwrap();
        let mut aff: f64 = 0.0;
        for i in 0..h0.data().len() {
            aff = aff.max((h2.data()[i] + h0.data()[i] - 2.0 * h1.data()[i]).abs());
        }
        assert!(aff < 1e-12, "not affine in beta: {aff}");
    }

    #[test]
    fn effective_field_needs_three_components() {
        let d = cube(4, Boundary::Neumann);
        let basis = build_basis(&d, 4).unwrap();
        let u = VectorField::zeros(&d, 2);
        let cfg = ModelConfig::plain(0.5, 0.0, 0.1, FlowKind::LlgSpinCurrent, 3);
        assert!(matches!(
            effective_field(&u, &basis, &cfg, 0.0),
            Err(Error::WrongDimension { need: 3, have: 2 })
        ));
    }

    #[test]
    fn tension_of_constant_unit_field_vanishes() {
        let d = cube(6, Boundary::Neumann);
        let basis = build_basis(&d, 10).unwrap();
        let u = VectorField::from_fn(&d, 3, |_, out| out.copy_from_slice(&[1.0, 0.0, 0.0]));
        let tau = tension_field(&u, &basis).unwrap();
        assert!(tau.max_modulus() < 1e-12);
    }

    #[test]
    fn tension_of_geodesic_circle_vanishes() {
        let d = cube(8, Boundary::Periodic);
        let basis = build_basis(&d, 7).unwrap();
        let u = VectorField::from_fn(&d, 3, |x, out| {
            out.copy_from_slice(&[(2.0 * PI * x[0]).cos(), (2.0 * PI * x[0]).sin(), 0.0])
        });
        let tau = tension_field(&u, &basis).unwrap();
        assert!(tau.max_modulus() < 1e-8, "max |τ| = {}", tau.max_modulus());
    }

    #[test]
    fn tension_radial_component_identity() {
        // ⟨τ(u),u⟩ = Δ(|u|²)/2 + |∇u|²(|u|²−1) pointwise for any smooth u;
        // check it for a band-limited u with a finite-difference Laplacian
        // of the sampled |u|².
        let d = BoxDomain::new(vec![1.0; 3], vec![32; 3], Boundary::Neumann).unwrap();
        let basis = build_basis(&d, 64).unwrap();
        // keep the band low so the difference stencil resolves the field
        let mut rng = SplitMix64::new(31);
        let mut c = ModeCoefficients::zeros(basis.n(), 3);
        for v in c.data_mut() {
            *v = 0.3 * rng.next_symmetric();
        }
        let u = basis.synthesize(&c);
        let tau = tension_field(&u, &basis).unwrap();
        let grad = basis.gradient(&u).unwrap();

        let n = 32usize;
        let h = 1.0 / n as f64;
        let sq = |p: usize| dot(u.at(p), u.at(p));
        let refl = |i: i64| -> usize {
            let m = n as i64;
            let j = if i < 0 { -i - 1 } else if i >= m { 2 * m - 1 - i } else { i };
            j as usize
        };
        let idx = |i: i64, j: i64, k: i64| refl(i) + n * (refl(j) + n * refl(k));
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for k in 0..n as i64 {
            for j in 0..n as i64 {
                for i in 0..n as i64 {
                    let p = idx(i, j, k);
                    let mut lap = -6.0 * sq(p);
                    for (di, dj, dk) in
                        [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
                    {
                        lap += sq(idx(i + di, j + dj, k + dk));
                    }
                    lap /= h * h;
                    let g2 = dot(grad.at(p), grad.at(p));
                    let want = 0.5 * lap + g2 * (sq(p) - 1.0);
                    let got = dot(tau.at(p), u.at(p));
                    worst = worst.max((got - want).abs());
                    scale = scale.max(want.abs());
                }
            }
        }
        // second-order stencil; the identity itself is exact
        assert!(worst / scale < 2e-2, "relative defect {}", worst / scale);
    }

    fn normalized_gentle_field(basis: &SpectralBasis, seed: u64) -> VectorField {
        let d = basis.domain();
        let mut rng = SplitMix64::new(seed);
        let (a, b, c) = (rng.next_symmetric(), rng.next_symmetric(), rng.next_symmetric());
        let mut u = VectorField::from_fn(d, 3, |x, out| {
            let r = 0.12;
            out[0] = r * (PI * x[0]).cos() + 0.05 * a;
            out[1] = r * (PI * x[1]).cos() * (PI * x[0]).cos() + 0.05 * b;
            out[2] = 1.0 + 0.05 * c;
        });
        let nc = 3;
        for p in 0..u.num_points() {
            let w = &mut u.data_mut()[p * nc..(p + 1) * nc];
            let r = dot(w, w).sqrt();
            for v in w.iter_mut() {
                *v /= r;
            }
        }
        u
    }

    #[test]
    fn tau_phi_reduces_to_tension_for_zero_potential() {
        let d = cube(8, Boundary::Neumann);
        let basis = build_basis(&d, 20).unwrap();
        let u = normalized_gentle_field(&basis, 41);
        let t1 = tension_field(&u, &basis).unwrap();
        let t2 = tau_phi(&u, &basis, &AnisotropyPotential::zero()).unwrap();
        for (a, b) in t1.data().iter().zip(t2.data()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn tau_phi_critical_point() {
        let d = cube(6, Boundary::Neumann);
        let basis = build_basis(&d, 10).unwrap();
        let u = VectorField::from_fn(&d, 3, |_, out| out.copy_from_slice(&[1.0, 0.0, 0.0]));
        let tau = tau_phi(&u, &basis, &AnisotropyPotential::uniaxial()).unwrap();
        assert!(tau.max_modulus() < 1e-12, "easy axis must be a critical point");
    }

    #[test]
    fn tau_phi_subtracts_only_tangential_parts() {
        let d = cube(8, Boundary::Neumann);
        let basis = build_basis(&d, 20).unwrap();
        let u = normalized_gentle_field(&basis, 43);
        let t0 = tension_field(&u, &basis).unwrap();
        let tp = tau_phi(&u, &basis, &AnisotropyPotential::uniaxial()).unwrap();
        let mut worst: f64 = 0.0;
        for p in 0..u.num_points() {
            let a = dot(t0.at(p), u.at(p));
            let b = dot(tp.at(p), u.at(p));
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-12, "radial parts differ by {worst}");
    }

    #[test]
    fn tau_phi_requires_unit_length() {
        let d = cube(4, Boundary::Neumann);
        let basis = build_basis(&d, 4).unwrap();
        let u = VectorField::from_fn(&d, 3, |_, out| out.copy_from_slice(&[0.9, 0.0, 0.0]));
        assert!(matches!(
            tau_phi(&u, &basis, &AnisotropyPotential::zero()),
            Err(Error::NotUnitLength { .. })
        ));
    }

    #[test]
    fn energy_ground_state_and_hard_axis() {
        let d = cube(6, Boundary::Neumann);
        let basis = build_basis(&d, 10).unwrap();
        let mut cfg = ModelConfig::plain(0.5, 0.0, 0.1, FlowKind::LlgSpinCurrent, 3);
        cfg.anisotropy = AnisotropyPotential::uniaxial();

        let e1 = VectorField::from_fn(&d, 3, |_, out| out.copy_from_slice(&[1.0, 0.0, 0.0]));
        let br = energy(&e1, &basis, &cfg).unwrap();
        assert!(br.total.abs() < 1e-14, "easy axis is the ground state");

        let e2 = VectorField::from_fn(&d, 3, |_, out| out.copy_from_slice(&[0.0, 1.0, 0.0]));
        let br = energy(&e2, &basis, &cfg).unwrap();
        assert!((br.anisotropy - 1.0).abs() < 1e-12, "Φ(e₂)·Vol = 1");
        assert!(br.exchange.abs() < 1e-20);
        assert_eq!(br.selfinduced, 0.0);
    }

    #[test]
    fn energy_exchange_quadrature() {
        let d = cube(8, Boundary::Neumann);
        let basis = build_basis(&d, 30).unwrap();
        let cfg = ModelConfig::plain(0.5, 0.0, 0.1, FlowKind::LlgSpinCurrent, 3);
        let u = VectorField::from_fn(&d, 3, |x, out| {
            out.copy_from_slice(&[0.0, 0.0, (PI * x[0]).cos()])
        });
        let br = energy(&u, &basis, &cfg).unwrap();
        assert!((br.exchange - PI * PI / 4.0).abs() < 1e-10);
        assert_eq!(br.anisotropy, 0.0);
        assert!((br.total - br.exchange).abs() < 1e-15);
    }

    #[test]
    fn energy_rotation_invariance() {
        let d = cube(8, Boundary::Neumann);
        let basis = build_basis(&d, 20).unwrap();
        let cfg = ModelConfig::plain(0.5, 0.0, 0.1, FlowKind::LlgSpinCurrent, 3);
        let u = random_band_field(&basis, 3, 51, 0.4);
        // rotate components by a fixed orthogonal matrix (x-axis, 40 degrees)
        let th = 40f64.to_radians();
        let (c, s) = (th.cos(), th.sin());
        let mut v = u.clone();
        for p in 0..u.num_points() {
            let w = u.at(p);
            let r = [w[0], c * w[1] - s * w[2], s * w[1] + c * w[2]];
            v.at_mut(p).copy_from_slice(&r);
        }
        let eu = energy(&u, &basis, &cfg).unwrap();
        let ev = energy(&v, &basis, &cfg).unwrap();
        assert!((eu.total - ev.total).abs() < 1e-12 * (1.0 + eu.total.abs()));

        // the uniaxial density does depend on direction
        let mut cfg2 = cfg.clone();
        cfg2.anisotropy = AnisotropyPotential::uniaxial();
        let d2 = cube(4, Boundary::Neumann);
        let b2 = build_basis(&d2, 4).unwrap();
        let e1 = VectorField::from_fn(&d2, 3, |_, out| out.copy_from_slice(&[1.0, 0.0, 0.0]));
        let e2 = VectorField::from_fn(&d2, 3, |_, out| out.copy_from_slice(&[0.0, 1.0, 0.0]));
        let a1 = energy(&e1, &b2, &cfg2).unwrap().anisotropy;
        let a2 = energy(&e2, &b2, &cfg2).unwrap().anisotropy;
        assert!(a1.abs() < 1e-14 && (a2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn accumulated_strength_examples() {
        // zero current
        let z = SpinCurrent::zero(3);
        assert_eq!(accumulate_i(&z, 0.7, 5.0).unwrap(), 0.0);

        // constant sup norm c over [0, 2]: I = β²c²T exactly
        let d = cube(4, Boundary::Neumann);
        struct Const;
        impl CurrentFn for Const {
            fn eval(&self, _x: &[f64], _t: f64, out: &mut [f64]) {
                out.copy_from_slice(&[0.6, 0.0, 0.8]);
            }
        }
        let times: Vec<f64> = (0..21).map(|i| i as f64 * 0.1).collect();
        let cur = SpinCurrent::analytic(Arc::new(Const), &d, &times);
        let got = accumulate_i(&cur, 0.5, 2.0).unwrap();
        assert!((got - 0.25 * 1.0 * 2.0).abs() < 1e-12);

        // partial horizon cuts the last trapezoid
        let got = accumulate_i(&cur, 0.5, 1.55).unwrap();
        assert!((got - 0.25 * 1.55).abs() < 1e-12);
    }

    #[test]
    fn accumulated_strength_matches_fine_quadrature() {
        let d = cube(4, Boundary::Neumann);
        struct Pulse;
        impl CurrentFn for Pulse {
            fn eval(&self, _x: &[f64], t: f64, out: &mut [f64]) {
                out.copy_from_slice(&[1.0 + 0.3 * (3.0 * t).sin(), 0.0, 0.0]);
            }
        }
        let nt = 20000;
        let t_final = 2.0;
        let times: Vec<f64> = (0..=nt).map(|i| t_final * i as f64 / nt as f64).collect();
        let cur = SpinCurrent::analytic(Arc::new(Pulse), &d, &times);
        let beta = 0.8;
        let got = accumulate_i(&cur, beta, t_final).unwrap();
        // ∫ (1 + 0.3 sin 3t)² dt over [0, 2], closed form
        let f = |t: f64| {
            t + 0.3 * 2.0 * (-(3.0 * t).cos() / 3.0) + 0.09 * (t / 2.0 - (6.0 * t).sin() / 12.0)
        };
        let want = beta * beta * (f(t_final) - f(0.0));
        assert!((got - want).abs() < 1e-6, "got {got}, want {want}");
    }

    #[test]
    fn accumulated_strength_needs_coverage() {
        let d = cube(4, Boundary::Neumann);
        struct Const;
        impl CurrentFn for Const {
            fn eval(&self, _x: &[f64], _t: f64, out: &mut [f64]) {
                out.copy_from_slice(&[1.0, 0.0, 0.0]);
            }
        }
        let times: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let cur = SpinCurrent::analytic(Arc::new(Const), &d, &times);
        assert!(matches!(
            accumulate_i(&cur, 1.0, 2.0),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn tabulated_current_interpolates() {
        let d = cube(4, Boundary::Neumann);
        let f0 = VectorField::from_fn(&d, 3, |_, out| out.copy_from_slice(&[1.0, 0.0, 0.0]));
        let f1 = VectorField::from_fn(&d, 3, |_, out| out.copy_from_slice(&[0.0, 2.0, 0.0]));
        let cur = SpinCurrent::tabulated(vec![0.0, 1.0], vec![f0, f1]).unwrap();
        let mid = cur.field_at(&d, 0.5).unwrap();
        for p in 0..mid.num_points() {
            assert!((mid.at(p)[0] - 0.5).abs() < 1e-15);
            assert!((mid.at(p)[1] - 1.0).abs() < 1e-15);
        }
        assert!(matches!(cur.field_at(&d, 1.5), Err(Error::SeriesTooShort { .. })));
        assert!((cur.sup_norm_at(0.5).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let neumann = cube(4, Boundary::Neumann);
        let torus = cube(4, Boundary::Periodic);
        let cfg = ModelConfig::plain(0.5, 0.0, 0.1, FlowKind::LlgSpinCurrent, 3);
        assert!(cfg.validate_for(&neumann).is_ok());
        assert!(matches!(cfg.validate_for(&torus), Err(Error::FlowMismatch(_))));
        assert!((cfg.gamma() - 1.25).abs() < 1e-15);

        let cfg = ModelConfig::plain(0.5, 0.0, 0.1, FlowKind::HeatFlowTorus, 3);
        assert!(cfg.validate_for(&torus).is_ok());
        assert!(matches!(cfg.validate_for(&neumann), Err(Error::FlowMismatch(_))));

        let mut cfg = ModelConfig::plain(0.5, 0.0, 0.1, FlowKind::HeatFlowBounded, 3);
        cfg.demag = true;
        assert!(matches!(cfg.validate_for(&neumann), Err(Error::FlowMismatch(_))));
        cfg.flow = FlowKind::LlgSpinCurrent;
        // kernel missing
        assert!(matches!(cfg.validate_for(&neumann), Err(Error::FlowMismatch(_))));

        let d2 = BoxDomain::new(vec![1.0; 2], vec![4; 2], Boundary::Neumann).unwrap();
        let cfg = ModelConfig::plain(0.5, 0.0, 0.1, FlowKind::LlgSpinCurrent, 3);
        assert!(matches!(cfg.validate_for(&d2), Err(Error::DomainMismatch(_))));
    }
}
