//! Weak-form residuals of the three flows against smooth test functions.
//!
//! Each flow has a distributional formulation quantified over smooth test
//! maps; a discrete run realizes it only approximately, and the residual
//! |LHS − RHS| measured here is the quantity that must shrink under joint
//! refinement of truncation, regularization, and step size. The module also
//! carries the two intermediate functionals whose recombination reproduces
//! the damped-precession weak form exactly, and the Gilbert-form defect.

use crate::error::{Error, Result};
use crate::grid::{Boundary, BoxDomain, SpectralBasis, VectorField};
use crate::physics::{cross3, dot, FlowKind, ModelConfig};
use crate::solver::RunOutput;

/// A smooth ℝ³-valued test map φ(x, t) with analytic space derivatives.
pub trait TestShape {
    fn id(&self) -> &str;
    fn value(&self, x: &[f64], t: f64) -> [f64; 3];
    /// ∂φ/∂x_axis.
    fn gradient(&self, x: &[f64], t: f64, axis: usize) -> [f64; 3];
}

#[derive(Clone, Copy, Debug)]
enum Wave {
    Cos,
    Sin,
}

#[derive(Clone, Copy, Debug)]
struct SpatialFactor {
    axis: usize,
    /// Radians per unit coordinate.
    freq: f64,
    wave: Wave,
}

impl SpatialFactor {
    fn value(&self, x: &[f64]) -> f64 {
        match self.wave {
            Wave::Cos => (self.freq * x[self.axis]).cos(),
            Wave::Sin => (self.freq * x[self.axis]).sin(),
        }
    }

    fn derivative(&self, x: &[f64]) -> f64 {
        match self.wave {
            Wave::Cos => -self.freq * (self.freq * x[self.axis]).sin(),
            Wave::Sin => self.freq * (self.freq * x[self.axis]).cos(),
        }
    }
}

/// Canonical test map: a tensor product of low-order waves times a smooth
/// time bump vanishing at both ends of the horizon, pointing along one
/// coordinate direction. An optional unit anchor turns it into the
/// sphere-valued variant normalize(anchor + a·bump·ψ·e_dir).
#[derive(Clone, Debug)]
pub struct TestFunction {
    id: String,
    dir: usize,
    factors: Vec<SpatialFactor>,
    horizon: f64,
    anchor: Option<[f64; 3]>,
}

const ANCHOR_MIX: f64 = 0.4;

impl TestFunction {
    fn bump(&self, t: f64) -> f64 {
        let s = (std::f64::consts::PI * t / self.horizon).sin();
        s * s
    }

    fn psi(&self, x: &[f64]) -> f64 {
        self.factors.iter().map(|f| f.value(x)).product()
    }

    fn dpsi(&self, x: &[f64], axis: usize) -> f64 {
        let mut out = 0.0;
        for (k, fk) in self.factors.iter().enumerate() {
            if fk.axis != axis {
                continue;
            }
            let mut term = fk.derivative(x);
            for (j, fj) in self.factors.iter().enumerate() {
                if j != k {
                    term *= fj.value(x);
                }
            }
            out += term;
        }
        out
    }

    /// The sphere-valued variant anchored at a unit vector: the raw map is
    /// mixed into the anchor and the result is radially normalized.
    pub fn normalized(mut self, anchor: [f64; 3]) -> Self {
        assert!((dot(&anchor, &anchor) - 1.0).abs() < 1e-12, "anchor must be unit");
        self.id = format!("{}-on-sphere", self.id);
        self.anchor = Some(anchor);
        self
    }
}

impl TestShape for TestFunction {
    fn id(&self) -> &str {
        &self.id
    }

    fn value(&self, x: &[f64], t: f64) -> [f64; 3] {
        let a = self.bump(t) * self.psi(x);
        match self.anchor {
            None => {
                let mut out = [0.0; 3];
                out[self.dir] = a;
                out
            }
            Some(c) => {
                let mut w = c;
                w[self.dir] += ANCHOR_MIX * a;
                let r = dot(&w, &w).sqrt();
                [w[0] / r, w[1] / r, w[2] / r]
            }
        }
    }

    fn gradient(&self, x: &[f64], t: f64, axis: usize) -> [f64; 3] {
        let da = self.bump(t) * self.dpsi(x, axis);
        match self.anchor {
            None => {
                let mut out = [0.0; 3];
                out[self.dir] = da;
                out
            }
            Some(c) => {
                let a = self.bump(t) * self.psi(x);
                let mut w = c;
                w[self.dir] += ANCHOR_MIX * a;
                let mut dw = [0.0; 3];
                dw[self.dir] = ANCHOR_MIX * da;
                let r2 = dot(&w, &w);
                let r = r2.sqrt();
                let wd = dot(&w, &dw);
                let mut out = [0.0; 3];
                for c in 0..3 {
                    out[c] = dw[c] / r - w[c] * wd / (r2 * r);
                }
                out
            }
        }
    }
}

/// Pointwise superposition of test maps, for linearity checks.
pub struct Superposition<'a> {
    id: String,
    parts: &'a [TestFunction],
}

impl<'a> Superposition<'a> {
    pub fn new(parts: &'a [TestFunction]) -> Self {
        let id = parts.iter().map(|p| p.id()).collect::<Vec<_>>().join("+");
        Self { id, parts }
    }
}

impl TestShape for Superposition<'_> {
    fn id(&self) -> &str {
        &self.id
    }

    fn value(&self, x: &[f64], t: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for p in self.parts {
            let v = p.value(x, t);
            for c in 0..3 {
                out[c] += v[c];
            }
        }
        out
    }

    fn gradient(&self, x: &[f64], t: f64, axis: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for p in self.parts {
            let v = p.gradient(x, t, axis);
            for c in 0..3 {
                out[c] += v[c];
            }
        }
        out
    }
}

/// The twelve canonical test maps for a domain and horizon: four spatial
/// shapes (constant, one low wave per of two axis choices, one mixed
/// product) crossed with the three coordinate directions.
pub fn test_library(domain: &BoxDomain, horizon: f64) -> Vec<TestFunction> {
    assert!(horizon > 0.0, "horizon must be positive");
    let m = domain.dim();
    let periodic = domain.boundary() == Boundary::Periodic;
    let base = if periodic { 2.0 * std::f64::consts::PI } else { std::f64::consts::PI };
    let freq = |axis: usize, k: f64| base * k / domain.lengths()[axis];
    let a1 = 1.min(m - 1);
    let a2 = 2.min(m - 1);

    let shapes: [(&str, Vec<SpatialFactor>); 4] = [
        ("const", vec![]),
        ("wave1", vec![SpatialFactor { axis: 0, freq: freq(0, 1.0), wave: Wave::Cos }]),
        (
            "wave23",
            vec![
                SpatialFactor {
                    axis: a1,
                    freq: freq(a1, 1.0),
                    wave: if periodic { Wave::Sin } else { Wave::Cos },
                },
                SpatialFactor { axis: a2, freq: freq(a2, 1.0), wave: Wave::Cos },
            ],
        ),
        (
            "mix",
            vec![
                SpatialFactor { axis: 0, freq: freq(0, 2.0), wave: Wave::Cos },
                SpatialFactor { axis: a1, freq: freq(a1, 1.0), wave: Wave::Cos },
            ],
        ),
    ];

    let mut lib = Vec::with_capacity(12);
    for (name, factors) in &shapes {
        for dir in 0..3 {
            lib.push(TestFunction {
                id: format!("{name}-e{}", dir + 1),
                dir,
                factors: factors.clone(),
                horizon,
                anchor: None,
            });
        }
    }
    lib
}

/// One weak-form residual evaluation.
#[derive(Clone, Debug)]
pub struct WeakResidualReport {
    pub test_function_id: String,
    pub residual: f64,
    pub refinement_level: usize,
    pub flow_kind: FlowKind,
}

/// Everything x-dependent a snapshot contributes to the space integrals.
struct SnapshotData {
    u: VectorField,
    ut: VectorField,
    /// Component layout c·m + a for ∂_a u_c.
    grad: VectorField,
    /// −∇Φ̃(J(u)) [+ h_d] + βJ·∇u, demag included only for the damped
    /// precession flow.
    htilde: VectorField,
}

fn snapshot_data(run: &RunOutput, cfg: &ModelConfig, k: usize, t: f64) -> Result<SnapshotData> {
    let basis = &run.final_state.basis;
    let u = run.fields[k].clone();
    let grad = basis.gradient(&u)?;
    let mut htilde = VectorField::zeros(u.domain(), 3);
    {
        let (ud, hd) = (u.data(), htilde.data_mut());
        for p in 0..ud.len() / 3 {
            let mut z = [ud[3 * p], ud[3 * p + 1], ud[3 * p + 2]];
            let r2 = dot(&z, &z);
            if r2 > 1.0 {
                let inv = 1.0 / r2.sqrt();
                for zc in &mut z {
                    *zc *= inv;
                }
            }
            let g = cfg.anisotropy.grad_ext(&z);
            for c in 0..3 {
                hd[3 * p + c] = -g[c];
            }
        }
    }
    if cfg.flow == FlowKind::LlgSpinCurrent && cfg.demag {
        let kernel = cfg
            .demag_kernel
            .as_deref()
            .ok_or_else(|| Error::FlowMismatch("stray field enabled without a kernel".into()))?;
        htilde.axpy(1.0, &kernel.demag_field(&u)?);
    }
    if cfg.beta != 0.0 && !cfg.current.is_zero() {
        let j = cfg.current.field_at(u.domain(), t)?;
        let adv = basis.directional_derivative(&j, &u)?;
        htilde.axpy(cfg.beta, &adv);
    }
    Ok(SnapshotData { u, ut: run.velocities[k].clone(), grad, htilde })
}

fn trapezoid(times: &[f64], vals: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 1..times.len() {
        acc += 0.5 * (times[k] - times[k - 1]) * (vals[k] + vals[k - 1]);
    }
    acc
}

/// Which functional a snapshot integrand realizes.
#[derive(Clone, Copy)]
enum Functional {
    /// Damped precession weak form: ⟨u_t,φ⟩ − α⟨u×u_t,φ⟩ on the left,
    /// (1+α²)(⟨u×∇u,∇φ⟩ − ⟨u×h̃,φ⟩) on the right.
    Llg { alpha: f64 },
    /// Heat-flow weak form: ⟨u_t,φ⟩ + ⟨∇u,∇φ⟩ on the left,
    /// |∇u|²⟨u,φ⟩ + ⟨u×h̃,u×φ⟩ on the right.
    Heat,
    /// Intermediate precession functional with the ∇(u×φ) pairing.
    Intermediate18 { alpha: f64 },
    /// The same after substituting u×φ for φ.
    Intermediate19 { alpha: f64 },
}

fn signed_functionals(
    run: &RunOutput,
    shapes: &[&dyn TestShape],
    cfg: &ModelConfig,
    functional: Functional,
) -> Result<Vec<f64>> {
    assert!(run.times.len() >= 2, "need at least two snapshots for the time quadrature");
    let domain = run.final_state.basis.domain();
    let m = domain.dim();
    let w = domain.cell_volume();
    let mut series = vec![Vec::with_capacity(run.times.len()); shapes.len()];
    let mut x = vec![0.0; m];
    let mut dphi = vec![[0.0; 3]; m];

    for (k, &t) in run.times.iter().enumerate() {
        let data = snapshot_data(run, cfg, k, t)?;
        let (ud, utd, gd, hd) = (data.u.data(), data.ut.data(), data.grad.data(), data.htilde.data());
        for (s, shape) in shapes.iter().enumerate() {
            let mut acc = 0.0;
            for p in 0..ud.len() / 3 {
                domain.point_into(p, &mut x);
                let phi = shape.value(&x, t);
                for (a, slot) in dphi.iter_mut().enumerate() {
                    *slot = shape.gradient(&x, t, a);
                }
                let u = &ud[3 * p..3 * p + 3];
                let ut = &utd[3 * p..3 * p + 3];
                let ht = &hd[3 * p..3 * p + 3];
                let g = &gd[3 * m * p..3 * m * (p + 1)];
                let du = |c: usize, a: usize| g[c * m + a];

                let uxht = cross3(u, ht);
                // Σ_a ⟨u×∂_a u, ∂_a φ⟩ and the ∇(u×φ) pairing
                let mut cross_grad = 0.0;
                let mut cross_grad_sub = 0.0;
                let mut grad_pair = 0.0;
                let mut grad_sq = 0.0;
                for a in 0..m {
                    let dua = [du(0, a), du(1, a), du(2, a)];
                    let uxdu = cross3(u, &dua);
                    cross_grad += dot(&uxdu, &dphi[a]);
                    let mut d_uxphi = cross3(&dua, &phi);
                    let extra = cross3(u, &dphi[a]);
                    for c in 0..3 {
                        d_uxphi[c] += extra[c];
                    }
                    cross_grad_sub += dot(&uxdu, &d_uxphi);
                    grad_pair += dot(&dua, &dphi[a]);
                    grad_sq += dot(&dua, &dua);
                }

                let term = match functional {
                    Functional::Llg { alpha } => {
                        let gamma = 1.0 + alpha * alpha;
                        let lhs = dot(ut, &phi) - alpha * dot(&cross3(u, ut), &phi);
                        let rhs = gamma * (cross_grad - dot(&uxht, &phi));
                        lhs - rhs
                    }
                    Functional::Heat => {
                        let lhs = dot(ut, &phi) + grad_pair;
                        let rhs =
                            grad_sq * dot(u, &phi) + dot(&uxht, &cross3(u, &phi));
                        lhs - rhs
                    }
                    Functional::Intermediate18 { alpha } => {
                        let lhs = dot(ut, &phi);
                        let rhs = -alpha * cross_grad_sub + cross_grad
                            + alpha * dot(&uxht, &cross3(u, &phi))
                            - dot(&uxht, &phi);
                        lhs - rhs
                    }
                    Functional::Intermediate19 { alpha } => {
                        let lhs = dot(&cross3(u, ut), &phi);
                        let rhs = -alpha * cross_grad - cross_grad_sub
                            + alpha * dot(&uxht, &phi)
                            + dot(&uxht, &cross3(u, &phi));
                        lhs - rhs
                    }
                };
                acc += term;
            }
            series[s].push(acc * w);
        }
    }
    Ok(series.iter().map(|vals| trapezoid(&run.times, vals)).collect())
}

fn check_run_flow(run: &RunOutput, cfg: &ModelConfig) -> Result<()> {
    let want = cfg.flow.required_boundary();
    let have = run.final_state.basis.domain().boundary();
    if want != have {
        return Err(Error::FlowMismatch(format!(
            "{:?} weak form needs {:?} boundaries, run has {:?}",
            cfg.flow, want, have
        )));
    }
    Ok(())
}

/// Signed LHS − RHS of the weak formulation matching the configured flow.
pub fn weak_residual_signed(
    run: &RunOutput,
    shape: &dyn TestShape,
    cfg: &ModelConfig,
) -> Result<f64> {
    Ok(weak_residuals_signed(run, &[shape], cfg)?[0])
}

/// Batch variant sharing the per-snapshot field assembly across shapes.
pub fn weak_residuals_signed(
    run: &RunOutput,
    shapes: &[&dyn TestShape],
    cfg: &ModelConfig,
) -> Result<Vec<f64>> {
    check_run_flow(run, cfg)?;
    let functional = match cfg.flow {
        FlowKind::LlgSpinCurrent => Functional::Llg { alpha: cfg.alpha },
        FlowKind::HeatFlowBounded | FlowKind::HeatFlowTorus => Functional::Heat,
    };
    signed_functionals(run, shapes, cfg, functional)
}

/// |LHS − RHS| of the flow's weak formulation against one test map.
pub fn weak_residual(
    run: &RunOutput,
    shape: &dyn TestShape,
    cfg: &ModelConfig,
) -> Result<WeakResidualReport> {
    let signed = weak_residual_signed(run, shape, cfg)?;
    Ok(WeakResidualReport {
        test_function_id: shape.id().to_string(),
        residual: signed.abs(),
        refinement_level: 0,
        flow_kind: cfg.flow,
    })
}

/// The two intermediate precession functionals (signed residuals): the
/// ∇(u×φ)-paired form and its u×φ substitution. Their recombination
/// first − α·second collapses to the damped-precession weak form by pure
/// algebra, which `weak_residual_signed` must reproduce.
pub fn recombination_pair(
    run: &RunOutput,
    shape: &dyn TestShape,
    cfg: &ModelConfig,
) -> Result<(f64, f64)> {
    if cfg.flow != FlowKind::LlgSpinCurrent {
        return Err(Error::FlowMismatch(
            "the intermediate functionals belong to the damped precession flow".into(),
        ));
    }
    check_run_flow(run, cfg)?;
    let a = signed_functionals(run, &[shape], cfg, Functional::Intermediate18 { alpha: cfg.alpha })?;
    let b = signed_functionals(run, &[shape], cfg, Functional::Intermediate19 { alpha: cfg.alpha })?;
    Ok((a[0], b[0]))
}

/// Space integral gap of the pointwise identity
/// −⟨u×∇u, ∇(u×φ)⟩ = −⟨∇u, ∇φ⟩ + |∇u|²⟨u, φ⟩
/// for a unit-length band-limited field, evaluated at one instant.
pub fn cross_gradient_identity_gap(
    u: &VectorField,
    basis: &SpectralBasis,
    shape: &dyn TestShape,
    t: f64,
) -> Result<f64> {
    let domain = basis.domain();
    let m = domain.dim();
    let grad = basis.gradient(u)?;
    let (ud, gd) = (u.data(), grad.data());
    let mut x = vec![0.0; m];
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for p in 0..ud.len() / 3 {
        domain.point_into(p, &mut x);
        let phi = shape.value(&x, t);
        let uu = &ud[3 * p..3 * p + 3];
        let g = &gd[3 * m * p..3 * m * (p + 1)];
        for a in 0..m {
            let dua = [g[a], g[m + a], g[2 * m + a]];
            let dphi = shape.gradient(&x, t, a);
            let uxdu = cross3(uu, &dua);
            let mut d_uxphi = cross3(&dua, &phi);
            let extra = cross3(uu, &dphi);
            for c in 0..3 {
                d_uxphi[c] += extra[c];
            }
            lhs -= dot(&uxdu, &d_uxphi);
            rhs -= dot(&dua, &dphi);
            rhs += dot(&dua, &dua) * dot(uu, &phi);
        }
    }
    Ok(((lhs - rhs) * domain.cell_volume()).abs())
}

/// Normalized space-time defect of the damped-precession identity
/// u_t − α u×u_t + γ u×(h + βJ·∇u) = 0 with γ = 1 + α², evaluated on the
/// stored snapshots. Zero exactly on a fixed point; grows if the wrong γ is
/// supplied, which makes it a sensitivity probe for the γ = 1 + α² coupling.
pub fn gilbert_form_defect(run: &RunOutput, cfg: &ModelConfig) -> Result<f64> {
    gilbert_form_defect_with_gamma(run, cfg, cfg.gamma())
}

pub fn gilbert_form_defect_with_gamma(
    run: &RunOutput,
    cfg: &ModelConfig,
    gamma: f64,
) -> Result<f64> {
    if cfg.flow != FlowKind::LlgSpinCurrent {
        return Err(Error::FlowMismatch(
            "the Gilbert form belongs to the damped precession flow".into(),
        ));
    }
    check_run_flow(run, cfg)?;
    assert!(run.times.len() >= 2, "need at least two snapshots for the time quadrature");

    let mut worst: f64 = 1.0;
    for u in &run.fields {
        let m = u.max_modulus();
        if (m - 1.0).abs() > (worst - 1.0).abs() {
            worst = m;
        }
    }
    if (worst - 1.0).abs() > 1e-3 {
        return Err(Error::NotNearSphere { max_modulus: worst });
    }

    let basis = &run.final_state.basis;
    let w = basis.domain().cell_volume();
    let alpha = cfg.alpha;
    let mut num = Vec::with_capacity(run.times.len());
    let mut den = Vec::with_capacity(run.times.len());
    let mut scale = Vec::with_capacity(run.times.len());
    for (k, &t) in run.times.iter().enumerate() {
        let u = &run.fields[k];
        let ut = &run.velocities[k];
        let h = crate::physics::effective_field(u, basis, cfg, t)?;
        let (ud, utd, hd) = (u.data(), ut.data(), h.data());
        let mut n_acc = 0.0;
        let mut d_acc = 0.0;
        let mut s_acc = 0.0;
        for p in 0..ud.len() / 3 {
            let uu = &ud[3 * p..3 * p + 3];
            let vt = &utd[3 * p..3 * p + 3];
            let uxut = cross3(uu, vt);
            let uxh = cross3(uu, &hd[3 * p..3 * p + 3]);
            let mut r2 = 0.0;
            for c in 0..3 {
                let r = vt[c] - alpha * uxut[c] + gamma * uxh[c];
                r2 += r * r;
            }
            n_acc += r2;
            d_acc += dot(vt, vt);
            s_acc += dot(uu, uu);
        }
        num.push(n_acc * w);
        den.push(d_acc * w);
        scale.push(s_acc * w);
    }
    let total_num = trapezoid(&run.times, &num);
    let total_den = trapezoid(&run.times, &den);
    // A velocity at the roundoff floor of the field itself means a fixed
    // point; dividing by it would amplify pure noise into a defect of
    // order one.
    let floor = 1e-24 * trapezoid(&run.times, &scale);
    if total_den <= floor {
        return Ok(0.0);
    }
    Ok((total_num / total_den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::EnergyLedger;
    use crate::grid::build_basis;
    use crate::physics::{AnisotropyPotential, CurrentFn, SpinCurrent};
    use crate::solver::{evolve_recording, initial_state, StepperConfig};
    use std::sync::Arc;

    fn neumann_cube(res: usize) -> BoxDomain {
        BoxDomain::new(vec![1.0; 3], vec![res; 3], Boundary::Neumann).unwrap()
    }

    fn tilted_field(domain: &BoxDomain, amp: f64) -> VectorField {
        VectorField::from_fn(domain, 3, |x, out| {
            let th = amp * (std::f64::consts::PI * x[0]).cos();
            out[0] = th.sin();
            out[1] = 0.0;
            out[2] = th.cos();
        })
    }

    fn run_llg(
        domain: &BoxDomain,
        n: usize,
        cfg: ModelConfig,
        dt: f64,
        t_end: f64,
    ) -> (RunOutput, ModelConfig) {
        let basis = Arc::new(build_basis(domain, n).unwrap());
        let u0 = tilted_field(domain, 0.5);
        let st = initial_state(&u0, &basis, cfg.clone()).unwrap();
        let mut ledger = EnergyLedger::new(cfg.epsilon);
        let out = evolve_recording(st, &StepperConfig::rk4(dt), t_end, &mut ledger, 1).unwrap();
        (out, cfg)
    }

    struct SwirlCurrent;
    impl CurrentFn for SwirlCurrent {
        fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
            let w = 2.0 * std::f64::consts::PI * t;
            out[0] = w.sin();
            out[1] = w.cos() * (std::f64::consts::PI * x[0]).cos();
            out[2] = 0.5;
        }
    }

    fn driven_llg_config(domain: &BoxDomain, horizon: f64) -> ModelConfig {
        let mut cfg = ModelConfig::plain(0.6, 0.5, 0.05, FlowKind::LlgSpinCurrent, 3);
        cfg.anisotropy = AnisotropyPotential::uniaxial();
        let times: Vec<f64> = (0..=40).map(|k| k as f64 * horizon / 32.0).collect();
        cfg.current = SpinCurrent::analytic(Arc::new(SwirlCurrent), domain, &times);
        cfg
    }

    #[test]
    fn library_has_twelve_distinct_entries() {
        let domain = neumann_cube(6);
        let lib = test_library(&domain, 0.5);
        assert_eq!(lib.len(), 12);
        let mut ids: Vec<&str> = lib.iter().map(|f| f.id()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 12);
        // the bump kills every φ at the horizon ends
        for f in &lib {
            let v = f.value(&[0.3, 0.4, 0.5], 0.0);
            assert_eq!(dot(&v, &v), 0.0);
            let v = f.value(&[0.3, 0.4, 0.5], 0.5);
            assert!(dot(&v, &v) < 1e-28);
        }
    }

    #[test]
    fn gradients_of_test_maps_match_finite_differences() {
        let domain = neumann_cube(6);
        let mut shapes = test_library(&domain, 0.7);
        let sphere = shapes[7].clone().normalized([0.0, 0.0, 1.0]);
        shapes.push(sphere);
        let x0 = [0.37, 0.21, 0.64];
        let t = 0.31;
        let h = 1e-6;
        for f in &shapes {
            for a in 0..3 {
                let g = f.gradient(&x0, t, a);
                let mut xp = x0;
                let mut xm = x0;
                xp[a] += h;
                xm[a] -= h;
                let vp = f.value(&xp, t);
                let vm = f.value(&xm, t);
                for c in 0..3 {
                    let fd = (vp[c] - vm[c]) / (2.0 * h);
                    assert!(
                        (g[c] - fd).abs() < 5e-9,
                        "{}: axis {a} comp {c}: {} vs {}",
                        f.id(),
                        g[c],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn fixed_point_run_has_vanishing_residuals() {
        let domain = neumann_cube(6);
        let basis = Arc::new(build_basis(&domain, 9).unwrap());
        let u0 = VectorField::from_fn(&domain, 3, |_, out| out.copy_from_slice(&[0.0, 0.0, 1.0]));
        let mut cfg = ModelConfig::plain(0.8, 0.0, 0.1, FlowKind::LlgSpinCurrent, 3);
        cfg.anisotropy = AnisotropyPotential::uniaxial();
        let st = initial_state(&u0, &basis, cfg.clone()).unwrap();
        let mut ledger = EnergyLedger::new(0.1);
        let run = evolve_recording(st, &StepperConfig::rk4(0.02), 0.1, &mut ledger, 1).unwrap();
        for shape in test_library(&domain, 0.1) {
            let report = weak_residual(&run, &shape, &cfg).unwrap();
            assert!(report.residual < 1e-10, "{}: {}", report.test_function_id, report.residual);
        }
        assert_eq!(gilbert_form_defect(&run, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn residual_is_linear_in_the_test_map() {
        let domain = neumann_cube(8);
        let cfg = driven_llg_config(&domain, 0.2);
        let (run, cfg) = run_llg(&domain, 29, cfg, 0.01, 0.15);
        let lib = test_library(&domain, 0.15);
        let pair = [lib[4].clone(), lib[9].clone()];
        let sum = Superposition::new(&pair);
        let r_sum = weak_residual_signed(&run, &sum, &cfg).unwrap();
        let r_a = weak_residual_signed(&run, &pair[0], &cfg).unwrap();
        let r_b = weak_residual_signed(&run, &pair[1], &cfg).unwrap();
        let scale = r_a.abs().max(r_b.abs()).max(1e-12);
        assert!(
            (r_sum - (r_a + r_b)).abs() < 1e-9 * scale.max(1.0),
            "{r_sum} vs {} + {}",
            r_a,
            r_b
        );
    }

    #[test]
    fn recombination_collapses_to_the_weak_form() {
        let domain = neumann_cube(8);
        let cfg = driven_llg_config(&domain, 0.2);
        let (run, cfg) = run_llg(&domain, 29, cfg, 0.01, 0.12);
        let lib = test_library(&domain, 0.12);
        for shape in [&lib[1], &lib[6], &lib[11]] {
            let (r18, r19) = recombination_pair(&run, shape, &cfg).unwrap();
            let direct = weak_residual_signed(&run, shape, &cfg).unwrap();
            let combo = r18 - cfg.alpha * r19;
            assert!(
                (combo - direct).abs() < 1e-10 * direct.abs().max(1.0),
                "{}: {combo} vs {direct}",
                shape.id()
            );
        }
    }

    #[test]
    fn heat_flow_residual_shrinks_under_refinement() {
        let domain = neumann_cube(8);
        let u0 = tilted_field(&domain, 0.4);
        let cfg = ModelConfig::plain(0.0, 0.0, 0.1, FlowKind::HeatFlowBounded, 3);
        let horizon = 0.2;
        let lib = test_library(&domain, horizon);
        let shapes: Vec<&dyn TestShape> = lib.iter().map(|f| f as &dyn TestShape).collect();

        let mut totals = Vec::new();
        for (n, eps, dt) in [(11, 0.1, 0.02), (29, 0.05, 0.01)] {
            let basis = Arc::new(build_basis(&domain, n).unwrap());
            let mut cfg_run = cfg.clone();
            cfg_run.epsilon = eps;
            let st = initial_state(&u0, &basis, cfg_run.clone()).unwrap();
            let mut ledger = EnergyLedger::new(eps);
            let run = evolve_recording(
                st,
                &StepperConfig::implicit_midpoint(dt),
                horizon,
                &mut ledger,
                1,
            )
            .unwrap();
            let vals = weak_residuals_signed(&run, &shapes, &cfg_run).unwrap();
            totals.push(vals.iter().map(|v| v.abs()).sum::<f64>());
        }
        assert!(
            totals[1] < totals[0],
            "refinement must shrink the residual: {totals:?}"
        );
    }

    #[test]
    fn unit_band_limited_fields_satisfy_the_substitution_identity() {
        let domain = BoxDomain::new(vec![1.0; 3], vec![8; 3], Boundary::Periodic).unwrap();
        let basis = build_basis(&domain, 7).unwrap();
        let u = VectorField::from_fn(&domain, 3, |x, out| {
            let a = 2.0 * std::f64::consts::PI * x[1] + 0.7;
            out[0] = a.cos();
            out[1] = 0.0;
            out[2] = a.sin();
        });
        for shape in test_library(&domain, 1.0) {
            let gap = cross_gradient_identity_gap(&u, &basis, &shape, 0.4).unwrap();
            assert!(gap < 1e-12, "{}: {gap}", shape.id());
        }
    }

    #[test]
    fn gilbert_defect_gates_and_gamma_sensitivity() {
        let domain = neumann_cube(8);
        let mut cfg = ModelConfig::plain(1.0, 0.0, 0.02, FlowKind::LlgSpinCurrent, 3);
        cfg.anisotropy = AnisotropyPotential::uniaxial();
        let (run, cfg) = run_llg(&domain, 29, cfg, 0.005, 0.1);
        let right = gilbert_form_defect(&run, &cfg).unwrap();
        let wrong = gilbert_form_defect_with_gamma(&run, &cfg, 1.0).unwrap();
        assert!(right.is_finite() && right > 0.0);
        assert!(wrong > 1.5 * right, "γ sensitivity too weak: {wrong} vs {right}");

        let heat_cfg = ModelConfig::plain(0.0, 0.0, 0.05, FlowKind::HeatFlowBounded, 3);
        assert!(matches!(
            gilbert_form_defect(&run, &heat_cfg),
            Err(Error::FlowMismatch(_))
        ));

        let mut far = RunOutput {
            times: run.times.clone(),
            fields: run.fields.clone(),
            velocities: run.velocities.clone(),
            final_state: run.final_state.clone(),
        };
        for f in &mut far.fields {
            f.scale(1.2);
        }
        assert!(matches!(
            gilbert_form_defect(&far, &cfg),
            Err(Error::NotNearSphere { .. })
        ));
    }
}
