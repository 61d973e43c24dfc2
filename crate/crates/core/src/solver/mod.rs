//! Time integration of the regularized Galerkin systems.
//!
//! The state is the coefficient vector of the solution in the spectral
//! basis; the right-hand side is εΔu minus the projected torque of the
//! selected flow, with every nonlinearity evaluated pointwise on the grid
//! through the clip map J(u) = u / max(1, |u|). Two steppers are provided:
//! classical RK4 as the fast default, and an implicit midpoint rule whose
//! single stage makes the discrete L² decay identity hold to iteration
//! tolerance, which is what the identity checks in `diagnostics` rely on.

pub mod reference;

use std::sync::Arc;

use crate::diagnostics::{ledger_row, EnergyLedger};
use crate::error::{Error, Result};
use crate::grid::{ModeCoefficients, SpectralBasis, VectorField};
use crate::physics::{cross3, dot, effective_field, FlowKind, ModelConfig};

/// Allowed excess of max |u| over 1 after an accepted step. Steps landing
/// beyond ten times this are rejected as a blow-up signal.
pub const MODULUS_TOL: f64 = 1e-3;

/// Solution snapshot in coefficient space, with everything needed to
/// evaluate the dynamics again: the model, the basis, and the clock.
#[derive(Clone)]
pub struct GalerkinState {
    pub coeffs: ModeCoefficients,
    pub time: f64,
    pub config: ModelConfig,
    pub basis: Arc<SpectralBasis>,
}

impl GalerkinState {
    /// The grid realization of the current coefficients.
    pub fn field(&self) -> VectorField {
        self.basis.synthesize(&self.coeffs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Rk4,
    ImplicitMidpoint,
}

#[derive(Clone, Copy, Debug)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: f64,
    /// Relative residual target of the midpoint stage iteration.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl StepperConfig {
    pub fn rk4(dt: f64) -> Self {
        Self { scheme: Scheme::Rk4, dt, newton_tol: 1e-12, newton_max_iter: 200 }
    }

    pub fn implicit_midpoint(dt: f64) -> Self {
        Self { scheme: Scheme::ImplicitMidpoint, dt, newton_tol: 1e-12, newton_max_iter: 200 }
    }
}

/// Projects unit-length initial data onto the basis and starts the clock.
///
/// The data must be pointwise unit to 1e-6; the projection itself may then
/// leave the sphere slightly, which is the scheme's intended behavior.
pub fn initial_state(
    u0: &VectorField,
    basis: &Arc<SpectralBasis>,
    config: ModelConfig,
) -> Result<GalerkinState> {
    if u0.ncomp() != 3 {
        return Err(Error::WrongDimension { need: 3, have: u0.ncomp() });
    }
    config.validate_for(u0.domain())?;
    let mut defect: f64 = 0.0;
    for p in 0..u0.num_points() {
        let up = u0.at(p);
        defect = defect.max((dot(up, up).sqrt() - 1.0).abs());
    }
    if defect > 1e-6 {
        return Err(Error::NotUnitLength { defect });
    }
    let coeffs = basis.analyze(u0)?;
    Ok(GalerkinState { coeffs, time: 0.0, config, basis: Arc::clone(basis) })
}

/// The pointwise torque of the configured flow, before projection:
/// `α J×(J×h) + J×h` for damped precession, `J×(J×h̄)` for the heat flows,
/// with J the clipped field and h the effective field at time `t`.
pub fn torque_field(
    u: &VectorField,
    basis: &SpectralBasis,
    cfg: &ModelConfig,
    t: f64,
) -> Result<VectorField> {
    let h = effective_field(u, basis, cfg, t)?;
    let mut out = VectorField::zeros(u.domain(), 3);
    let precession = cfg.flow == FlowKind::LlgSpinCurrent;
    let alpha = cfg.alpha;
    let (ud, hd, od) = (u.data(), h.data(), out.data_mut());
    for p in 0..ud.len() / 3 {
        let up = &ud[3 * p..3 * p + 3];
        let r2 = dot(up, up);
        let s = if r2 > 1.0 { 1.0 / r2.sqrt() } else { 1.0 };
        let j = [up[0] * s, up[1] * s, up[2] * s];
        let c1 = cross3(&j, &hd[3 * p..3 * p + 3]);
        let c2 = cross3(&j, &c1);
        for a in 0..3 {
            od[3 * p + a] = if precession { alpha * c2[a] + c1[a] } else { c2[a] };
        }
    }
    Ok(out)
}

fn rhs_at(
    basis: &SpectralBasis,
    cfg: &ModelConfig,
    coeffs: &ModeCoefficients,
    t: f64,
) -> Result<ModeCoefficients> {
    let u = basis.synthesize(coeffs);
    let torque = torque_field(&u, basis, cfg, t)?;
    let mut out = basis.laplacian_coeffs(coeffs);
    out.scale(cfg.epsilon);
    out.axpy(-1.0, &basis.analyze(&torque)?);
    Ok(out)
}

/// Coefficient-space right-hand side εΔu − P_n(torque) at the state's time.
pub fn rhs(state: &GalerkinState) -> Result<ModeCoefficients> {
    rhs_at(&state.basis, &state.config, &state.coeffs, state.time)
}

fn add_scaled(base: &ModeCoefficients, a: f64, v: &ModeCoefficients) -> ModeCoefficients {
    let mut out = base.clone();
    out.axpy(a, v);
    out
}

/// One step plus the stage-gradient bookkeeping of the discrete L² decay
/// identity: the gradient energy of the midpoint stage, or the Simpson
/// combination of the four RK4 stage gradients. Against these values the
/// per-step identity d/dt ∫|u|² = −2ε∫|∇u|² is exact up to stage-iteration
/// tolerance (midpoint) or the scheme's own order (RK4).
pub fn step_traced(state: &GalerkinState, stepper: &StepperConfig) -> Result<(GalerkinState, f64)> {
    assert!(stepper.dt > 0.0 && stepper.dt.is_finite(), "dt must be positive");
    let basis = &state.basis;
    let cfg = &state.config;
    let y = &state.coeffs;
    let (t, dt) = (state.time, stepper.dt);

    let (ynew, stage_grad) = match stepper.scheme {
        Scheme::Rk4 => {
            let k1 = rhs_at(basis, cfg, y, t)?;
            let y2 = add_scaled(y, 0.5 * dt, &k1);
            let k2 = rhs_at(basis, cfg, &y2, t + 0.5 * dt)?;
            let y3 = add_scaled(y, 0.5 * dt, &k2);
            let k3 = rhs_at(basis, cfg, &y3, t + 0.5 * dt)?;
            let y4 = add_scaled(y, dt, &k3);
            let k4 = rhs_at(basis, cfg, &y4, t + dt)?;
            let g = basis.grad_l2_sq(y)
                + 2.0 * basis.grad_l2_sq(&y2)
                + 2.0 * basis.grad_l2_sq(&y3)
                + basis.grad_l2_sq(&y4);
            let mut out = y.clone();
            out.axpy(dt / 6.0, &k1);
            out.axpy(dt / 3.0, &k2);
            out.axpy(dt / 3.0, &k3);
            out.axpy(dt / 6.0, &k4);
            (out, g / 6.0)
        }
        Scheme::ImplicitMidpoint => {
            let th = t + 0.5 * dt;
            let tol = stepper.newton_tol * state.coeffs.l2_sq().sqrt().max(1.0);
            let mut z = add_scaled(y, 0.5 * dt, &rhs_at(basis, cfg, y, th)?);
            let mut omega = 1.0;
            let mut res_prev = f64::INFINITY;
            let mut solved = None;
            for iter in 0..stepper.newton_max_iter.max(1) {
                let fz = rhs_at(basis, cfg, &z, th)?;
                let target = add_scaled(y, 0.5 * dt, &fz);
                let r = add_scaled(&target, -1.0, &z);
                let res = r.l2_sq().sqrt();
                if res <= tol {
                    solved = Some(fz);
                    break;
                }
                if !res.is_finite() || (iter + 1 == stepper.newton_max_iter.max(1)) {
                    return Err(Error::NewtonDiverged { residual: res, iters: iter + 1 });
                }
                omega = if res > res_prev {
                    f64::max(0.5 * omega, 1e-4)
                } else {
                    f64::min(1.4 * omega, 1.0)
                };
                res_prev = res;
                z.axpy(omega, &r);
            }
            let fz = solved.expect("loop either solves or errors");
            (add_scaled(y, dt, &fz), basis.grad_l2_sq(&z))
        }
    };

    let unew = basis.synthesize(&ynew);
    let m = unew.max_modulus();
    if !m.is_finite() || m > 1.0 + 10.0 * MODULUS_TOL {
        return Err(Error::StepRejected { max_modulus: m });
    }
    let next = GalerkinState {
        coeffs: ynew,
        time: t + dt,
        config: state.config.clone(),
        basis: Arc::clone(basis),
    };
    Ok((next, stage_grad))
}

/// One step of the configured scheme.
pub fn step(state: &GalerkinState, stepper: &StepperConfig) -> Result<GalerkinState> {
    step_traced(state, stepper).map(|(s, _)| s)
}

/// Sampled output of an evolution: snapshot times, fields, and the
/// instantaneous velocities (grid realization of the right-hand side).
pub struct RunOutput {
    pub times: Vec<f64>,
    pub fields: Vec<VectorField>,
    pub velocities: Vec<VectorField>,
    pub final_state: GalerkinState,
}

impl RunOutput {
    fn push_snapshot(&mut self, state: &GalerkinState, rhs_coeffs: &ModeCoefficients) {
        self.times.push(state.time);
        self.fields.push(state.field());
        self.velocities.push(state.basis.synthesize(rhs_coeffs));
    }
}

fn march(
    state: GalerkinState,
    stepper: &StepperConfig,
    t_end: f64,
    ledger: &mut EnergyLedger,
    every: usize,
) -> Result<RunOutput> {
    assert!(every >= 1, "snapshot cadence must be at least one");
    assert!(
        t_end >= state.time - 1e-12 * t_end.abs().max(1.0),
        "cannot march backwards: t_end = {t_end} < time = {}",
        state.time
    );
    let mut state = state;
    let mut out = RunOutput {
        times: Vec::new(),
        fields: Vec::new(),
        velocities: Vec::new(),
        final_state: state.clone(),
    };
    let tol_t = 1e-12 * t_end.abs().max(1.0);

    let fresh = ledger.rows().last().map_or(true, |r| r.t < state.time - tol_t);
    let rc = rhs(&state)?;
    if fresh {
        ledger.push(ledger_row(&state, &rc, None)?);
    }
    out.push_snapshot(&state, &rc);

    let mut steps = 0usize;
    while t_end - state.time > tol_t {
        let dt_eff = stepper.dt.min(t_end - state.time);
        let sub = StepperConfig { dt: dt_eff, ..*stepper };
        let (next, stage_grad) = step_traced(&state, &sub)?;
        state = next;
        let last = t_end - state.time <= tol_t;
        if last {
            state.time = t_end;
        }
        let rc = rhs(&state)?;
        ledger.push(ledger_row(&state, &rc, Some(stage_grad))?);
        steps += 1;
        if last || steps % every == 0 {
            out.push_snapshot(&state, &rc);
        }
    }
    out.final_state = state;
    Ok(out)
}

/// Marches the state to `t_end`, appending one ledger row per accepted step
/// (plus the initial row when the ledger does not already end at the
/// state's time). The final partial step is shortened to land on `t_end`
/// exactly.
pub fn evolve(
    state: GalerkinState,
    stepper: &StepperConfig,
    t_end: f64,
    ledger: &mut EnergyLedger,
) -> Result<GalerkinState> {
    march(state, stepper, t_end, ledger, usize::MAX).map(|out| out.final_state)
}

/// Like `evolve` but also returns snapshots every `every`-th step, always
/// including the initial and final instants.
pub fn evolve_recording(
    state: GalerkinState,
    stepper: &StepperConfig,
    t_end: f64,
    ledger: &mut EnergyLedger,
    every: usize,
) -> Result<RunOutput> {
    march(state, stepper, t_end, ledger, every)
}

/// Stability estimate dt_max = 0.5 / (ε·|μ|_max + ‖h‖_∞) from the stiffest
/// diffusion mode and the current effective-field magnitude. Infinite when
/// both vanish.
pub fn cfl_probe(state: &GalerkinState) -> Result<f64> {
    let u = state.field();
    let h = effective_field(&u, &state.basis, &state.config, state.time)?;
    let mu_max = state.basis.max_eigenvalue() - 1.0;
    let denom = state.config.epsilon * mu_max + h.max_modulus();
    Ok(if denom <= 0.0 { f64::INFINITY } else { 0.5 / denom })
}

/// Outcome of a refinement schedule: one run per (n, ε) entry, consecutive
/// space-time L² differences, the per-run defect of the volume identity
/// ∫|u(T)|² + 2ε∫₀ᵀ∫|∇u|² = Vol(Ω), and the final-time mean of (1 − |u|²)
/// per run.
pub struct ContinuationReport {
    pub entries: Vec<(usize, f64)>,
    pub runs: Vec<RunOutput>,
    pub ledgers: Vec<EnergyLedger>,
    pub cauchy_consecutive: Vec<f64>,
    pub vol_identity_defects: Vec<f64>,
    pub final_mean_unit_gap: Vec<f64>,
}

/// Runs the same initial data through a refinement schedule of truncation
/// and regularization parameters. The schedule must be nonempty with n
/// nondecreasing and ε nonincreasing; every run shares the stepper and the
/// horizon so the snapshots align in time.
pub fn continuation(
    u0: &VectorField,
    cfg: &ModelConfig,
    schedule: &[(usize, f64)],
    stepper: &StepperConfig,
    t_end: f64,
) -> Result<ContinuationReport> {
    assert!(!schedule.is_empty(), "schedule must be nonempty");
    for w in schedule.windows(2) {
        assert!(w[0].0 <= w[1].0, "truncations must be nondecreasing");
        assert!(w[0].1 >= w[1].1, "regularizations must be nonincreasing");
    }
    for &(_, eps) in schedule {
        assert!(eps > 0.0 && eps <= 1.0, "epsilon must lie in (0, 1]");
    }

    let vol = u0.domain().volume();
    let mut report = ContinuationReport {
        entries: schedule.to_vec(),
        runs: Vec::new(),
        ledgers: Vec::new(),
        cauchy_consecutive: Vec::new(),
        vol_identity_defects: Vec::new(),
        final_mean_unit_gap: Vec::new(),
    };

    for &(n, eps) in schedule {
        let basis = Arc::new(crate::grid::build_basis(u0.domain(), n)?);
        let mut cfg_run = cfg.clone();
        cfg_run.epsilon = eps;
        let state = initial_state(u0, &basis, cfg_run)?;
        let mut ledger = EnergyLedger::new(eps);
        let run = evolve_recording(state, stepper, t_end, &mut ledger, 1)?;

        let rows = ledger.rows();
        let l2_final = rows.last().expect("ledger has the initial row").l2_sq;
        let space_time_grad = ledger.stage_grad_time_integral();
        report.vol_identity_defects.push((l2_final + 2.0 * eps * space_time_grad - vol).abs());
        report.final_mean_unit_gap.push((vol - l2_final) / vol);
        report.runs.push(run);
        report.ledgers.push(ledger);
    }

    for pair in report.runs.windows(2) {
        report.cauchy_consecutive.push(space_time_l2_distance(&pair[0], &pair[1]));
    }
    Ok(report)
}

/// ‖u_a − u_b‖_{L²(Ω×[0,T])} between two runs sampled at the same times,
/// by the trapezoid rule in time.
pub fn space_time_l2_distance(a: &RunOutput, b: &RunOutput) -> f64 {
    assert_eq!(a.times.len(), b.times.len(), "runs sampled at different cadences");
    let mut sq = Vec::with_capacity(a.times.len());
    for (k, (&ta, &tb)) in a.times.iter().zip(&b.times).enumerate() {
        assert!((ta - tb).abs() <= 1e-9 * ta.abs().max(1.0), "snapshot times diverge");
        let mut diff = a.fields[k].clone();
        diff.axpy(-1.0, &b.fields[k]);
        let d = diff.l2_norm();
        sq.push(d * d);
    }
    let mut acc = 0.0;
    for k in 1..a.times.len() {
        acc += 0.5 * (a.times[k] - a.times[k - 1]) * (sq[k] + sq[k - 1]);
    }
    acc.sqrt()
}
