//! Demo driver shared by the browser bindings and the host test suite.
//!
//! Everything in this module is target-independent Rust so the demo physics
//! run under plain `cargo test`; `lib.rs` only adapts the surface to
//! JavaScript.

use std::f64::consts::PI;
use std::sync::Arc;

use micromag::diagnostics;
use micromag::grid::{build_basis, Boundary, BoxDomain, VectorField};
use micromag::physics::{FlowKind, ModelConfig};
use micromag::solver::{self, GalerkinState, StepperConfig};
use serde::Serialize;

/// Number of collocation points along the line. Fixed so the page only has
/// to expose the truncation order and the regularization strength.
pub const RESOLUTION: usize = 96;

/// Hard cap on steps per `advance` call so a scripting mistake cannot wedge
/// the browser tab.
pub const MAX_STEPS_PER_CALL: usize = 50_000;

/// Step size as a multiple of the largest basis eigenvalue's reciprocal.
/// The damping torque linearizes to a diffusion at full rate no matter how
/// small ε is, so the probe used for configured runs is too generous here;
/// half the explicit Euler window keeps RK4 stable for every preset and any
/// ε in (0, 1].
const DT_PER_EIGENVALUE: f64 = 0.5;

/// Built-in initial profiles and flow types the page can select.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Preset {
    /// Strongly damped precession of a tilted band; relaxes to the pole.
    Relax,
    /// The same tilt with weak damping, so the band spirals for a while
    /// before settling.
    Precess,
    /// Heat flow of a half great circle joining the two poles. The free
    /// Neumann ends let it unwind toward a constant map.
    Wall,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Preset> {
        match name {
            "relax" => Some(Preset::Relax),
            "precess" => Some(Preset::Precess),
            "wall" => Some(Preset::Wall),
            _ => None,
        }
    }

    fn flow(self) -> FlowKind {
        match self {
            Preset::Relax | Preset::Precess => FlowKind::LlgSpinCurrent,
            Preset::Wall => FlowKind::HeatFlowBounded,
        }
    }

    fn alpha(self) -> f64 {
        match self {
            Preset::Relax => 1.0,
            Preset::Precess => 0.05,
            // The heat flow takes no damping parameter; the value is unused.
            Preset::Wall => 1.0,
        }
    }

    /// Polar angle of the initial profile at `x ∈ [0, 1]`. Both shapes have
    /// vanishing slope at the ends, so they sit inside the Neumann basis,
    /// and their harmonic content decays like a Bessel tail, which keeps
    /// even coarse truncations close to the sphere.
    fn polar_angle(self, x: f64) -> f64 {
        match self {
            Preset::Relax | Preset::Precess => 0.9 * (PI * x).cos(),
            Preset::Wall => 0.5 * PI * (1.0 - (PI * x).cos()),
        }
    }
}

/// Scalar diagnostics of the current state, serialized for the page.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Stats {
    pub time: f64,
    pub steps: u64,
    pub dt: f64,
    pub energy: f64,
    pub l2_sq: f64,
    pub grad_l2_sq: f64,
    pub velocity_sq: f64,
    pub max_modulus: f64,
    pub excess: f64,
}

/// One live simulation: a Galerkin state plus its stepper and step count.
pub struct Demo {
    state: GalerkinState,
    stepper: StepperConfig,
    steps: u64,
}

impl Demo {
    /// Builds a fresh run on `[0, 1]` with `modes` basis functions and
    /// regularization `epsilon`. `preset` is `relax`, `precess`, or `wall`.
    pub fn new(preset: &str, modes: usize, epsilon: f64) -> Result<Demo, String> {
        let preset = Preset::parse(preset).ok_or_else(|| {
            format!("unknown preset '{preset}' (expected relax, precess, or wall)")
        })?;
        if !(4..=RESOLUTION).contains(&modes) {
            return Err(format!("modes must lie in 4..={RESOLUTION}, got {modes}"));
        }
        if !epsilon.is_finite() || epsilon <= 0.0 || epsilon > 1.0 {
            return Err(format!("epsilon must lie in (0, 1], got {epsilon}"));
        }
        let domain = BoxDomain::new(vec![1.0], vec![RESOLUTION], Boundary::Neumann)
            .map_err(|e| e.to_string())?;
        let basis = Arc::new(build_basis(&domain, modes).map_err(|e| e.to_string())?);
        let config = ModelConfig::plain(preset.alpha(), 0.0, epsilon, preset.flow(), 1);
        let u0 = VectorField::from_fn(&domain, 3, |x, out| {
            let theta = preset.polar_angle(x[0]);
            out[0] = theta.sin();
            out[1] = 0.0;
            out[2] = theta.cos();
        });
        let dt = DT_PER_EIGENVALUE / basis.max_eigenvalue();
        let state = solver::initial_state(&u0, &basis, config).map_err(|e| e.to_string())?;
        Ok(Demo { state, stepper: StepperConfig::rk4(dt), steps: 0 })
    }

    /// Advances the flow by `n` steps. A rejected step reports an error and
    /// leaves the state at the last accepted step.
    pub fn advance(&mut self, n: usize) -> Result<(), String> {
        if n > MAX_STEPS_PER_CALL {
            return Err(format!("at most {MAX_STEPS_PER_CALL} steps per call, got {n}"));
        }
        for _ in 0..n {
            let (next, _) =
                solver::step_traced(&self.state, &self.stepper).map_err(|e| e.to_string())?;
            self.state = next;
            self.steps += 1;
        }
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    /// The fixed step size chosen from the stability probe at construction.
    pub fn dt(&self) -> f64 {
        self.stepper.dt
    }

    /// Sample coordinates in `[0, 1]`, one per grid point.
    pub fn positions(&self) -> Vec<f64> {
        let domain = self.state.basis.domain();
        (0..RESOLUTION).map(|i| domain.coord(0, i)).collect()
    }

    /// Interleaved `u1, u2, u3` at each grid point, left to right.
    pub fn magnetization(&self) -> Vec<f64> {
        self.state.field().data().to_vec()
    }

    /// Current scalar diagnostics; costs one right-hand-side evaluation.
    pub fn stats(&self) -> Result<Stats, String> {
        let rc = solver::rhs(&self.state).map_err(|e| e.to_string())?;
        let row =
            diagnostics::ledger_row(&self.state, &rc, None).map_err(|e| e.to_string())?;
        Ok(Stats {
            time: row.t,
            steps: self.steps,
            dt: self.stepper.dt,
            energy: row.energy_total,
            l2_sq: row.l2_sq,
            grad_l2_sq: row.grad_l2_sq,
            velocity_sq: row.dt_u_l2_sq,
            max_modulus: row.max_modulus,
            excess: row.q_monitor,
        })
    }
}
