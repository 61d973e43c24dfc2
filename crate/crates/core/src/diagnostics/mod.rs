//! Measurable residuals and monitors for the flows.
//!
//! Every estimate the solver is supposed to satisfy is tracked as a number:
//! the per-step energy ledger holds the quadratures entering the a priori
//! bound, `l2_dissipation_defect` measures the exact L² decay identity,
//! `q_monitor` watches the maximum principle, and the weak-form machinery
//! (separate submodule) integrates solutions against test functions.

use std::io;

mod envelope;
mod weakform;

pub use envelope::{gronwall_envelope, EnvelopeReport, EnvelopeViolation};
pub use weakform::{
    cross_gradient_identity_gap, gilbert_form_defect, gilbert_form_defect_with_gamma,
    recombination_pair, test_library, weak_residual, weak_residual_signed,
    weak_residuals_signed, Superposition, TestFunction, TestShape, WeakResidualReport,
};

use crate::error::{Error, Result};
use crate::grid::{ModeCoefficients, VectorField};
use crate::physics::{accumulate_i, cross3, dot, energy};
use crate::solver::{rhs, GalerkinState};

/// Column names of the ledger CSV, in emission order.
pub const LEDGER_COLUMNS: [&str; 11] = [
    "t",
    "l2_sq",
    "grad_l2_sq",
    "dt_u_l2_sq",
    "cross_lap_l2_sq",
    "eps_lap_l2_sq",
    "energy_total",
    "q_monitor",
    "I_accum",
    "max_modulus",
    "stage_grad_l2_sq",
];

/// One sampling instant of every tracked quadrature.
///
/// `stage_grad_l2_sq` belongs to the step that produced the row: it is the
/// quadrature-weighted gradient energy of the integrator's internal stages
/// (the single midpoint stage, or the Simpson combination of the four
/// explicit stages), against which the discrete L² decay identity is exact.
/// The first row of a run carries its own `grad_l2_sq` there.
#[derive(Clone, Copy, Debug)]
pub struct LedgerRow {
    pub t: f64,
    pub l2_sq: f64,
    pub grad_l2_sq: f64,
    pub dt_u_l2_sq: f64,
    pub cross_lap_l2_sq: f64,
    pub eps_lap_l2_sq: f64,
    pub energy_total: f64,
    pub q_monitor: f64,
    pub i_accum: f64,
    pub max_modulus: f64,
    pub stage_grad_l2_sq: f64,
}

impl LedgerRow {
    fn values(&self) -> [f64; 11] {
        [
            self.t,
            self.l2_sq,
            self.grad_l2_sq,
            self.dt_u_l2_sq,
            self.cross_lap_l2_sq,
            self.eps_lap_l2_sq,
            self.energy_total,
            self.q_monitor,
            self.i_accum,
            self.max_modulus,
            self.stage_grad_l2_sq,
        ]
    }
}

/// Append-only per-run record of the tracked quadratures, tagged with the
/// run's ε so identity defects can be evaluated without the state.
pub struct EnergyLedger {
    epsilon: f64,
    rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn new(epsilon: f64) -> Self {
        assert!(epsilon >= 0.0 && epsilon.is_finite(), "epsilon must be finite and >= 0");
        Self { epsilon, rows: Vec::new() }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn push(&mut self, row: LedgerRow) {
        assert!(row.values().iter().all(|v| v.is_finite()), "ledger entries must be finite");
        if let Some(last) = self.rows.last() {
            assert!(row.t > last.t, "ledger times must increase: {} after {}", row.t, last.t);
        }
        self.rows.push(row);
    }

    /// Worst per-step relative defect of the discrete decay identity
    /// d/dt ∫|u|² = −2ε∫|∇u|², evaluated against the stage gradients.
    pub fn l2_dissipation_defect(&self) -> Result<f64> {
        if self.rows.len() < 2 {
            return Err(Error::TooFewRows { have: self.rows.len(), need: 2 });
        }
        let mut worst: f64 = 0.0;
        for w in self.rows.windows(2) {
            let dt = w[1].t - w[0].t;
            let rate = (w[1].l2_sq - w[0].l2_sq) / dt;
            let defect = (rate + 2.0 * self.epsilon * w[1].stage_grad_l2_sq).abs();
            worst = worst.max(defect / w[0].l2_sq.max(1.0));
        }
        Ok(worst)
    }

    /// Trapezoid-in-time integral of one column selected by `f`.
    pub fn time_integral(&self, f: impl Fn(&LedgerRow) -> f64) -> f64 {
        let mut acc = 0.0;
        for w in self.rows.windows(2) {
            acc += 0.5 * (w[1].t - w[0].t) * (f(&w[0]) + f(&w[1]));
        }
        acc
    }

    /// Step-weighted sum of the stage gradients: the exact discrete
    /// counterpart of ∫₀ᵀ ∫|∇u|² dx dt for the steppers used here.
    pub fn stage_grad_time_integral(&self) -> f64 {
        self.rows.windows(2).map(|w| (w[1].t - w[0].t) * w[1].stage_grad_l2_sq).sum()
    }

    /// Writes the CSV with the documented column order, floats at 17
    /// significant digits.
    pub fn to_csv<W: io::Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{}", LEDGER_COLUMNS.join(","))?;
        for row in &self.rows {
            let vals = row.values();
            let mut line = String::with_capacity(24 * vals.len());
            for (i, v) in vals.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{v:.16e}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Assembles one ledger row from a state and a right-hand-side evaluation
/// at that state. `stage_grad` is the stage-gradient bookkeeping of the step
/// that led here; pass `None` for a row not produced by a step.
pub fn ledger_row(
    state: &GalerkinState,
    rhs_coeffs: &ModeCoefficients,
    stage_grad: Option<f64>,
) -> Result<LedgerRow> {
    let basis = &state.basis;
    let cfg = &state.config;
    let u = state.field();
    let lap = basis.synthesize(&basis.laplacian_coeffs(&state.coeffs));

    let vol_w = basis.domain().cell_volume();
    let mut cross_lap = 0.0;
    for p in 0..u.num_points() {
        let up = u.at(p);
        let r = dot(up, up).sqrt();
        let s = if r > 1.0 { 1.0 / r } else { 1.0 };
        let j = [up[0] * s, up[1] * s, up[2] * s];
        let c = cross3(&j, lap.at(p));
        cross_lap += dot(&c, &c);
    }
    cross_lap *= vol_w;

    let grad = basis.grad_l2_sq(&state.coeffs);
    Ok(LedgerRow {
        t: state.time,
        l2_sq: state.coeffs.l2_sq(),
        grad_l2_sq: grad,
        dt_u_l2_sq: rhs_coeffs.l2_sq(),
        cross_lap_l2_sq: cross_lap,
        eps_lap_l2_sq: cfg.epsilon * basis.lap_l2_sq(&state.coeffs),
        energy_total: energy(&u, basis, cfg)?.total,
        q_monitor: q_monitor(&u),
        i_accum: accumulate_i(&cfg.current, cfg.beta, state.time)?,
        max_modulus: u.max_modulus(),
        stage_grad_l2_sq: stage_grad.unwrap_or(grad),
    })
}

/// Evaluates the right-hand side at the state and appends one row.
pub fn record(state: &GalerkinState, ledger: &mut EnergyLedger) -> Result<()> {
    let rc = rhs(state)?;
    let row = ledger_row(state, &rc, None)?;
    ledger.push(row);
    Ok(())
}

/// Excess-modulus monitor ∫_{|u|>1} |u|²(1 − 1/|u|) dx. Zero exactly when
/// the field stays in the closed unit ball; nonincreasing along the flows.
pub fn q_monitor(u: &VectorField) -> f64 {
    let w = u.domain().cell_volume();
    let mut acc = 0.0;
    for p in 0..u.num_points() {
        let up = u.at(p);
        let r2: f64 = up.iter().map(|v| v * v).sum();
        if r2 > 1.0 {
            let r = r2.sqrt();
            acc += r2 * (1.0 - 1.0 / r);
        }
    }
    acc * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, BoxDomain};

    fn cube(n: usize) -> BoxDomain {
        BoxDomain::new(vec![1.0; 3], vec![n; 3], Boundary::Neumann).unwrap()
    }

    #[test]
    fn q_monitor_examples() {
        let d = cube(8);
        let inside = VectorField::from_fn(&d, 3, |_, out| out.copy_from_slice(&[0.3, 0.0, 0.9]));
        assert_eq!(q_monitor(&inside), 0.0);

        // |u| = 2 on the unit-volume box: q = 4(1 − 1/2)·Vol = 2
        let doubled = VectorField::from_fn(&d, 3, |_, out| out.copy_from_slice(&[0.0, 0.0, 2.0]));
        assert!((q_monitor(&doubled) - 2.0).abs() < 1e-12);

        // only the region with |u| > 1 contributes
        let half = VectorField::from_fn(&d, 3, |x, out| {
            let m = if x[0] < 0.5 { 2.0 } else { 0.5 };
            out.copy_from_slice(&[0.0, 0.0, m]);
        });
        assert!((q_monitor(&half) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ledger_enforces_shape() {
        let mut ledger = EnergyLedger::new(0.1);
        let mut row = LedgerRow {
            t: 0.0,
            l2_sq: 1.0,
            grad_l2_sq: 0.5,
            dt_u_l2_sq: 0.0,
            cross_lap_l2_sq: 0.0,
            eps_lap_l2_sq: 0.0,
            energy_total: 0.25,
            q_monitor: 0.0,
            i_accum: 0.0,
            max_modulus: 1.0,
            stage_grad_l2_sq: 0.5,
        };
        assert!(matches!(
            ledger.l2_dissipation_defect(),
            Err(Error::TooFewRows { have: 0, need: 2 })
        ));
        ledger.push(row);
        row.t = 0.1;
        row.l2_sq = 1.0 - 2.0 * 0.1 * 0.5 * 0.1;
        ledger.push(row);
        // the synthetic pair satisfies the decay identity exactly
        assert!(ledger.l2_dissipation_defect().unwrap() < 1e-15);

        let mut csv = Vec::new();
        ledger.to_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), LEDGER_COLUMNS.join(","));
        assert_eq!(lines.clone().count(), 2);
        let first = lines.next().unwrap();
        assert_eq!(first.split(',').count(), 11);
        assert!(first.starts_with("0.0000000000000000e0,1.0000000000000000e0"));
    }

    #[test]
    #[should_panic(expected = "times must increase")]
    fn ledger_rejects_backwards_time() {
        let mut ledger = EnergyLedger::new(0.0);
        let row = LedgerRow {
            t: 1.0,
            l2_sq: 1.0,
            grad_l2_sq: 0.0,
            dt_u_l2_sq: 0.0,
            cross_lap_l2_sq: 0.0,
            eps_lap_l2_sq: 0.0,
            energy_total: 0.0,
            q_monitor: 0.0,
            i_accum: 0.0,
            max_modulus: 1.0,
            stage_grad_l2_sq: 0.0,
        };
        ledger.push(row);
        ledger.push(row);
    }

    #[test]
    fn time_integral_trapezoid() {
        let mut ledger = EnergyLedger::new(0.0);
        for k in 0..5 {
            let t = k as f64 * 0.25;
            ledger.push(LedgerRow {
                t,
                l2_sq: 1.0,
                grad_l2_sq: t,
                dt_u_l2_sq: 0.0,
                cross_lap_l2_sq: 0.0,
                eps_lap_l2_sq: 0.0,
                energy_total: 0.0,
                q_monitor: 0.0,
                i_accum: 0.0,
                max_modulus: 1.0,
                stage_grad_l2_sq: t,
            });
        }
        // ∫₀¹ t dt = 1/2, exact for trapezoid on a linear integrand
        assert!((ledger.time_integral(|r| r.grad_l2_sq) - 0.5).abs() < 1e-15);
        // stage sum uses the right-endpoint stage values: Σ 0.25·t_{k+1}
        let want = 0.25 * (0.25 + 0.5 + 0.75 + 1.0);
        assert!((ledger.stage_grad_time_integral() - want).abs() < 1e-15);
    }
}
