//! Calibrated a priori envelope for the energy ledger.
//!
//! The tracked quantity is E(t) = sup_{s≤t} ∫|∇u|² + ∫₀ᵗ∫|u_s|² + α∫₀ᵗ∫|J(u)×Δu|²,
//! and the envelope has the Gronwall shape
//!
//!   E(t) ≤ C·t + (C·I(t) + 1)·(H₀ + C·t)·exp(C·I(t))
//!
//! with H₀ the initial H¹ energy and I(t) the accumulated current strength.
//! The constant is never asserted a priori: it is fitted as the smallest C
//! making the bound hold on one calibration run, then checked verbatim on
//! the others.

use super::EnergyLedger;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct EnvelopeViolation {
    pub run: usize,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub struct EnvelopeReport {
    pub c_star: f64,
    pub violations: Vec<EnvelopeViolation>,
}

/// Per-timestamp envelope data distilled from one ledger.
struct RunProfile {
    h1_initial: f64,
    /// (t, E(t), I(t)) triples.
    samples: Vec<(f64, f64, f64)>,
}

fn profile(ledger: &EnergyLedger, alpha: f64) -> RunProfile {
    let rows = ledger.rows();
    assert!(!rows.is_empty(), "ledger must hold at least one row");
    let h1_initial = rows[0].l2_sq + rows[0].grad_l2_sq;
    let mut samples = Vec::with_capacity(rows.len());
    let mut sup_grad: f64 = 0.0;
    let mut dissipation = 0.0;
    for (k, row) in rows.iter().enumerate() {
        if k > 0 {
            let dt = row.t - rows[k - 1].t;
            dissipation += 0.5
                * dt
                * (row.dt_u_l2_sq + rows[k - 1].dt_u_l2_sq
                    + alpha * (row.cross_lap_l2_sq + rows[k - 1].cross_lap_l2_sq));
        }
        sup_grad = sup_grad.max(row.grad_l2_sq);
        samples.push((row.t, sup_grad + dissipation, row.i_accum));
    }
    RunProfile { h1_initial, samples }
}

fn envelope_rhs(c: f64, t: f64, i_acc: f64, h1: f64) -> f64 {
    c * t + (c * i_acc + 1.0) * (h1 + c * t) * (c * i_acc).exp()
}

fn holds(c: f64, run: &RunProfile) -> bool {
    run.samples.iter().all(|&(t, lhs, i_acc)| {
        lhs <= envelope_rhs(c, t, i_acc, run.h1_initial) * (1.0 + 1e-12)
    })
}

/// Fits the smallest constant bounding the calibration run, then reports
/// every (run, t) sample where another ledger escapes that envelope.
/// `alpha` weights the cross-product dissipation term and must be the
/// damping shared by all runs.
pub fn gronwall_envelope(
    ledgers: &[EnergyLedger],
    calibration_index: usize,
    alpha: f64,
) -> Result<EnvelopeReport> {
    assert!(calibration_index < ledgers.len(), "calibration index out of range");
    assert!(alpha >= 0.0, "damping weight must be nonnegative");
    let profiles: Vec<RunProfile> = ledgers.iter().map(|l| profile(l, alpha)).collect();
    let cal = &profiles[calibration_index];

    let c_star = if holds(0.0, cal) {
        0.0
    } else {
        let mut hi = 1.0;
        while !holds(hi, cal) {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::CalibrationFailed);
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if holds(mid, cal) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };

    let mut violations = Vec::new();
    for (r, run) in profiles.iter().enumerate() {
        if r == calibration_index {
            continue;
        }
        for &(t, lhs, i_acc) in &run.samples {
            let rhs = envelope_rhs(c_star, t, i_acc, run.h1_initial);
            if lhs > rhs * (1.0 + 1e-12) {
                violations.push(EnvelopeViolation { run: r, t, lhs, rhs });
            }
        }
    }
    Ok(EnvelopeReport { c_star, violations })
}
