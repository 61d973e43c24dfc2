//! Embedded Runge-Kutta 5(4) integrator with step-size control.
//!
//! Used as an independent cross-check for low-dimensional reductions of the
//! coefficient dynamics: the main steppers never call into this code, so an
//! agreement between the two is evidence, not tautology.

/// Dormand-Prince 5(4) coefficients.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
/// Difference between the 5th-order weights (the last row of `A`) and the
/// embedded 4th-order weights; dotted with the stages it gives the local
/// error estimate.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Integrates y' = f(t, y) from `t0` to `t1` and returns y(t1).
///
/// Classic adaptive embedded pair with PI-free step control: the step is
/// accepted when the scaled error norm is below one, and the next step size
/// follows the fifth-root rule with a safety factor. Panics if the
/// controller drives the step below 1e-14 of the interval, which signals an
/// unsuitable right-hand side rather than a recoverable condition.
pub fn integrate<F>(f: F, y0: &[f64], t0: f64, t1: f64, rtol: f64, atol: f64) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    assert!(t1 >= t0, "integration runs forward");
    assert!(rtol > 0.0 && atol > 0.0, "tolerances must be positive");
    let dim = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    if t1 == t0 {
        return y;
    }

    let span = t1 - t0;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    k[0] = f(t, &y);
    let mut h = initial_step(&f, t, &y, &k[0], rtol, atol, span);
    let mut stage = vec![0.0; dim];

    while t < t1 {
        h = h.min(t1 - t);
        assert!(h > 1e-14 * span, "step size collapsed at t = {t}");

        for s in 0..6 {
            for d in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s + 1) {
                    acc += A[s][j] * kj[d];
                }
                stage[d] = y[d] + h * acc;
            }
            k[s + 1] = f(t + C[s] * h, &stage);
        }

        // 5th-order candidate is the s = 5 stage argument (FSAL layout)
        let ynew = stage.clone();
        let mut err: f64 = 0.0;
        for d in 0..dim {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[d];
            }
            let scale = atol + rtol * y[d].abs().max(ynew[d].abs());
            err += (h * e / scale).powi(2);
        }
        err = (err / dim as f64).sqrt();

        if err <= 1.0 {
            t += h;
            y = ynew;
            k[0] = k[6].clone();
        } else {
            k[0] = f(t, &y);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    y
}

fn initial_step<F>(f: &F, t0: f64, y: &[f64], f0: &[f64], rtol: f64, atol: f64, span: f64) -> f64
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let norm = |v: &[f64], w: &[f64]| -> f64 {
        let mut acc = 0.0;
        for d in 0..v.len() {
            let scale = atol + rtol * w[d].abs();
            acc += (v[d] / scale).powi(2);
        }
        (acc / v.len() as f64).sqrt()
    };
    let d0 = norm(y, y);
    let d1 = norm(f0, y);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let probe: Vec<f64> = y.iter().zip(f0).map(|(yi, fi)| yi + h0 * fi).collect();
    let f1 = f(t0 + h0, &probe);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff, y) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}
