//! Cell-interaction coefficients of the discrete Newtonian-potential kernel.
//!
//! The field map is h(x) = ∇∇ Σ_b ∫ φ(x−y) u_b(y) dy with φ = 1/(4π|x−y|),
//! discretized on axis-aligned cells by averaging over the target cell. The
//! double cell integral of ∂_a∂_b φ reduces to 27-point second differences
//! of a sextuple antiderivative, one scalar function for the diagonal and one
//! for the off-diagonal components. An independent closed-form point-field
//! oracle (charged faces of a uniformly magnetized prism) lives here too and
//! pins signs, scales, and axis permutations in the tests.

#[cfg(test)]
use std::f64::consts::PI;

/// Sextuple antiderivative for the diagonal component aligned with the first
/// argument. Even in each argument.
fn newell_f(x: f64, y: f64, z: f64) -> f64 {
    let (x, y, z) = (x.abs(), y.abs(), z.abs());
    let (x2, y2, z2) = (x * x, y * y, z * z);
    let r = (x2 + y2 + z2).sqrt();
    let mut s = (2.0 * x2 - y2 - z2) * r / 6.0;
    if y > 0.0 {
        let d = (x2 + z2).sqrt();
        if d > 0.0 {
            s += 0.5 * y * (z2 - x2) * (y / d).asinh();
        }
    }
    if z > 0.0 {
        let d = (x2 + y2).sqrt();
        if d > 0.0 {
            s += 0.5 * z * (y2 - x2) * (z / d).asinh();
        }
    }
    if x > 0.0 && y > 0.0 && z > 0.0 {
        s -= x * y * z * (y * z / (x * r)).atan();
    }
    s
}

/// Sextuple antiderivative for the off-diagonal component of the first two
/// arguments. Odd in each of the first two arguments, even in the third.
fn newell_g(x: f64, y: f64, z: f64) -> f64 {
    let sign = if (x < 0.0) != (y < 0.0) { -1.0 } else { 1.0 };
    let (x, y, z) = (x.abs(), y.abs(), z.abs());
    let (x2, y2, z2) = (x * x, y * y, z * z);
    let r = (x2 + y2 + z2).sqrt();
    let mut s = -x * y * r / 3.0;
    if x > 0.0 && y > 0.0 && z > 0.0 {
        s += x * y * z * (z / (x2 + y2).sqrt()).asinh();
    }
    if y > 0.0 {
        s += y * (3.0 * z2 - y2) / 6.0 * (x / (y2 + z2).sqrt()).asinh();
    }
    if x > 0.0 {
        s += x * (3.0 * z2 - x2) / 6.0 * (y / (x2 + z2).sqrt()).asinh();
    }
    if z > 0.0 {
        s -= z * z2 / 6.0 * (x * y / (z * r)).atan();
    }
    if y > 0.0 && z > 0.0 {
        s -= 0.5 * z * y2 * (x * z / (y * r)).atan();
    }
    if x > 0.0 && z > 0.0 {
        s -= 0.5 * z * x2 * (y * z / (x * r)).atan();
    }
    sign * s
}

/// Second-difference weights applied along each axis of the antiderivative.
pub(crate) const W2: [f64; 3] = [1.0, -2.0, 1.0];

/// Antiderivative for the (a,b) component evaluated at the displacement `v`,
/// routed through the axis permutations that reduce every component to the
/// two canonical functions.
pub(crate) fn pair_antiderivative(a: usize, b: usize, v: [f64; 3]) -> f64 {
    match (a.min(b), a.max(b)) {
        (0, 0) => newell_f(v[0], v[1], v[2]),
        (1, 1) => newell_f(v[1], v[2], v[0]),
        (2, 2) => newell_f(v[2], v[0], v[1]),
        (0, 1) => newell_g(v[0], v[1], v[2]),
        (0, 2) => newell_g(v[0], v[2], v[1]),
        (1, 2) => newell_g(v[1], v[2], v[0]),
        _ => unreachable!("component indices must be < 3"),
    }
}

/// Interaction coefficient K_ab for a source cell acting on a target cell
/// `r` cells away, both of size `d`. The coefficient is the average over the
/// target cell of the a-component of the field produced by the source cell
/// uniformly magnetized along b. Definitional but slow; the table builder
/// shares antiderivative samples between offsets instead.
#[cfg(test)]
pub(crate) fn kernel_entry(a: usize, b: usize, r: [i64; 3], d: [f64; 3]) -> f64 {
    let base = [r[0] as f64 * d[0], r[1] as f64 * d[1], r[2] as f64 * d[2]];
    let mut acc = 0.0;
    for (si, &wi) in W2.iter().enumerate() {
        for (sj, &wj) in W2.iter().enumerate() {
            for (sk, &wk) in W2.iter().enumerate() {
                let v = [
                    base[0] + (si as f64 - 1.0) * d[0],
                    base[1] + (sj as f64 - 1.0) * d[1],
                    base[2] + (sk as f64 - 1.0) * d[2],
                ];
                acc += wi * wj * wk * pair_antiderivative(a, b, v);
            }
        }
    }
    acc / (4.0 * PI * d[0] * d[1] * d[2])
}

/// Field at `p` of a unit surface charge on the axis-aligned rectangle
/// [ax0,ax1]×[by0,by1] at height `c`, normal to the z axis, in the
/// convention φ = 1/(4π r). Valid off the charged plane.
#[cfg(test)]
fn charged_rectangle_field(p: [f64; 3], ax: [f64; 2], by: [f64; 2], c: f64) -> [f64; 3] {
    let z = p[2] - c;
    let mut e = [0.0; 3];
    for (i, &a) in ax.iter().enumerate() {
        for (j, &b) in by.iter().enumerate() {
            let sgn = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            let xx = p[0] - a;
            let yy = p[1] - b;
            let rr = (xx * xx + yy * yy + z * z).sqrt();
            e[0] -= sgn * (yy + rr).ln();
            e[1] -= sgn * (xx + rr).ln();
            e[2] += sgn * (xx * yy / (z * rr)).atan();
        }
    }
    for v in e.iter_mut() {
        *v *= 1.0 / (4.0 * PI);
    }
    e
}

/// Point field at `p` of the prism [lo, hi] uniformly magnetized along axis
/// `b` with unit magnetization: the superposition of its two charged faces.
#[cfg(test)]
pub(crate) fn prism_point_field(p: [f64; 3], lo: [f64; 3], hi: [f64; 3], b: usize) -> [f64; 3] {
    let perm = [(b + 1) % 3, (b + 2) % 3, b];
    let pp = [p[perm[0]], p[perm[1]], p[perm[2]]];
    let ax = [lo[perm[0]], hi[perm[0]]];
    let by = [lo[perm[1]], hi[perm[1]]];
    let top = charged_rectangle_field(pp, ax, by, hi[perm[2]]);
    let bot = charged_rectangle_field(pp, ax, by, lo[perm[2]]);
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[perm[k]] = top[k] - bot[k];
    }
    out
}

/// Independent cell-average oracle: composite Gauss quadrature over the
/// target cell of the point field of the source prism. Offsets of zero are
/// excluded (the point field is only piecewise smooth across the source).
#[cfg(test)]
pub(crate) fn averaged_oracle_entry(a: usize, b: usize, r: [i64; 3], d: [f64; 3]) -> f64 {
    assert!(r != [0, 0, 0], "oracle needs a nonzero offset");
    let lo = [0.0; 3];
    let hi = d;
    let tlo = [r[0] as f64 * d[0], r[1] as f64 * d[1], r[2] as f64 * d[2]];
    // 3-point Gauss on each half of each axis
    let gn = [-(3.0f64 / 5.0).sqrt(), 0.0, (3.0f64 / 5.0).sqrt()];
    let gw = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let mut nodes: Vec<Vec<(f64, f64)>> = Vec::new();
    for ax in 0..3 {
        let mut v = Vec::new();
        for half in 0..2 {
            let a0 = tlo[ax] + 0.5 * d[ax] * half as f64;
            let c = a0 + 0.25 * d[ax];
            let s = 0.25 * d[ax];
            for q in 0..3 {
                v.push((c + s * gn[q], 0.5 * gw[q] * 0.5));
            }
        }
        nodes.push(v);
    }
    let mut acc = 0.0;
    for &(x, wx) in &nodes[0] {
        for &(y, wy) in &nodes[1] {
            for &(z, wz) in &nodes[2] {
                acc += wx * wy * wz * prism_point_field([x, y, z], lo, hi, b)[a];
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force midpoint quadrature of the two charged faces.
    fn prism_field_quadrature(p: [f64; 3], lo: [f64; 3], hi: [f64; 3], b: usize, n: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        let (u, v) = ((b + 1) % 3, (b + 2) % 3);
        let (du, dv) = ((hi[u] - lo[u]) / n as f64, (hi[v] - lo[v]) / n as f64);
        for (face_coord, charge) in [(hi[b], 1.0), (lo[b], -1.0)] {
            for i in 0..n {
                for j in 0..n {
                    let mut s = [0.0; 3];
                    s[u] = lo[u] + (i as f64 + 0.5) * du;
                    s[v] = lo[v] + (j as f64 + 0.5) * dv;
                    s[b] = face_coord;
                    let dx = [p[0] - s[0], p[1] - s[1], p[2] - s[2]];
                    let r2 = dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2];
                    let r3 = r2 * r2.sqrt();
                    for c in 0..3 {
                        out[c] += charge * du * dv * dx[c] / (4.0 * PI * r3);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn face_formula_matches_quadrature() {
        let lo = [0.0, 0.0, 0.0];
        let hi = [1.0, 0.8, 1.3];
        for b in 0..3 {
            for p in [[0.5, 0.4, 2.1], [1.9, 0.3, 0.4], [-0.6, 1.2, 0.9], [0.5, 0.41, 0.6]] {
                let got = prism_point_field(p, lo, hi, b);
                let want = prism_field_quadrature(p, lo, hi, b, 600);
                for c in 0..3 {
                    assert!(
                        (got[c] - want[c]).abs() < 2e-5,
                        "b={b} p={p:?} c={c}: {} vs {}",
                        got[c],
                        want[c]
                    );
                }
            }
        }
    }

    #[test]
    fn interior_point_field_of_cube_is_minus_third() {
        // at the center of a cube the field is exactly −1/3 along the
        // magnetization axis by symmetry
        let lo = [0.0; 3];
        let hi = [1.0; 3];
        let got = prism_point_field([0.5, 0.5, 0.5], lo, hi, 2);
        assert!((got[2] + 1.0 / 3.0).abs() < 1e-12, "center field {got:?}");
        assert!(got[0].abs() < 1e-12 && got[1].abs() < 1e-12);
    }

    #[test]
    fn kernel_entries_match_averaged_oracle() {
        for d in [[0.1, 0.1, 0.1], [0.1, 0.15, 0.08]] {
            for r in [[2i64, 1, 1], [1, 0, 0], [0, 0, 3], [-2, 1, -1]] {
                for a in 0..3 {
                    for b in a..3 {
                        let got = kernel_entry(a, b, r, d);
                        let want = averaged_oracle_entry(a, b, r, d);
                        let scale = want.abs().max(1e-4);
                        assert!(
                            (got - want).abs() / scale < 5e-3,
                            "K[{a}{b}] at {r:?}, cells {d:?}: {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn self_cell_trace_is_minus_one() {
        // cube cells: each diagonal −1/3
        let d = [0.05, 0.05, 0.05];
        let mut trace = 0.0;
        for a in 0..3 {
            let k = kernel_entry(a, a, [0, 0, 0], d);
            assert!((k + 1.0 / 3.0).abs() < 1e-6, "diagonal {a}: {k}");
            trace += k;
        }
        assert!((trace + 1.0).abs() < 1e-6);

        // anisotropic cells: diagonals differ, trace still −1
        let d = [0.05, 0.08, 0.02];
        let ks: Vec<f64> = (0..3).map(|a| kernel_entry(a, a, [0, 0, 0], d)).collect();
        assert!((ks.iter().sum::<f64>() + 1.0).abs() < 1e-6, "trace {ks:?}");
        assert!((ks[0] - ks[1]).abs() > 1e-3, "flat cells must split the factors");
    }

    #[test]
    fn far_cell_traces_vanish() {
        let d = [0.1, 0.1, 0.1];
        for r in [[1i64, 0, 0], [2, 1, 1], [0, 3, 2]] {
            let t: f64 = (0..3).map(|a| kernel_entry(a, a, r, d)).sum();
            assert!(t.abs() < 1e-9, "trace at {r:?} is {t}");
        }
    }

    #[test]
    fn mirror_parities() {
        let d = [0.1, 0.12, 0.09];
        let r0 = [1i64, 2, 1];
        for a in 0..3 {
            for b in a..3 {
                let base = kernel_entry(a, b, r0, d);
                for c in 0..3 {
                    let mut r = r0;
                    r[c] = -r[c];
                    let flipped = kernel_entry(a, b, r, d);
                    let parity = if (c == a) != (c == b) { -1.0 } else { 1.0 };
                    // flips reorder the floating-point accumulation, so the
                    // match is to rounding, not bitwise
                    assert!(
                        (flipped - parity * base).abs() <= 1e-12 * base.abs().max(1.0),
                        "K[{a}{b}] flip axis {c}: {flipped} vs {base}"
                    );
                }
            }
        }
    }

    #[test]
    fn far_field_decays_cubically() {
        let d = [0.05, 0.05, 0.05];
        let k4 = kernel_entry(0, 0, [4, 0, 0], d);
        let k8 = kernel_entry(0, 0, [8, 0, 0], d);
        let ratio = k4 / k8;
        assert!((ratio - 8.0).abs() < 1.6, "decay ratio {ratio}");
        // aligned pairs attract: positive coefficient along the offset axis
        assert!(k4 > 0.0);
    }
}
