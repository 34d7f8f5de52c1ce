//! Shared oracles for the integration suites. Everything here is an
//! independent route: none of it reuses the code paths it is checking.

#![allow(dead_code)]

use gaugekit::flow::gauge_vector_field;
use gaugekit::measure::coefficient_variance;
use gaugekit::SpectralFn;
use num_complex::Complex;

/// Adaptive Runge–Kutta–Fehlberg 4(5) flow for the truncated gauge system,
/// independent of the fixed-step production integrator.
pub fn rkf45_flow(u: &SpectralFn, alpha: f64, n: usize, tol: f64) -> SpectralFn {
    if alpha == 0.0 {
        return u.clone();
    }
    let dir = alpha.signum();
    let total = alpha.abs();
    let mut state = u.clone();
    let mut t = 0.0f64;
    let mut h = (total / 16.0).clamp(1e-6, 0.05);

    let axpy = |base: &SpectralFn, terms: &[(f64, &SpectralFn)]| {
        let mut out = base.clone();
        for (i, c) in out.coeffs_mut().iter_mut().enumerate() {
            let mut acc = *c;
            for &(w, f) in terms {
                acc += f.coeffs()[i].scale(w);
            }
            *c = acc;
        }
        out
    };

    while t < total {
        let step = h.min(total - t);
        let hs = dir * step;
        let k1 = gauge_vector_field(&state, n);
        let k2 = gauge_vector_field(&axpy(&state, &[(hs / 4.0, &k1)]), n);
        let k3 = gauge_vector_field(
            &axpy(&state, &[(3.0 * hs / 32.0, &k1), (9.0 * hs / 32.0, &k2)]),
            n,
        );
        let k4 = gauge_vector_field(
            &axpy(
                &state,
                &[
                    (1932.0 * hs / 2197.0, &k1),
                    (-7200.0 * hs / 2197.0, &k2),
                    (7296.0 * hs / 2197.0, &k3),
                ],
            ),
            n,
        );
        let k5 = gauge_vector_field(
            &axpy(
                &state,
                &[
                    (439.0 * hs / 216.0, &k1),
                    (-8.0 * hs, &k2),
                    (3680.0 * hs / 513.0, &k3),
                    (-845.0 * hs / 4104.0, &k4),
                ],
            ),
            n,
        );
        let k6 = gauge_vector_field(
            &axpy(
                &state,
                &[
                    (-8.0 * hs / 27.0, &k1),
                    (2.0 * hs, &k2),
                    (-3544.0 * hs / 2565.0, &k3),
                    (1859.0 * hs / 4104.0, &k4),
                    (-11.0 * hs / 40.0, &k5),
                ],
            ),
            n,
        );
        let fifth = axpy(
            &state,
            &[
                (16.0 * hs / 135.0, &k1),
                (6656.0 * hs / 12825.0, &k3),
                (28561.0 * hs / 56430.0, &k4),
                (-9.0 * hs / 50.0, &k5),
                (2.0 * hs / 55.0, &k6),
            ],
        );
        let fourth = axpy(
            &state,
            &[
                (25.0 * hs / 216.0, &k1),
                (1408.0 * hs / 2565.0, &k3),
                (2197.0 * hs / 4104.0, &k4),
                (-hs / 5.0, &k5),
            ],
        );
        let err = fifth.l2_distance(&fourth);
        let cap = tol * state.l2_norm().max(1.0);
        if err <= cap || step <= 1e-12 {
            state = fifth;
            t += step;
        }
        let grow = if err == 0.0 {
            4.0
        } else {
            (0.9 * (cap / err).powf(0.2)).clamp(0.1, 4.0)
        };
        h = (h * grow).max(1e-12);
    }
    state
}

/// Determinant by LU with partial pivoting (row-major square matrix).
pub fn lu_det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0f64;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (top, rest) = a.split_at_mut(col + 1);
            for (v, w) in top[col][col..].iter().zip(rest[row - col - 1][col..].iter_mut()) {
                *w -= f * v;
            }
        }
    }
    det
}

/// Real Jacobian of the map u ↦ P_N G^N_α(u) on the 2(2N+1) coordinates
/// (Re, Im per mode), by central finite differences of a supplied flow.
pub fn fd_jacobian(
    u: &SpectralFn,
    n: usize,
    h: f64,
    flow: impl Fn(&SpectralFn) -> SpectralFn,
) -> Vec<Vec<f64>> {
    let dim = 2 * (2 * n + 1);
    let mut jac = vec![vec![0.0f64; dim]; dim];
    let read = |f: &SpectralFn| -> Vec<f64> {
        let mut out = Vec::with_capacity(dim);
        for k in -(n as i64)..=n as i64 {
            let c = f.coeff(k);
            out.push(c.re);
            out.push(c.im);
        }
        out
    };
    #[allow(clippy::needless_range_loop)]
    for col in 0..dim {
        let mode = (col / 2) as i64 - n as i64;
        let delta = if col % 2 == 0 {
            Complex::new(h, 0.0)
        } else {
            Complex::new(0.0, h)
        };
        let mut plus = u.clone();
        plus.coeffs_mut()[(mode + u.cutoff() as i64) as usize] += delta;
        let mut minus = u.clone();
        minus.coeffs_mut()[(mode + u.cutoff() as i64) as usize] -= delta;
        let fp = read(&flow(&plus));
        let fm = read(&flow(&minus));
        for row in 0..dim {
            jac[row][col] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    jac
}

/// E[(F_N − F_M)²] by exhaustive enumeration: every admissible tuple pair
/// and every one of the 24 contraction bijections, with no case analysis.
pub fn brute_force_second_moment(n: usize, m: usize, s: f64) -> f64 {
    let ni = n as i64;
    let mi = m as i64;
    let mut tuples: Vec<([i64; 2], [i64; 2], f64)> = Vec::new();
    for n1 in -ni..=ni {
        for n2 in -ni..=ni {
            for m1 in -ni..=ni {
                let m2 = n1 + n2 - m1;
                if m2.abs() > ni || n1 == m1 {
                    continue;
                }
                if n1.abs().max(n2.abs()).max(m1.abs()).max(m2.abs()) <= mi {
                    continue;
                }
                let coef = (m1.abs() as f64).powf(2.0 * s) / (m1 - n1) as f64;
                tuples.push(([n1, n2], [m1, m2], coef));
            }
        }
    }
    let cov = |k: i64| coefficient_variance(k, s);
    let perms = permutations4();
    let moment8 = |a: [i64; 4], b: [i64; 4]| -> f64 {
        let mut sa = a;
        let mut sb = b;
        sa.sort_unstable();
        sb.sort_unstable();
        if sa != sb {
            return 0.0;
        }
        let mut acc = 0.0;
        for sigma in &perms {
            if (0..4).all(|j| b[j] == a[sigma[j]]) {
                acc += cov(a[0]) * cov(a[1]) * cov(a[2]) * cov(a[3]);
            }
        }
        acc
    };
    let mut total = 0.0f64;
    for &(tu, tb, c) in &tuples {
        for &(pu, pb, cp) in &tuples {
            let w = c * cp;
            // (z + z̄)² expanded: w·w', w·w̄', w̄·w', w̄·w̄'.
            total += w * moment8([tu[0], tu[1], pu[0], pu[1]], [tb[0], tb[1], pb[0], pb[1]]);
            total += w * moment8([tu[0], tu[1], pb[0], pb[1]], [tb[0], tb[1], pu[0], pu[1]]);
            total += w * moment8([tb[0], tb[1], pu[0], pu[1]], [tu[0], tu[1], pb[0], pb[1]]);
            total += w * moment8([tb[0], tb[1], pb[0], pb[1]], [tu[0], tu[1], pu[0], pu[1]]);
        }
    }
    total
}

pub fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    p.iter().for_each(|&v| seen[v] = true);
                    if seen.iter().all(|&v| v) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// 4th-order central difference d/dα f(α) at 0 with stencil ±h, ±2h.
pub fn central_diff4(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
}
