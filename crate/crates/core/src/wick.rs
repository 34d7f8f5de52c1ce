//! Exact second moments of differences of the quartic derivative
//! functional under the Gaussian coefficient measure, by Wick contraction.
//!
//! Writing `D = F_N − F_M = z + conj(z)` with
//!   `z = Σ_A |m₁|^{2s}/(m₁−n₁) · u(n₁)u(n₂)·conj(u(m₁))·conj(u(m₂))`
//! over the difference tuple set A (all indices <= N, n₁+n₂ = m₁+m₂,
//! n₁ ≠ m₁, max |index| > M), the engine evaluates
//!   `E[D²] = 2·E[z·conj(z)] + 2·E[z²]`
//! exactly: each S₄ contraction pattern collapses the eight-fold sum to at
//! most three free indices (one pattern factorizes into two double sums),
//! and the covariance is the exact 1/(1+|n|^{2s}), not its dyadic
//! equivalent.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kahan::NeumaierSum;
use crate::measure::coefficient_variance;
use crate::scalar::Scalar;

/// Keeps the worst-case enumeration under ~1e8 terms.
pub const COMPLEXITY_GUARD: usize = 64;

/// E|u(n)|² = 1/(1 + |n|^{2s}).
pub fn pair_moment<S: Scalar>(n: i64, s: S) -> S {
    coefficient_variance(n, s)
}

#[derive(Debug, Clone, Serialize)]
pub struct PermutationBlock<S> {
    pub total: S,
    /// Contribution of each of the 24 permutations (fixed-point patterns
    /// are exactly zero on the difference set).
    pub per_permutation: BTreeMap<String, S>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WickMoment<S> {
    /// `E[(F_N − F_M)²]`, the full real square.
    pub value: S,
    /// Per-permutation totals across blocks; sums to `value`.
    pub per_permutation: BTreeMap<String, S>,
    /// The `E[z·conj(z)]` block.
    pub zz_bar: PermutationBlock<S>,
    /// The `E[z²]` block (equals `E[conj(z)²]`; real by construction).
    pub z_sq: PermutationBlock<S>,
    pub covariance_used: String,
}

pub fn second_moment_diff<S: Scalar>(n: usize, m: usize, s: S) -> Result<WickMoment<S>> {
    second_moment_diff_with_cov(n, m, s, &|k| coefficient_variance(k, s), None)
}

/// Covariance-override hook: `cov` replaces 1/(1+|n|^{2s}) in the Wick
/// contractions (the quartic coefficients |m₁|^{2s} are untouched).
pub fn second_moment_diff_with_cov<S: Scalar>(
    n: usize,
    m: usize,
    s: S,
    cov: &(dyn Fn(i64) -> S + Sync),
    cov_label: Option<&str>,
) -> Result<WickMoment<S>> {
    if n > COMPLEXITY_GUARD {
        return Err(Error::ComplexityGuard {
            given: n,
            guard: COMPLEXITY_GUARD,
        });
    }
    if m > n {
        return Err(Error::InvalidInput(format!(
            "difference requires M <= N, got M={m}, N={n}"
        )));
    }
    if !(s.is_finite() && s > S::zero()) {
        return Err(Error::InvalidInput("exponent s must be positive".into()));
    }
    let tables = Tables::new(n, s, cov);
    let perms = permutations();
    let blocks: Vec<(String, S, S)> = perms
        .par_iter()
        .map(|sigma| {
            let (zz, zs) = if sigma.iter().enumerate().any(|(i, &v)| i == v) {
                // Any fixed point forces n₁ = m₁ or n₃ = m₃ through the
                // momentum constraints: empty on the difference set.
                (S::zero(), S::zero())
            } else {
                contraction_sums(sigma, n as i64, m as i64, &tables)
            };
            (perm_label(sigma), zz, zs)
        })
        .collect();

    let mut zz_map = BTreeMap::new();
    let mut zs_map = BTreeMap::new();
    let mut total_map = BTreeMap::new();
    let mut zz_total = NeumaierSum::new();
    let mut zs_total = NeumaierSum::new();
    let two = S::lit(2.0);
    for (label, zz, zs) in blocks {
        zz_total.add(zz);
        zs_total.add(zs);
        zz_map.insert(label.clone(), zz);
        zs_map.insert(label.clone(), zs);
        total_map.insert(label, two * (zz + zs));
    }
    let value = two * zz_total.total() + two * zs_total.total();
    Ok(WickMoment {
        value,
        per_permutation: total_map,
        zz_bar: PermutationBlock {
            total: zz_total.total(),
            per_permutation: zz_map,
        },
        z_sq: PermutationBlock {
            total: zs_total.total(),
            per_permutation: zs_map,
        },
        covariance_used: cov_label
            .map(str::to_owned)
            .unwrap_or_else(|| format!("1/(1+|n|^{{2s}}), s={s}")),
    })
}

/// Exact L²(γ_s) distances ‖F_{N_ref} − F_M‖ for each M in the list.
pub fn rate_table<S: Scalar>(s: S, m_list: &[usize], n_ref: usize) -> Result<Vec<(usize, S)>> {
    let mut out = Vec::with_capacity(m_list.len());
    for &m in m_list {
        if m > n_ref {
            return Err(Error::InvalidInput(format!(
                "rate table requires M <= N_ref, got M={m}, N_ref={n_ref}"
            )));
        }
        let w = second_moment_diff(n_ref, m, s)?;
        out.push((m, w.value.max(S::zero()).sqrt()));
    }
    Ok(out)
}

/// CSV form of the rate table: `m,l2_distance` rows under a comment header
/// carrying (s, N_ref).
pub fn rate_table_csv<S: Scalar>(s: S, m_list: &[usize], n_ref: usize) -> Result<String> {
    let rows = rate_table(s, m_list, n_ref)?;
    let mut out = format!("# s={s} n_ref={n_ref}\nm,l2_distance\n");
    for (m, d) in rows {
        out.push_str(&format!("{m},{d}\n"));
    }
    Ok(out)
}

struct Tables<S> {
    /// |k|^{2s} for k in 0..=N.
    w2s: Vec<S>,
    /// Covariance per signed index, offset by N.
    cov: Vec<S>,
    n: i64,
}

impl<S: Scalar> Tables<S> {
    fn new(n: usize, s: S, cov: &(dyn Fn(i64) -> S + Sync)) -> Self {
        let ni = n as i64;
        Self {
            w2s: (0..=n)
                .map(|k| {
                    if k == 0 {
                        S::zero()
                    } else {
                        S::from_usize_exact(k).powf(s + s)
                    }
                })
                .collect(),
            cov: (-ni..=ni).map(cov).collect(),
            n: ni,
        }
    }

    #[inline]
    fn w(&self, k: i64) -> S {
        self.w2s[k.unsigned_abs() as usize]
    }

    #[inline]
    fn c(&self, k: i64) -> S {
        self.cov[(k + self.n) as usize]
    }
}

fn perm_label(sigma: &[usize; 4]) -> String {
    format!(
        "({},{},{},{})",
        sigma[0] + 1,
        sigma[1] + 1,
        sigma[2] + 1,
        sigma[3] + 1
    )
}

fn permutations() -> Vec<[usize; 4]> {
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

/// Both block sums for one derangement. After substituting m_j = n_{σ(j)},
/// the two momentum constraints coincide; their common form decides the
/// enumeration shape.
fn contraction_sums<S: Scalar>(
    sigma: &[usize; 4],
    n: i64,
    m: i64,
    t: &Tables<S>,
) -> (S, S) {
    let lead = {
        let mut set = [false; 4];
        set[sigma[0]] = true;
        set[sigma[1]] = true;
        set
    };
    if lead[0] && lead[1] {
        // σ restricted to {1,2} and {3,4}: both constraints are automatic
        // and the sum factorizes into two antisymmetric double sums.
        return factorized(sigma, n, m, t);
    }

    let mut zz = NeumaierSum::new();
    let mut zs = NeumaierSum::new();
    let mut body = |idx: [i64; 4]| {
        let m0 = idx[sigma[0]];
        let m2 = idx[sigma[2]];
        if idx[0] == m0 || idx[2] == m2 {
            return;
        }
        let m1 = idx[sigma[1]];
        let m3 = idx[sigma[3]];
        if idx[0].abs().max(idx[1].abs()).max(m0.abs()).max(m1.abs()) <= m
            || idx[2].abs().max(idx[3].abs()).max(m2.abs()).max(m3.abs()) <= m
        {
            return;
        }
        let cov4 = t.c(idx[0]) * t.c(idx[1]) * t.c(idx[2]) * t.c(idx[3]);
        let lead_coef = t.w(m0) / S::from_i64_exact(m0 - idx[0]);
        zz.add(lead_coef * t.w(idx[2]) / S::from_i64_exact(idx[2] - m2) * cov4);
        zs.add(lead_coef * t.w(m2) / S::from_i64_exact(m2 - idx[2]) * cov4);
    };

    if lead[2] && lead[3] {
        // n₁ + n₂ = n₃ + n₄: the fourth index is dependent.
        for a in -n..=n {
            for b in -n..=n {
                for c in -n..=n {
                    let d = a + b - c;
                    if d.abs() <= n {
                        body([a, b, c, d]);
                    }
                }
            }
        }
    } else {
        // The constraint ties one index of {1,2} to one of {3,4}.
        let from = if lead[0] { 1 } else { 0 };
        let to = if lead[2] { 2 } else { 3 };
        let free: Vec<usize> = (0..4).filter(|&i| i != to).collect();
        for a in -n..=n {
            for b in -n..=n {
                for c in -n..=n {
                    let mut idx = [0i64; 4];
                    idx[free[0]] = a;
                    idx[free[1]] = b;
                    idx[free[2]] = c;
                    idx[to] = idx[from];
                    body(idx);
                }
            }
        }
    }
    (zz.total(), zs.total())
}

/// σ = (2,1,4,3): the sum splits into two independent double sums, each
/// antisymmetric under (a,b) ↦ (−a,−b). Terms are grouped with their sign
/// mirror so the symmetric-covariance value is exactly zero in floating
/// point, as the antisymmetry argument demands.
fn factorized<S: Scalar>(sigma: &[usize; 4], n: i64, m: i64, t: &Tables<S>) -> (S, S) {
    debug_assert_eq!(sigma, &[1, 0, 3, 2]);
    // First factor (both blocks): Σ w2s(b)/(b−a)·cov(a)cov(b), numerator on
    // the contracted index b = n_{σ(1)} = n₂.
    let lead = antisymmetric_bracket(n, m, t, true);
    // Second factor: zz̄ carries w2s(n₃)/(n₃−n₄); z² carries w2s(n₄)/(n₄−n₃).
    let zz = lead * antisymmetric_bracket(n, m, t, false);
    let zs = lead * antisymmetric_bracket(n, m, t, true);
    (zz, zs)
}

/// Σ over pairs a ≠ b with max(|a|,|b|) > M of
///   w2s(num)/(num − den) · cov(a)·cov(b),
/// where (num, den) = (b, a) when `numerator_second`, else (a, b).
/// Iterated jointly with the (−a,−b) mirror for exact cancellation.
fn antisymmetric_bracket<S: Scalar>(
    n: i64,
    m: i64,
    t: &Tables<S>,
    numerator_second: bool,
) -> S {
    let mut acc = NeumaierSum::new();
    for num in 1..=n {
        for den in -n..=n {
            if den == num || num.abs().max(den.abs()) <= m {
                continue;
            }
            let (a, b) = if numerator_second { (den, num) } else { (num, den) };
            let g = t.w(num) / S::from_i64_exact(num - den) * t.c(a) * t.c(b);
            let g_mirror = t.w(num) / S::from_i64_exact(den - num) * t.c(-a) * t.c(-b);
            acc.add(g + g_mirror);
        }
    }
    acc.total()
}
