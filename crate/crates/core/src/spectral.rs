//! Truncated Fourier series on the circle: the universal state object.
//!
//! A `SpectralFunction` stores the coefficients u(n) for |n| <= N of
//! u(x) = Σ u(n) e^{inx} on T = R/2πZ. All norms follow the Plancherel
//! convention ||u||²_{L²} = Σ |u(n)|², and the fractional seminorm is
//! ||u||²_{Ḣˢ} = Σ_{n≠0} |n|^{2s} |u(n)|².

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kahan::NeumaierSum;
use crate::scalar::Scalar;

/// Regularity exponent s > 0 for the fractional Sobolev seminorm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SobolevIndex<S: Scalar>(S);

impl<S: Scalar> SobolevIndex<S> {
    pub fn new(s: S) -> Result<Self> {
        if !(s.is_finite() && s > S::zero()) {
            return Err(Error::InvalidInput(format!(
                "Sobolev index must be finite and positive, got {s}"
            )));
        }
        Ok(Self(s))
    }

    pub fn value(self) -> S {
        self.0
    }
}

/// Complex Fourier coefficients on the symmetric index range -N..=N.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFunction<S: Scalar> {
    cutoff: usize,
    coeffs: Vec<Complex<S>>,
}

#[derive(Serialize, Deserialize)]
struct RawSpectral<S> {
    cutoff: usize,
    coeffs: Vec<(S, S)>,
}

impl<S: Scalar> Serialize for SpectralFunction<S> {
    fn serialize<Ser: serde::Serializer>(&self, ser: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        RawSpectral {
            cutoff: self.cutoff,
            coeffs: self.coeffs.iter().map(|c| (c.re, c.im)).collect(),
        }
        .serialize(ser)
    }
}

impl<'de, S: Scalar> Deserialize<'de> for SpectralFunction<S> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSpectral::<S>::deserialize(de)?;
        SpectralFunction::new(
            raw.cutoff,
            raw.coeffs
                .into_iter()
                .map(|(re, im)| Complex::new(re, im))
                .collect(),
        )
        .map_err(serde::de::Error::custom)
    }
}

impl<S: Scalar> SpectralFunction<S> {
    /// Wrap a coefficient array; the length must be exactly 2N+1 and every
    /// entry finite.
    pub fn new(cutoff: usize, coeffs: Vec<Complex<S>>) -> Result<Self> {
        if coeffs.len() != 2 * cutoff + 1 {
            return Err(Error::InvalidInput(format!(
                "coefficient array has length {}, expected {} for cutoff {}",
                coeffs.len(),
                2 * cutoff + 1,
                cutoff
            )));
        }
        if !coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::InvalidInput(
                "coefficient array contains a non-finite entry".into(),
            ));
        }
        Ok(Self { cutoff, coeffs })
    }

    pub fn zero(cutoff: usize) -> Self {
        Self {
            cutoff,
            coeffs: vec![Complex::new(S::zero(), S::zero()); 2 * cutoff + 1],
        }
    }

    /// Build from a sparse list of (n, value) modes.
    pub fn from_modes(cutoff: usize, modes: &[(i64, Complex<S>)]) -> Result<Self> {
        let mut f = Self::zero(cutoff);
        for &(n, c) in modes {
            if n.unsigned_abs() as usize > cutoff {
                return Err(Error::InvalidInput(format!(
                    "mode {n} outside cutoff {cutoff}"
                )));
            }
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(Error::InvalidInput(format!("mode {n} is non-finite")));
            }
            f.coeffs[(n + cutoff as i64) as usize] = c;
        }
        Ok(f)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Coefficient u(n); zero outside the cutoff.
    pub fn coeff(&self, n: i64) -> Complex<S> {
        if n.unsigned_abs() as usize > self.cutoff {
            Complex::new(S::zero(), S::zero())
        } else {
            self.coeffs[(n + self.cutoff as i64) as usize]
        }
    }

    pub fn coeffs(&self) -> &[Complex<S>] {
        &self.coeffs
    }

    /// Mutable coefficient access; callers must keep entries finite.
    pub fn coeffs_mut(&mut self) -> &mut [Complex<S>] {
        &mut self.coeffs
    }

    /// Iterate (n, u(n)) over the stored range.
    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex<S>)> + '_ {
        let n0 = self.cutoff as i64;
        self.coeffs.iter().enumerate().map(move |(i, &c)| (i as i64 - n0, c))
    }

    /// Projection P_M onto the modes |n| <= M; the result carries cutoff M.
    pub fn project(&self, m: usize) -> Self {
        let mut out = Self::zero(m);
        let b = m.min(self.cutoff) as i64;
        for n in -b..=b {
            out.coeffs[(n + m as i64) as usize] = self.coeff(n);
        }
        out
    }

    /// Littlewood–Paley block: j = 0 keeps |n| <= 1, j >= 1 keeps the dyadic
    /// shell 2^{j-1} < |n| <= 2^j. The shells partition the frequencies.
    pub fn lp_block(&self, j: u32) -> Self {
        let (lo, hi) = shell_bounds(j);
        let mut out = Self::zero(self.cutoff);
        for (n, c) in self.modes() {
            let a = n.abs();
            if a >= lo && a <= hi {
                out.coeffs[(n + self.cutoff as i64) as usize] = c;
            }
        }
        out
    }

    /// Σ_n |u(n)|² (Plancherel convention).
    pub fn l2_norm_sq(&self) -> S {
        let mut acc = NeumaierSum::new();
        for c in &self.coeffs {
            acc.add(c.norm_sqr());
        }
        acc.total()
    }

    pub fn l2_norm(&self) -> S {
        self.l2_norm_sq().sqrt()
    }

    /// Σ_{n≠0} |n|^{2s} |u(n)|²; the zero mode is excluded.
    pub fn sobolev_seminorm_sq(&self, s: SobolevIndex<S>) -> S {
        let two_s = s.value() + s.value();
        let mut acc = NeumaierSum::new();
        for (n, c) in self.modes() {
            if n != 0 {
                acc.add(S::from_i64_exact(n.abs()).powf(two_s) * c.norm_sqr());
            }
        }
        acc.total()
    }

    /// Full Sobolev norm squared: L² part plus seminorm part.
    pub fn hs_norm_sq(&self, s: SobolevIndex<S>) -> S {
        self.l2_norm_sq() + self.sobolev_seminorm_sq(s)
    }

    /// Values Σ_n u(n) e^{inx_k} at x_k = 2πk/G, k = 0..G-1.
    ///
    /// The grid must resolve the series: G >= 2N+1.
    pub fn evaluate(&self, grid_size: usize) -> Result<Vec<Complex<S>>> {
        let min = 2 * self.cutoff + 1;
        if grid_size < min {
            return Err(Error::GridTooSmall {
                grid: grid_size,
                min,
                cutoff: self.cutoff,
            });
        }
        let table = phase_table::<S>(grid_size);
        let g = grid_size as i64;
        let mut out = Vec::with_capacity(grid_size);
        for k in 0..g {
            let mut acc = Complex::new(S::zero(), S::zero());
            for (n, c) in self.modes() {
                acc += c * table[(n * k).rem_euclid(g) as usize];
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Discrete Fourier analysis of grid values back to coefficients
    /// |n| <= cutoff; exact inverse of `evaluate` for band-limited data.
    pub fn analyze(values: &[Complex<S>], cutoff: usize) -> Result<Self> {
        let g = values.len();
        if g < 2 * cutoff + 1 {
            return Err(Error::GridTooSmall {
                grid: g,
                min: 2 * cutoff + 1,
                cutoff,
            });
        }
        let table = phase_table::<S>(g);
        let gi = g as i64;
        let inv_g = S::one() / S::from_usize_exact(g);
        let mut coeffs = Vec::with_capacity(2 * cutoff + 1);
        for n in -(cutoff as i64)..=cutoff as i64 {
            let mut acc = Complex::new(S::zero(), S::zero());
            for (k, v) in values.iter().enumerate() {
                acc += *v * table[(-n * k as i64).rem_euclid(gi) as usize];
            }
            coeffs.push(acc * inv_g);
        }
        Self::new(cutoff, coeffs)
    }

    /// Gauge potential of the projected function: the Fourier side of the
    /// unique zero-average periodic primitive of |P_N u|² minus its mean.
    ///
    /// Coefficients: 0 at m = 0 and, for m != 0,
    ///   -(i/m) Σ_{|l|,|l-m| <= N} u(l) conj(u(l-m)).
    /// The convolution widens support, so the result carries cutoff 2N.
    /// The output represents a real-valued function.
    pub fn gauge_potential(&self, n: usize) -> Self {
        let b = n.min(self.cutoff) as i64;
        let out_cut = 2 * n;
        let mut out = Self::zero(out_cut);
        for m in -(out_cut as i64)..=out_cut as i64 {
            if m == 0 {
                continue;
            }
            let lo = (-b).max(m - b);
            let hi = b.min(m + b);
            if lo > hi {
                continue;
            }
            let mut acc = Complex::new(S::zero(), S::zero());
            for l in lo..=hi {
                acc += self.coeff(l) * self.coeff(l - m).conj();
            }
            let inv_m = S::one() / S::from_i64_exact(m);
            // -(i/m) * acc
            out.coeffs[(m + out_cut as i64) as usize] =
                Complex::new(acc.im * inv_m, -acc.re * inv_m);
        }
        out
    }

    /// Pointwise product in physical space, computed as an exact coefficient
    /// convolution; the result carries cutoff A+B.
    pub fn spectral_product(&self, other: &Self) -> Self {
        let a = self.cutoff as i64;
        let b = other.cutoff as i64;
        let out_cut = self.cutoff + other.cutoff;
        let mut out = Self::zero(out_cut);
        for m in -(out_cut as i64)..=out_cut as i64 {
            let lo = (-a).max(m - b);
            let hi = a.min(m + b);
            let mut acc = Complex::new(S::zero(), S::zero());
            for k in lo..=hi {
                acc += self.coeff(k) * other.coeff(m - k);
            }
            out.coeffs[(m + out_cut as i64) as usize] = acc;
        }
        out
    }

    /// The conjugate function x -> conj(u(x)); coefficients conj(u(-n)).
    pub fn conj_function(&self) -> Self {
        let mut out = Self::zero(self.cutoff);
        for (n, c) in self.modes() {
            out.coeffs[(-n + self.cutoff as i64) as usize] = c.conj();
        }
        out
    }

    /// Coefficient-wise difference, widened to the larger cutoff.
    pub fn sub(&self, other: &Self) -> Self {
        let cut = self.cutoff.max(other.cutoff);
        let mut out = Self::zero(cut);
        for n in -(cut as i64)..=cut as i64 {
            out.coeffs[(n + cut as i64) as usize] = self.coeff(n) - other.coeff(n);
        }
        out
    }

    pub fn scaled(&self, factor: Complex<S>) -> Self {
        Self {
            cutoff: self.cutoff,
            coeffs: self.coeffs.iter().map(|&c| c * factor).collect(),
        }
    }

    /// L² distance, tolerant of differing cutoffs.
    pub fn l2_distance(&self, other: &Self) -> S {
        self.sub(other).l2_norm()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == S::zero() && c.im == S::zero())
    }
}

/// Bounds [lo, hi] of the dyadic shell for block j (absolute frequency).
pub fn shell_bounds(j: u32) -> (i64, i64) {
    if j == 0 {
        (0, 1)
    } else {
        ((1i64 << (j - 1)) + 1, 1i64 << j)
    }
}

/// Largest block index with a nonempty shell inside |n| <= cutoff.
pub fn max_shell_index(cutoff: usize) -> u32 {
    let mut j = 0;
    while shell_bounds(j + 1).0 <= cutoff as i64 {
        j += 1;
    }
    j
}

fn phase_table<S: Scalar>(g: usize) -> Vec<Complex<S>> {
    let tau = S::PI() + S::PI();
    let gs = S::from_usize_exact(g);
    (0..g)
        .map(|j| {
            let x = tau * S::from_usize_exact(j) / gs;
            Complex::new(x.cos(), x.sin())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type F = SpectralFunction<f64>;
    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        Complex::new(re, im)
    }

    fn random_fn(cutoff: usize, seed: u64) -> F {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..2 * cutoff + 1)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        F::new(cutoff, coeffs).unwrap()
    }

    #[test]
    fn rejects_bad_length_and_nonfinite() {
        assert!(F::new(2, vec![c(1.0, 0.0); 4]).is_err());
        let mut coeffs = vec![c(0.0, 0.0); 5];
        coeffs[1] = c(f64::NAN, 0.0);
        assert!(F::new(2, coeffs).is_err());
    }

    #[test]
    fn project_is_identity_at_own_cutoff() {
        let u = random_fn(6, 1);
        assert_eq!(u.project(6), u);
    }

    #[test]
    fn project_drops_high_modes() {
        let u = F::from_modes(2, &[(0, c(1.0, 0.0)), (2, c(3.0, 0.0))]).unwrap();
        let p = u.project(1);
        assert_eq!(p.cutoff(), 1);
        assert_eq!(p.coeffs(), &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn project_contracts_l2() {
        for seed in 0..20 {
            let u = random_fn(12, seed);
            for m in [0usize, 3, 7, 12, 20] {
                assert!(u.project(m).l2_norm_sq() <= u.l2_norm_sq() + 1e-15);
            }
        }
    }

    #[test]
    fn lp_block_zero_keeps_low_modes() {
        let u = F::from_modes(
            5,
            &[(0, c(1.0, 0.0)), (1, c(2.0, 0.0)), (5, c(3.0, 0.0))],
        )
        .unwrap();
        let b = u.lp_block(0);
        assert_eq!(b.coeff(0), c(1.0, 0.0));
        assert_eq!(b.coeff(1), c(2.0, 0.0));
        assert_eq!(b.coeff(5), c(0.0, 0.0));
        assert_eq!(b.coeff(-1), c(0.0, 0.0));
    }

    #[test]
    fn lp_blocks_partition_frequencies() {
        let u = random_fn(37, 2);
        let mut sum = F::zero(u.cutoff());
        for j in 0..=max_shell_index(u.cutoff()) {
            let b = u.lp_block(j);
            for n in -(u.cutoff() as i64)..=u.cutoff() as i64 {
                let idx = (n + u.cutoff() as i64) as usize;
                sum.coeffs_mut()[idx] += b.coeff(n);
            }
        }
        // Exact partition: every coefficient lands in exactly one shell.
        assert_eq!(sum, u.project(u.cutoff()));
    }

    #[test]
    fn lp_block_three_is_shell_five_to_eight() {
        let u = random_fn(16, 3);
        let b = u.lp_block(3);
        for (n, v) in b.modes() {
            let inside = (5..=8).contains(&n.abs());
            if inside {
                assert_eq!(v, u.coeff(n));
            } else {
                assert_eq!(v, c(0.0, 0.0));
            }
        }
    }

    #[test]
    fn seminorm_single_mode() {
        let u = F::from_modes(1, &[(1, c(1.0, 0.0))]).unwrap();
        let s = SobolevIndex::new(1.0).unwrap();
        assert_eq!(u.sobolev_seminorm_sq(s), 1.0);
    }

    #[test]
    fn seminorm_excludes_zero_mode() {
        let u = F::from_modes(0, &[(0, c(7.0, 0.0))]).unwrap();
        let s = SobolevIndex::new(0.9).unwrap();
        assert_eq!(u.sobolev_seminorm_sq(s), 0.0);
        assert_eq!(u.l2_norm_sq(), 49.0);
    }

    #[test]
    fn seminorm_direct_evaluation() {
        let u = F::from_modes(3, &[(2, c(1.0, 0.0)), (-3, c(2.0, 0.0))]).unwrap();
        let s = SobolevIndex::new(0.75).unwrap();
        let expected = 2f64.powf(1.5) + 4.0 * 3f64.powf(1.5);
        assert!((u.sobolev_seminorm_sq(s) - expected).abs() < 1e-14);
    }

    #[test]
    fn sobolev_index_requires_positive() {
        assert!(SobolevIndex::new(0.0).is_err());
        assert!(SobolevIndex::new(-1.0).is_err());
        assert!(SobolevIndex::new(f64::NAN).is_err());
        assert!(SobolevIndex::new(0.51).is_ok());
    }

    #[test]
    fn gauge_potential_of_constant_vanishes() {
        let u = F::from_modes(0, &[(0, c(0.7, -0.3))]).unwrap();
        assert!(u.gauge_potential(4).is_zero());
    }

    #[test]
    fn gauge_potential_of_single_mode_vanishes() {
        let u = F::from_modes(5, &[(3, c(0.4, 0.9))]).unwrap();
        assert!(u.gauge_potential(5).is_zero());
    }

    #[test]
    fn gauge_potential_two_mode_example() {
        // u = 1 + e^{ix}: |u|² - mean = 2cos x, whose zero-average primitive
        // is 2 sin x, i.e. coefficients -i at n=1 and +i at n=-1.
        let u = F::from_modes(1, &[(0, c(1.0, 0.0)), (1, c(1.0, 0.0))]).unwrap();
        let p = u.gauge_potential(1);
        assert_eq!(p.cutoff(), 2);
        assert_eq!(p.coeff(0), c(0.0, 0.0));
        assert_eq!(p.coeff(1), c(0.0, -1.0));
        assert_eq!(p.coeff(-1), c(0.0, 1.0));
        assert_eq!(p.coeff(2), c(0.0, 0.0));
    }

    #[test]
    fn gauge_potential_is_real_valued_with_zero_average() {
        for seed in 0..10 {
            let u = random_fn(9, 100 + seed);
            let p = u.gauge_potential(9);
            assert_eq!(p.coeff(0), c(0.0, 0.0));
            for m in 1..=p.cutoff() as i64 {
                let a = p.coeff(m);
                let b = p.coeff(-m).conj();
                assert!((a - b).norm() <= 1e-15 * (1.0 + a.norm()));
            }
        }
    }

    #[test]
    fn gauge_potential_derivative_property() {
        // d/dx I[P_N u] has coefficients i m I(m), which must equal the
        // m-th coefficient of |P_N u|² for every m != 0.
        let n = 6;
        for seed in 0..5 {
            let u = random_fn(8, 200 + seed).project(n);
            let p = u.gauge_potential(n);
            let sq = u.spectral_product(&u.conj_function());
            for m in -(2 * n as i64)..=2 * n as i64 {
                if m == 0 {
                    continue;
                }
                let lhs = p.coeff(m) * c(0.0, m as f64);
                let rhs = sq.coeff(m);
                assert!(
                    (lhs - rhs).norm() < 1e-12,
                    "m={m}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn evaluate_constant_and_roots_of_unity() {
        let one = F::from_modes(0, &[(0, c(1.0, 0.0))]).unwrap();
        for v in one.evaluate(5).unwrap() {
            assert_eq!(v, c(1.0, 0.0));
        }
        let e1 = F::from_modes(1, &[(1, c(1.0, 0.0))]).unwrap();
        let vals = e1.evaluate(4).unwrap();
        let expect = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for (v, e) in vals.iter().zip(expect) {
            assert!((v - e).norm() < 1e-15);
        }
    }

    #[test]
    fn evaluate_rejects_small_grid() {
        let u = random_fn(4, 7);
        assert!(matches!(
            u.evaluate(8),
            Err(Error::GridTooSmall { grid: 8, min: 9, .. })
        ));
    }

    #[test]
    fn analyze_round_trip() {
        for seed in 0..5 {
            let u = random_fn(10, 300 + seed);
            for g in [21, 32, 64] {
                let vals = u.evaluate(g).unwrap();
                let back = F::analyze(&vals, 10).unwrap();
                assert!(u.l2_distance(&back) < 1e-12, "g={g}");
            }
        }
    }

    #[test]
    fn parseval_mean_square() {
        let u = random_fn(11, 9);
        let g = 4 * 11 + 1;
        let vals = u.evaluate(g).unwrap();
        let mean_sq: f64 = vals.iter().map(|v| v.norm_sqr()).sum::<f64>() / g as f64;
        let l2 = u.l2_norm_sq();
        assert!((mean_sq - l2).abs() <= 1e-12 * l2.max(1.0));
    }

    #[test]
    fn json_round_trip_matches_format() {
        let u = F::from_modes(1, &[(-1, c(0.5, -0.25)), (1, c(1.0, 2.0))]).unwrap();
        let js = serde_json::to_string(&u).unwrap();
        assert_eq!(
            js,
            r#"{"cutoff":1,"coeffs":[[0.5,-0.25],[0.0,0.0],[1.0,2.0]]}"#
        );
        let back: F = serde_json::from_str(&js).unwrap();
        assert_eq!(u, back);
        // Length mismatch must fail validation on the way in.
        assert!(serde_json::from_str::<F>(r#"{"cutoff":2,"coeffs":[[1.0,0.0]]}"#).is_err());
    }

    #[test]
    fn gauge_potential_matches_quadrature_of_double_integral() {
        // Independent oracle: I(x) = (1/2π)∫dθ ∫_θ^x (|u|² - mean) dy,
        // evaluated through cumulative Simpson quadrature of pointwise
        // values only (no coefficient convolutions).
        for seed in 0..3 {
            let cutoff = 8;
            let u = random_fn(cutoff, 400 + seed);
            let g = 8192usize; // divisible by 4, h^4 ~ 3e-13
            let vals = u.evaluate(g).unwrap();
            let f: Vec<f64> = vals.iter().map(|v| v.norm_sqr()).collect();
            let h = std::f64::consts::TAU / g as f64;
            // Mean of |u|² over the circle by composite Simpson (periodic).
            let mut simpson = 0.0;
            for k in (0..g).step_by(2) {
                simpson += f[k] + 4.0 * f[(k + 1) % g] + f[(k + 2) % g];
            }
            let mean = simpson * h / 3.0 / std::f64::consts::TAU;
            // Cumulative integral F(x_{2j}) of |u|² - mean by Simpson pairs.
            let half = g / 2;
            let mut big_f = vec![0.0; half + 1];
            for j in 0..half {
                let a = f[2 * j] - mean;
                let b = f[(2 * j + 1) % g] - mean;
                let cc = f[(2 * j + 2) % g] - mean;
                big_f[j + 1] = big_f[j] + h / 3.0 * (a + 4.0 * b + cc);
            }
            // Subtract the θ-average of F (Simpson over the even grid).
            let h2 = 2.0 * h;
            let mut favg = 0.0;
            for j in (0..half).step_by(2) {
                favg += big_f[j] + 4.0 * big_f[j + 1] + big_f[j + 2];
            }
            favg = favg * h2 / 3.0 / std::f64::consts::TAU;

            let p = u.gauge_potential(cutoff);
            let pv = p.evaluate(g).unwrap();
            for j in 0..half {
                let oracle = big_f[j] - favg;
                let spectral = pv[2 * j];
                assert!(spectral.im.abs() < 1e-12);
                assert!(
                    (spectral.re - oracle).abs() < 1e-8,
                    "seed {seed} x-index {j}: {} vs {oracle}",
                    spectral.re
                );
            }
        }
    }
}
