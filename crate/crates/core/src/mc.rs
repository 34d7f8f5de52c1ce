//! Parallel Monte Carlo harness: moment estimates, empirical tail curves
//! with exact binomial bands, and the finite-dimensional pushforward /
//! density identity check.
//!
//! Work is partitioned into fixed-size index chunks; per-chunk accumulators
//! merge in chunk order, so every estimate is bit-reproducible for a given
//! (master_seed, stream_base, n) regardless of the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::flow::{gauge_truncated, FlowOptions};
use crate::functionals::{gauge_divergence, hs_derivative, lp_stats, tail_sup};
use crate::kahan::NeumaierSum;
use crate::measure::{sample_one, MeasureSpec};
use crate::spectral::{SobolevIndex, SpectralFunction};

/// Fixed chunk size for the deterministic work partition.
const CHUNK: u64 = 256;
/// Two-sided confidence level of the Clopper–Pearson bands.
const CONFIDENCE: f64 = 0.95;

type Sf = SpectralFunction<f64>;

/// Statistic of a single sample, used by the moment and tail estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stat", rename_all = "kebab-case")]
pub enum Statistic {
    /// Derivative of the squared Ḣˢ seminorm along the gauge flow at 0.
    HsDerivative { n: usize, s: f64 },
    /// Difference of the derivative functional at two truncation levels.
    HsDerivativeDiff { n: usize, m: usize, s: f64 },
    /// Divergence of the truncated gauge field.
    Divergence { n: usize },
    /// sup_{k >= n0} k^{s'}|u(k)|.
    TailSup { s_prime: f64, n0: usize },
    /// Total weighted dyadic L² sum (X-type statistic).
    BlockWeightedL2 { n: usize, s: f64 },
    /// Total dyadic coefficient-l1 sum (Y-type statistic).
    BlockL1 { n: usize },
}

impl Statistic {
    pub fn evaluate(&self, u: &Sf) -> Result<f64> {
        match *self {
            Statistic::HsDerivative { n, s } => Ok(hs_derivative(u, n, s)?.value),
            Statistic::HsDerivativeDiff { n, m, s } => {
                Ok(hs_derivative(u, n, s)?.value - hs_derivative(u, m, s)?.value)
            }
            Statistic::Divergence { n } => gauge_divergence(u, n),
            Statistic::TailSup { s_prime, n0 } => tail_sup(u, s_prime, n0),
            Statistic::BlockWeightedL2 { n, s } => {
                Ok(lp_stats(u, n, s, 0.0, 1)?.weighted_l2_total)
            }
            Statistic::BlockL1 { n } => Ok(lp_stats(u, n, 1.0, 0.0, 1)?.l1_total),
        }
    }

    /// Stable label for CSV rows (no commas).
    pub fn label(&self) -> String {
        match *self {
            Statistic::HsDerivative { n, s } => format!("hs_deriv[N={n};s={s}]"),
            Statistic::HsDerivativeDiff { n, m, s } => {
                format!("hs_deriv_diff[N={n};M={m};s={s}]")
            }
            Statistic::Divergence { n } => format!("divergence[N={n}]"),
            Statistic::TailSup { s_prime, n0 } => format!("tail_sup[s'={s_prime};n0={n0}]"),
            Statistic::BlockWeightedL2 { n, s } => format!("block_l2[N={n};s={s}]"),
            Statistic::BlockL1 { n } => format!("block_l1[N={n}]"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MCEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub spec: MeasureSpec<f64>,
    pub stream_base: u64,
}

#[derive(Debug, Clone, Default)]
struct MomentAccum {
    sum_p: NeumaierSum<f64>,
    sum_2p: NeumaierSum<f64>,
}

/// Monte Carlo estimate of E[|stat|^p]^{1/p} with a delta-method standard
/// error, over samples (stream_base, 0..n).
pub fn estimate_moment(
    stat: &Statistic,
    p: f64,
    spec: &MeasureSpec<f64>,
    n: usize,
    stream_base: u64,
) -> Result<MCEstimate> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::InvalidInput("moment order p must be >= 1".into()));
    }
    if n < 100 {
        return Err(Error::InvalidInput("moment estimation needs n >= 100".into()));
    }
    let chunks = chunk_results(spec, n, stream_base, |u, acc: &mut MomentAccum| {
        let x = stat.evaluate(u)?.abs();
        let xp = x.powf(p);
        acc.sum_p.add(xp);
        acc.sum_2p.add(xp * xp);
        Ok(())
    })?;
    let mut sum_p = NeumaierSum::new();
    let mut sum_2p = NeumaierSum::new();
    for c in &chunks {
        sum_p.merge(&c.sum_p);
        sum_2p.merge(&c.sum_2p);
    }
    let nf = n as f64;
    let mean = sum_p.total() / nf;
    let var = (sum_2p.total() / nf - mean * mean).max(0.0);
    let se_mean = (var / nf).sqrt();
    let (value, stderr) = if mean <= 0.0 {
        (0.0, 0.0)
    } else {
        let value = mean.powf(1.0 / p);
        (value, value / (p * mean) * se_mean)
    };
    Ok(MCEstimate {
        value,
        stderr,
        n_samples: n,
        spec: *spec,
        stream_base,
    })
}

/// Empirical survival curve of |stat| with exact Clopper–Pearson bands.
#[derive(Debug, Clone, Serialize)]
pub struct TailCurve {
    pub thresholds: Vec<f64>,
    /// ln of the empirical survival probability (−inf where no exceedance).
    pub log_survival: Vec<f64>,
    pub clopper_pearson_lo: Vec<f64>,
    pub clopper_pearson_hi: Vec<f64>,
    pub n_samples: usize,
}

pub fn tail_curve(
    stat: &Statistic,
    spec: &MeasureSpec<f64>,
    thresholds: &[f64],
    n: usize,
    stream_base: u64,
) -> Result<TailCurve> {
    if thresholds.is_empty() || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "thresholds must be nonempty and strictly increasing".into(),
        ));
    }
    if n < 10_000 {
        return Err(Error::InvalidInput("tail curves need n >= 10^4".into()));
    }
    let counts = chunk_results(spec, n, stream_base, |u, acc: &mut Vec<u64>| {
        if acc.is_empty() {
            *acc = vec![0; thresholds.len()];
        }
        let x = stat.evaluate(u)?.abs();
        for (k, &t) in thresholds.iter().enumerate() {
            if x >= t {
                acc[k] += 1;
            }
        }
        Ok(())
    })?;
    let mut totals = vec![0u64; thresholds.len()];
    for c in counts.iter().filter(|c| !c.is_empty()) {
        for (t, v) in totals.iter_mut().zip(c) {
            *t += v;
        }
    }
    let nf = n as f64;
    let mut log_survival = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for &k in &totals {
        log_survival.push((k as f64 / nf).ln());
        let (l, h) = clopper_pearson(k, n as u64, CONFIDENCE);
        lo.push(l);
        hi.push(h);
    }
    Ok(TailCurve {
        thresholds: thresholds.to_vec(),
        log_survival,
        clopper_pearson_lo: lo,
        clopper_pearson_hi: hi,
        n_samples: n,
    })
}

/// Exact two-sided Clopper–Pearson interval for k successes in n trials.
pub fn clopper_pearson(k: u64, n: u64, confidence: f64) -> (f64, f64) {
    let alpha = 1.0 - confidence;
    let kf = k as f64;
    let nf = n as f64;
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0)
            .expect("valid beta parameters")
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf)
            .expect("valid beta parameters")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Explicit Gaussian envelope for the weighted coefficient sup: the union
/// bound Σ_{k >= n0} exp(−t²(1+k^{2s})/(2k^{2s'})), summed numerically.
pub fn tail_sup_envelope(s: f64, s_prime: f64, n0: usize, t: f64) -> f64 {
    if t <= 0.0 {
        return f64::INFINITY;
    }
    let mut sum = 0.0;
    let mut quiet = 0;
    for k in n0..(n0 + 1_000_000) {
        let kf = k as f64;
        let expo = -t * t * (1.0 + kf.powf(2.0 * s)) / (2.0 * kf.powf(2.0 * s_prime));
        let term = expo.exp();
        sum += term;
        // The exponent can dip before the k^{2(s-s')} growth takes over;
        // stop only after several consecutive negligible terms.
        if term < 1e-300 {
            quiet += 1;
            if quiet > 8 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    sum
}

/// Membership predicates for the pushforward identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "kebab-case")]
pub enum TestSet {
    /// ‖u‖_{Ḣˢ} <= radius.
    HsBall { s: f64, radius: f64 },
    /// Re u(mode) >= threshold.
    HalfSpace { mode: i64, threshold: f64 },
    /// max_k |u(x_k)| <= radius on the fixed grid.
    GridLinfBall { radius: f64, grid: usize },
    Everything,
}

impl TestSet {
    pub fn contains(&self, u: &Sf) -> Result<bool> {
        match *self {
            TestSet::HsBall { s, radius } => {
                let idx = SobolevIndex::new(s)?;
                Ok(u.sobolev_seminorm_sq(idx).sqrt() <= radius)
            }
            TestSet::HalfSpace { mode, threshold } => Ok(u.coeff(mode).re >= threshold),
            TestSet::GridLinfBall { radius, grid } => {
                let vals = u.evaluate(grid)?;
                Ok(vals.iter().all(|v| v.norm() <= radius))
            }
            TestSet::Everything => Ok(true),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            TestSet::HsBall { s, radius } => format!("hs_ball[s={s};r={radius:.6}]"),
            TestSet::HalfSpace { mode, threshold } => {
                format!("half_space[k={mode};c={threshold:.6}]")
            }
            TestSet::GridLinfBall { radius, grid } => {
                format!("grid_linf_ball[r={radius:.6};g={grid}]")
            }
            TestSet::Everything => "everything".into(),
        }
    }
}

/// Per-sample material for the density identity at one (α, measure) pair:
/// the sample, its pullback under the truncated flow, and the density
/// factor J_α(u) = det·exp(‖P_N u‖²_{Ḣˢ} − ‖P_N G^N_α u‖²_{Ḣˢ}).
///
/// The exponent carries no ½: with E|u(n)|² = 1/(1+|n|^{2s}) (independent
/// complex halves) the marginal density on E_N is proportional to
/// exp(−‖u‖²_{Hˢ}), and the L² part is conserved by the flow. The ½
/// variant belongs to the unit-variance-per-real-component convention and
/// demonstrably biases the identity (z grows like √n).
#[derive(Debug, Clone)]
pub struct DensityBatch {
    pub spec: MeasureSpec<f64>,
    pub alpha: f64,
    pub stream_base: u64,
    pub originals: Vec<Sf>,
    pub pulled: Vec<Sf>,
    pub jacobian_factors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PushforwardCheck {
    pub lhs: MCEstimate,
    pub rhs: MCEstimate,
    pub z_score: f64,
}

pub fn density_batch(
    alpha: f64,
    spec: &MeasureSpec<f64>,
    n: usize,
    opts: &FlowOptions,
    stream_base: u64,
) -> Result<DensityBatch> {
    if spec.radius.is_none() {
        return Err(Error::InvalidInput(
            "the density identity is for the ball-restricted measure".into(),
        ));
    }
    let level = spec.cutoff;
    let sob = SobolevIndex::new(spec.s)?;
    let rows = chunk_results(
        spec,
        n,
        stream_base,
        |u, acc: &mut Vec<(Sf, Sf, f64)>| {
            let pulled = gauge_truncated(u, -alpha, level, opts)?.final_state;
            let fwd = gauge_truncated(u, alpha, level, &opts.with_trajectory())?;
            let log_det = fwd.divergence_integral;
            let shift =
                u.sobolev_seminorm_sq(sob) - fwd.final_state.sobolev_seminorm_sq(sob);
            acc.push((u.clone(), pulled, (log_det + shift).exp()));
            Ok(())
        },
    )?;
    let mut originals = Vec::with_capacity(n);
    let mut pulled = Vec::with_capacity(n);
    let mut jacobian_factors = Vec::with_capacity(n);
    for chunk in rows {
        for (u, p, j) in chunk {
            originals.push(u);
            pulled.push(p);
            jacobian_factors.push(j);
        }
    }
    Ok(DensityBatch {
        spec: *spec,
        alpha,
        stream_base,
        originals,
        pulled,
        jacobian_factors,
    })
}

/// Evaluate the two sides of γ̃(G_α(E)) = ∫_E J_α dγ̃ on a prepared batch:
/// lhs = mean 1{G_{−α}u ∈ E}, rhs = mean 1{u ∈ E}·J_α(u), same samples on
/// both sides, z from the paired per-sample differences.
pub fn pushforward_from_batch(batch: &DensityBatch, set: &TestSet) -> Result<PushforwardCheck> {
    let n = batch.originals.len();
    let nf = n as f64;
    let mut lhs_sum = NeumaierSum::new();
    let mut lhs_sq = NeumaierSum::new();
    let mut rhs_sum = NeumaierSum::new();
    let mut rhs_sq = NeumaierSum::new();
    let mut d_sum = NeumaierSum::new();
    let mut d_sq = NeumaierSum::new();
    for i in 0..n {
        let l = if set.contains(&batch.pulled[i])? { 1.0 } else { 0.0 };
        let r = if set.contains(&batch.originals[i])? {
            batch.jacobian_factors[i]
        } else {
            0.0
        };
        lhs_sum.add(l);
        lhs_sq.add(l * l);
        rhs_sum.add(r);
        rhs_sq.add(r * r);
        let d = l - r;
        d_sum.add(d);
        d_sq.add(d * d);
    }
    let mean = |s: &NeumaierSum<f64>| s.total() / nf;
    let se = |s: &NeumaierSum<f64>, sq: &NeumaierSum<f64>| {
        let m = mean(s);
        ((sq.total() / nf - m * m).max(0.0) / nf).sqrt()
    };
    let d_mean = mean(&d_sum);
    let d_se = se(&d_sum, &d_sq);
    let z_score = if d_mean == 0.0 {
        0.0
    } else {
        d_mean / d_se
    };
    Ok(PushforwardCheck {
        lhs: MCEstimate {
            value: mean(&lhs_sum),
            stderr: se(&lhs_sum, &lhs_sq),
            n_samples: n,
            spec: batch.spec,
            stream_base: batch.stream_base,
        },
        rhs: MCEstimate {
            value: mean(&rhs_sum),
            stderr: se(&rhs_sum, &rhs_sq),
            n_samples: n,
            spec: batch.spec,
            stream_base: batch.stream_base,
        },
        z_score,
    })
}

/// One-shot pushforward check for a single test set.
pub fn pushforward_check(
    set: &TestSet,
    alpha: f64,
    spec: &MeasureSpec<f64>,
    n: usize,
    opts: &FlowOptions,
    stream_base: u64,
) -> Result<PushforwardCheck> {
    if n < 10_000 {
        return Err(Error::InvalidInput(
            "pushforward checks need n >= 10^4".into(),
        ));
    }
    let batch = density_batch(alpha, spec, n, opts, stream_base)?;
    pushforward_from_batch(&batch, set)
}

/// Median of a per-sample functional over a pilot stream (used to place
/// test-set radii where the indicator has variance).
pub fn pilot_median(
    spec: &MeasureSpec<f64>,
    n: usize,
    stream_id: u64,
    f: impl Fn(&Sf) -> Result<f64> + Sync,
) -> Result<f64> {
    let chunks = chunk_results(spec, n, stream_id, |u, acc: &mut Vec<f64>| {
        acc.push(f(u)?);
        Ok(())
    })?;
    let mut vals: Vec<f64> = chunks.into_iter().flatten().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite statistic"));
    Ok(vals[vals.len() / 2])
}

/// Deterministic chunked map over sample indices 0..n on one stream: the
/// partition is fixed (size 256), each chunk folds sequentially, chunks
/// merge in order.
fn chunk_results<A, F>(
    spec: &MeasureSpec<f64>,
    n: usize,
    stream_id: u64,
    per_sample: F,
) -> Result<Vec<A>>
where
    A: Default + Send,
    F: Fn(&Sf, &mut A) -> Result<()> + Sync,
{
    spec.validate()?;
    let n_chunks = (n as u64).div_ceil(CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = A::default();
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(n as u64);
            for index in lo..hi {
                let (u, _) = sample_one(spec, stream_id, index)?;
                per_sample(&u, &mut acc)?;
            }
            Ok(acc)
        })
        .collect()
}
