//! Study runners: each produces CSV artifacts plus a manifest that can be
//! fed back to `run` to reproduce the CSV bodies byte for byte.

use std::fs;
use std::path::Path;

use gaugekit::fit::rate_fit;
use gaugekit::flow::{flow_discrepancy, gauge_exact, gauge_truncated};
use gaugekit::functionals::{gauge_divergence, hs_derivative, hs_derivative_split};
use gaugekit::mc::{
    density_batch, estimate_moment, pilot_median, pushforward_from_batch, tail_curve,
    tail_sup_envelope, Statistic,
};
use gaugekit::measure::sample_one;
use gaugekit::wick::{rate_table, rate_table_csv, second_moment_diff};
use gaugekit::{Error as CoreError, Measure};

use crate::config::{density_catalog, Manifest, Study, StudyConfig};

/// Sample stream ids, fixed so results never depend on scheduling.
const STREAM_MAIN: u64 = 0;
const STREAM_PILOT: u64 = 9090;
const STREAM_COMBO_BASE: u64 = 100;

#[derive(Debug)]
pub enum RunError {
    Validation(String),
    Numeric(CoreError),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Validation(m) => write!(f, "validation error: {m}"),
            RunError::Numeric(e) => write!(f, "numeric failure: {e}"),
            RunError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidInput(_)
            | CoreError::GridTooSmall { .. }
            | CoreError::ComplexityGuard { .. } => RunError::Validation(e.to_string()),
            other => RunError::Numeric(other),
        }
    }
}

fn fnum(v: f64) -> String {
    format!("{v}")
}

pub fn run_study(config: &StudyConfig, out_dir: &Path) -> Result<Manifest, RunError> {
    config.validate().map_err(RunError::Validation)?;
    fs::create_dir_all(out_dir)?;
    let hash = config.config_hash();
    let seed = config.measure.master_seed;

    let mut artifacts = Vec::new();
    match &config.study {
        Study::Invariants { n_samples, alpha, n } => {
            let body = invariants_rows(config, &hash, *n_samples, *alpha, *n)?;
            let path = out_dir.join("results.csv");
            fs::write(&path, body)?;
            artifacts.push("results.csv".to_string());
        }
        Study::FlowRate {
            alpha,
            n_list,
            n_samples,
        } => {
            let body = flow_rate_rows(config, &hash, *alpha, n_list, *n_samples)?;
            fs::write(out_dir.join("results.csv"), body)?;
            artifacts.push("results.csv".to_string());
        }
        Study::L2Rate { n_ref, m_list } => {
            // Every artifact embeds the resolved config hash.
            let table = format!(
                "# config={hash}\n{}",
                rate_table_csv(config.measure.s, m_list, *n_ref)?
            );
            fs::write(out_dir.join("rate_table.csv"), &table)?;
            artifacts.push("rate_table.csv".to_string());
            let body = l2_rate_rows(config, &hash, *n_ref, m_list)?;
            fs::write(out_dir.join("results.csv"), body)?;
            artifacts.push("results.csv".to_string());
        }
        Study::Tails {
            stat,
            n_samples,
            thresholds,
        } => {
            let body = tails_rows(config, &hash, stat, *n_samples, thresholds.as_deref())?;
            fs::write(out_dir.join("results.csv"), body)?;
            artifacts.push("results.csv".to_string());
        }
        Study::Density {
            alphas,
            n_list,
            n_samples,
        } => {
            let body = density_rows(config, &hash, alphas, n_list, *n_samples)?;
            fs::write(out_dir.join("results.csv"), body)?;
            artifacts.push("results.csv".to_string());
        }
        Study::WickVsMc { n, m, n_samples } => {
            let body = wick_vs_mc_rows(config, &hash, *n, *m, *n_samples)?;
            fs::write(out_dir.join("results.csv"), body)?;
            artifacts.push("results.csv".to_string());
        }
    }

    let manifest = Manifest {
        config: config.clone(),
        config_hash: hash,
        artifacts,
        r_star: config.measure.mass_scale(),
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    eprintln!(
        "study {} done; seed {seed}; artifacts in {}",
        config.study.name(),
        out_dir.display()
    );
    Ok(manifest)
}

fn invariants_rows(
    config: &StudyConfig,
    hash: &str,
    n_samples: usize,
    alpha: f64,
    n: usize,
) -> Result<String, RunError> {
    let spec = config.measure;
    let seed = spec.master_seed;
    let mut out = String::from("config_hash,sample,invariant,value,n,seed\n");
    for idx in 0..n_samples as u64 {
        let (u, _) = sample_one(&spec, STREAM_MAIN, idx)?;
        let mut push = |name: &str, value: f64| {
            out.push_str(&format!(
                "{hash},{idx},{name},{},{n_samples},{seed}\n",
                fnum(value)
            ));
        };

        let run = gauge_truncated(&u, alpha, n, &config.flow)?;
        push("l2_drift", run.l2_drift);
        let frozen = u
            .modes()
            .filter(|(k, _)| k.unsigned_abs() as usize > n)
            .all(|(k, c)| {
                let d = run.final_state.coeff(k);
                d.re.to_bits() == c.re.to_bits() && d.im.to_bits() == c.im.to_bits()
            });
        push("tail_frozen", if frozen { 1.0 } else { 0.0 });

        let exact = gauge_exact(&u, alpha, &config.flow)?;
        let grid = 2 * exact.function.cutoff() + 1;
        let before = u.evaluate(grid)?;
        let after = exact.function.evaluate(grid)?;
        let modulus_drift = before
            .iter()
            .zip(&after)
            .map(|(b, a)| (b.norm() - a.norm()).abs())
            .fold(0.0f64, f64::max);
        push("modulus_drift", modulus_drift);

        let pot = u.gauge_potential(n);
        let reality = (1..=pot.cutoff() as i64)
            .map(|m| (pot.coeff(-m) - pot.coeff(m).conj()).norm())
            .fold(0.0f64, f64::max);
        push("potential_reality", reality);
        push("potential_zero_mode", pot.coeff(0).norm());

        push("divergence", gauge_divergence(&u, n)?);

        let direct = hs_derivative(&u, n, spec.s)?.value;
        let split = hs_derivative_split(&u, n, spec.s, 1e-10)?;
        let parts = split.split.expect("split parts present");
        push("split_gap", (parts.f_less + parts.f_geq - direct).abs());
    }
    Ok(out)
}

fn flow_rate_rows(
    config: &StudyConfig,
    hash: &str,
    alpha: f64,
    n_list: &[usize],
    n_samples: usize,
) -> Result<String, RunError> {
    let spec = config.measure;
    let seed = spec.master_seed;
    let mut out = String::from("config_hash,statistic,value,stderr,n,seed\n");
    // Common samples across levels sharpen the monotonicity of the means.
    let samples: Vec<_> = (0..n_samples as u64)
        .map(|i| sample_one(&spec, STREAM_MAIN, i).map(|p| p.0))
        .collect::<Result<_, _>>()?;
    let mut points = Vec::new();
    for &level in n_list {
        let mut acc = 0.0;
        let mut acc_sq = 0.0;
        for u in &samples {
            let d = flow_discrepancy(u, alpha, level, &config.flow)?;
            acc += d;
            acc_sq += d * d;
        }
        let mean = acc / n_samples as f64;
        let var = (acc_sq / n_samples as f64 - mean * mean).max(0.0);
        let se = (var / n_samples as f64).sqrt();
        out.push_str(&format!(
            "{hash},discrepancy[N={level}],{},{},{n_samples},{seed}\n",
            fnum(mean),
            fnum(se)
        ));
        points.push((level as f64, mean));
    }
    if points.len() >= 3 && points.iter().all(|p| p.1 > 0.0) {
        let fit = rate_fit(&points)?;
        out.push_str(&format!(
            "{hash},fit_slope,{},0,{n_samples},{seed}\n",
            fnum(fit.slope)
        ));
        out.push_str(&format!(
            "{hash},fit_r2,{},0,{n_samples},{seed}\n",
            fnum(fit.r2)
        ));
    }
    Ok(out)
}

fn l2_rate_rows(
    config: &StudyConfig,
    hash: &str,
    n_ref: usize,
    m_list: &[usize],
) -> Result<String, RunError> {
    let seed = config.measure.master_seed;
    let rows = rate_table(config.measure.s, m_list, n_ref)?;
    let mut out = String::from("config_hash,statistic,value,stderr,n,seed\n");
    for &(m, d) in &rows {
        out.push_str(&format!("{hash},l2_distance[M={m}],{},0,1,{seed}\n", fnum(d)));
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(_, d)| *d > 0.0)
        .map(|&(m, d)| (m as f64, d))
        .collect();
    if points.len() >= 3 {
        let fit = rate_fit(&points)?;
        out.push_str(&format!("{hash},fit_slope,{},0,1,{seed}\n", fnum(fit.slope)));
        out.push_str(&format!("{hash},fit_r2,{},0,1,{seed}\n", fnum(fit.r2)));
    }
    Ok(out)
}

fn tails_rows(
    config: &StudyConfig,
    hash: &str,
    stat: &Statistic,
    n_samples: usize,
    thresholds: Option<&[f64]>,
) -> Result<String, RunError> {
    let spec = config.measure;
    let seed = spec.master_seed;
    let resolved: Vec<f64> = match thresholds {
        Some(t) => t.to_vec(),
        None => pilot_thresholds(&spec, stat, n_samples.min(20_000))?,
    };
    let curve = tail_curve(stat, &spec, &resolved, n_samples, STREAM_MAIN)?;
    let mut out =
        String::from("config_hash,threshold,survival,log_survival,cp_lo,cp_hi,envelope,n,seed\n");
    for (i, &t) in curve.thresholds.iter().enumerate() {
        let envelope = match *stat {
            Statistic::TailSup { s_prime, n0 } => {
                fnum(tail_sup_envelope(spec.s, s_prime, n0, t).min(1.0))
            }
            _ => String::new(),
        };
        out.push_str(&format!(
            "{hash},{},{},{},{},{},{envelope},{n_samples},{seed}\n",
            fnum(t),
            fnum(curve.log_survival[i].exp()),
            fnum(curve.log_survival[i]),
            fnum(curve.clopper_pearson_lo[i]),
            fnum(curve.clopper_pearson_hi[i]),
        ));
    }
    Ok(out)
}

fn pilot_thresholds(
    spec: &Measure,
    stat: &Statistic,
    n_pilot: usize,
) -> Result<Vec<f64>, RunError> {
    let mut vals: Vec<f64> = (0..n_pilot as u64)
        .map(|i| {
            let (u, _) = sample_one(spec, STREAM_PILOT, i)?;
            stat.evaluate(&u).map(f64::abs)
        })
        .collect::<Result<_, CoreError>>()?;
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite statistic"));
    let mut out = Vec::new();
    for q in [0.5, 0.75, 0.9, 0.95, 0.98, 0.99, 0.995, 0.999] {
        let v = vals[((n_pilot as f64 * q) as usize).min(n_pilot - 1)];
        if out.last().is_none_or(|&last| v > last) {
            out.push(v);
        }
    }
    if out.len() < 2 {
        return Err(RunError::Validation(
            "pilot thresholds degenerate; pass explicit thresholds".into(),
        ));
    }
    Ok(out)
}

fn density_rows(
    config: &StudyConfig,
    hash: &str,
    alphas: &[f64],
    n_list: &[usize],
    n_samples: usize,
) -> Result<String, RunError> {
    let seed = config.measure.master_seed;
    let radius = config
        .measure
        .radius
        .expect("validated: density needs a radius");
    let mut out = String::from(
        "config_hash,set,alpha,n_level,lhs,lhs_se,rhs,rhs_se,z,n,seed\n",
    );
    let mut combo = 0u64;
    for &level in n_list {
        let spec = Measure::restricted(config.measure.s, level, radius, seed);
        let grid = 16.max(2 * level + 1);
        let sob = gaugekit::spectral::SobolevIndex::new(spec.s)
            .map_err(RunError::from)?;
        let hs_median = pilot_median(&spec, 2000, STREAM_PILOT, |u| {
            Ok(u.sobolev_seminorm_sq(sob).sqrt())
        })?;
        let linf_median = pilot_median(&spec, 2000, STREAM_PILOT + 1, |u| {
            let vals = u.evaluate(grid)?;
            Ok(vals.iter().map(|v| v.norm()).fold(0.0, f64::max))
        })?;
        let mut sets = density_catalog(spec.s, hs_median, linf_median, grid);
        sets.push(gaugekit::mc::TestSet::Everything);
        for &alpha in alphas {
            let batch = density_batch(
                alpha,
                &spec,
                n_samples,
                &config.flow,
                STREAM_COMBO_BASE + combo,
            )?;
            combo += 1;
            for set in &sets {
                let check = pushforward_from_batch(&batch, set)?;
                out.push_str(&format!(
                    "{hash},{},{},{level},{},{},{},{},{},{n_samples},{seed}\n",
                    set.label(),
                    fnum(alpha),
                    fnum(check.lhs.value),
                    fnum(check.lhs.stderr),
                    fnum(check.rhs.value),
                    fnum(check.rhs.stderr),
                    fnum(check.z_score),
                ));
            }
        }
    }
    Ok(out)
}

fn wick_vs_mc_rows(
    config: &StudyConfig,
    hash: &str,
    n: usize,
    m: usize,
    n_samples: usize,
) -> Result<String, RunError> {
    let spec = config.measure;
    let seed = spec.master_seed;
    let s = spec.s;
    let exact = second_moment_diff(n, m, s)?;
    let stat = Statistic::HsDerivativeDiff { n, m, s };
    let est = estimate_moment(&stat, 2.0, &spec, n_samples, STREAM_MAIN)?;
    // estimate_moment returns E[d²]^{1/2}; move to the squared scale.
    let mc_sq = est.value * est.value;
    let mc_sq_se = 2.0 * est.value * est.stderr;
    let z = if mc_sq_se == 0.0 {
        0.0
    } else {
        (mc_sq - exact.value) / mc_sq_se
    };
    let mut out = String::from("config_hash,statistic,value,stderr,n,seed\n");
    out.push_str(&format!(
        "{hash},wick_exact[N={n};M={m};s={s}],{},0,1,{seed}\n",
        fnum(exact.value)
    ));
    out.push_str(&format!(
        "{hash},mc_second_moment[N={n};M={m};s={s}],{},{},{n_samples},{seed}\n",
        fnum(mc_sq),
        fnum(mc_sq_se)
    ));
    out.push_str(&format!("{hash},z_score,{},0,{n_samples},{seed}\n", fnum(z)));
    Ok(out)
}
