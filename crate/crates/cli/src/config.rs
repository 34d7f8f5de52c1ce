//! Study configuration: JSON in, resolved + hashed config out.
//!
//! `run` accepts either a bare config or a previously written manifest
//! (a config wrapped under "config"); re-running a manifest reproduces the
//! CSV bodies byte for byte.

use gaugekit::flow::FlowOptions;
use gaugekit::mc::{Statistic, TestSet};
use gaugekit::Measure;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(flatten)]
    pub study: Study,
    pub measure: Measure,
    #[serde(default = "default_flow")]
    pub flow: FlowOptions,
    /// Output directory; falls back to $GAUGEKIT_OUT_DIR, then ".".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// Rayon worker threads; default = all cores. Results do not depend
    /// on this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_flow() -> FlowOptions {
    FlowOptions::default()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "study", content = "params", rename_all = "kebab-case")]
pub enum Study {
    /// Per-sample structural invariants: conservation, frozen tail,
    /// modulus preservation, potential reality, divergence dual form,
    /// split identity.
    Invariants { n_samples: usize, alpha: f64, n: usize },
    /// Exact-vs-truncated flow discrepancy across truncation levels, with
    /// a log-log rate fit.
    FlowRate {
        alpha: f64,
        n_list: Vec<usize>,
        n_samples: usize,
    },
    /// Exact Wick rate table ‖F_{N_ref} − F_M‖_{L²} with slope fit.
    L2Rate { n_ref: usize, m_list: Vec<usize> },
    /// Empirical tail curve of a statistic with Clopper–Pearson bands
    /// (and the explicit Gaussian envelope for the weighted sup).
    Tails {
        stat: Statistic,
        n_samples: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        thresholds: Option<Vec<f64>>,
    },
    /// Pushforward/density identity sweep over test sets, α's and levels.
    Density {
        alphas: Vec<f64>,
        n_list: Vec<usize>,
        n_samples: usize,
    },
    /// Exact second moment of F_N − F_M against its Monte Carlo estimate.
    WickVsMc { n: usize, m: usize, n_samples: usize },
}

impl Study {
    pub fn name(&self) -> &'static str {
        match self {
            Study::Invariants { .. } => "invariants",
            Study::FlowRate { .. } => "flow-rate",
            Study::L2Rate { .. } => "l2-rate",
            Study::Tails { .. } => "tails",
            Study::Density { .. } => "density",
            Study::WickVsMc { .. } => "wick-vs-mc",
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.measure.validate().map_err(|e| e.to_string())?;
        if self.measure.s <= 0.5 {
            return Err(format!(
                "study configurations require s > 1/2, got s = {}",
                self.measure.s
            ));
        }
        self.flow.validate().map_err(|e| e.to_string())?;
        match &self.study {
            Study::Invariants { n_samples, n, .. } => {
                if *n_samples == 0 {
                    return Err("invariants: n_samples must be >= 1".into());
                }
                if *n > self.measure.cutoff {
                    return Err("invariants: n must be <= measure.cutoff".into());
                }
            }
            Study::FlowRate {
                n_list, n_samples, ..
            } => {
                if n_list.is_empty() || *n_samples == 0 {
                    return Err("flow-rate: n_list and n_samples must be nonempty".into());
                }
            }
            Study::L2Rate { n_ref, m_list } => {
                if m_list.is_empty() {
                    return Err("l2-rate: m_list must be nonempty".into());
                }
                if m_list.iter().any(|m| m > n_ref) {
                    return Err("l2-rate: every M must be <= n_ref".into());
                }
            }
            Study::Tails { n_samples, thresholds, .. } => {
                if *n_samples < 10_000 {
                    return Err("tails: n_samples must be >= 10000".into());
                }
                if let Some(t) = thresholds {
                    if t.is_empty() || t.windows(2).any(|w| w[0] >= w[1]) {
                        return Err("tails: thresholds must be strictly increasing".into());
                    }
                }
            }
            Study::Density {
                alphas,
                n_list,
                n_samples,
            } => {
                if alphas.is_empty() || n_list.is_empty() {
                    return Err("density: alphas and n_list must be nonempty".into());
                }
                if *n_samples < 10_000 {
                    return Err("density: n_samples must be >= 10000".into());
                }
                if self.measure.radius.is_none() {
                    return Err("density: the measure must carry a ball radius".into());
                }
            }
            Study::WickVsMc { n, m, n_samples } => {
                if m > n {
                    return Err("wick-vs-mc: m must be <= n".into());
                }
                if *n_samples < 100 {
                    return Err("wick-vs-mc: n_samples must be >= 100".into());
                }
            }
        }
        Ok(())
    }

    /// Hash of the semantic payload (study + measure + flow); execution
    /// details like output_dir and workers do not participate.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Semantic<'a> {
            #[serde(flatten)]
            study: &'a Study,
            measure: &'a Measure,
            flow: &'a FlowOptions,
        }
        let body = serde_json::to_string(&Semantic {
            study: &self.study,
            measure: &self.measure,
            flow: &self.flow,
        })
        .expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(body.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(16);
        for b in &digest[..8] {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config: StudyConfig,
    pub config_hash: String,
    pub artifacts: Vec<String>,
    /// Mass scale R* for restricted-measure studies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_star: Option<f64>,
}

/// Parse a config file, unwrapping a manifest when given one.
pub fn load_config(text: &str) -> Result<StudyConfig, String> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let config_value = if value.get("config").is_some() {
        value.get("config").unwrap().clone()
    } else {
        value
    };
    let config: StudyConfig =
        serde_json::from_value(config_value).map_err(|e| format!("invalid config: {e}"))?;
    config.validate()?;
    Ok(config)
}

/// The default catalog of density test sets: a seminorm ball and a grid
/// sup ball at pilot medians, and a coefficient halfspace.
pub fn density_catalog(s: f64, hs_median: f64, linf_median: f64, grid: usize) -> Vec<TestSet> {
    vec![
        TestSet::HsBall {
            s,
            radius: hs_median,
        },
        TestSet::HalfSpace {
            mode: 1,
            threshold: 0.0,
        },
        TestSet::GridLinfBall {
            radius: linf_median,
            grid,
        },
    ]
}
