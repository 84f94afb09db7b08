//! Monte Carlo experiments, artifact writers and acceptance checks.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::detector::DetectionReport;
use crate::error::{Error, Result};
use crate::model::{ExperimentConfig, NoiseDistribution};

pub mod checks;
pub mod config;
pub mod experiments;
pub mod figures;
pub mod io;
pub mod svg;

pub use checks::{CheckContext, CriterionOutcome, Suite};
pub use experiments::*;
pub use figures::{reproduce_figure, Figure, FigureOutput};

/// Number of leading eigenvalues and singular values kept per trial.
pub const RECORD_LEADING: usize = 20;

/// Per-trial artifact.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub leading_lambdas: Vec<Complex64>,
    pub detection: Option<DetectionReport>,
    pub leading_singular: Vec<f64>,
    pub sv_outliers: usize,
    /// Per signal: the matched strength estimate, if any.
    pub matched: Vec<Option<f64>>,
    pub extra_detections: usize,
    /// `|secular_value|` at each flagged eigenvalue, when certification ran.
    pub secular: Vec<f64>,
    pub wall_time_ms: f64,
}

/// Per-signal aggregate over trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalSummary {
    pub strength: f64,
    pub supercritical: bool,
    pub detection_rate: f64,
    /// Median of `|d̂ - d|`; unmatched trials count as infinite error.
    pub median_abs_error: f64,
    pub bias: f64,
    pub variance: f64,
}

/// Aggregate of one experiment. Depends only on the configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub config_digest: String,
    pub trials: usize,
    pub signals: Vec<SignalSummary>,
    pub ev_counts: Vec<usize>,
    pub sv_counts: Vec<usize>,
    pub metrics: BTreeMap<String, f64>,
    /// Theory predictions the experiment was compared against.
    pub theory: BTreeMap<String, f64>,
}

impl ExperimentSummary {
    pub fn new(experiment: &str, config_digest: String, trials: usize) -> Self {
        Self {
            experiment: experiment.to_string(),
            config_digest,
            trials,
            signals: Vec::new(),
            ev_counts: Vec::new(),
            sv_counts: Vec::new(),
            metrics: BTreeMap::new(),
            theory: BTreeMap::new(),
        }
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }
}

/// Summary plus the per-trial records it was reduced from.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRun {
    pub summary: ExperimentSummary,
    pub records: Vec<TrialRecord>,
}

/// Execution settings shared by all experiments.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker count; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

/// Evaluate `f(trial)` for `trial in 0..trials` in parallel, returning the
/// results in trial order.
pub fn run_trials<T, F>(trials: usize, opts: RunOptions, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let body = || (0..trials as u64).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match opts.threads {
        None => body(),
        Some(0) => Err(Error::InvalidParameter("thread count must be positive".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot build thread pool: {e}")))?
            .install(body),
    }
}

/// SHA-256 over every field that influences the draws.
pub fn config_digest(config: &ExperimentConfig) -> String {
    let mut h = Sha256::new();
    let mut put = |x: f64| h.update(x.to_le_bytes());
    put(config.p as f64);
    put(config.n as f64);
    for s in config.signal.strengths() {
        put(*s);
    }
    for m in [config.signal.left(), config.signal.right(), config.sigma.left(), config.sigma.right()] {
        put(m.rows() as f64);
        put(m.cols() as f64);
        m.as_slice().iter().copied().for_each(&mut put);
    }
    for s in config.sigma.strengths() {
        put(*s);
    }
    config.profile.matrix().as_slice().iter().copied().for_each(&mut put);
    match config.distribution {
        NoiseDistribution::Gaussian => put(0.0),
        NoiseDistribution::StudentT(nu) => {
            put(1.0);
            put(nu);
        }
        NoiseDistribution::Rademacher => put(2.0),
    }
    put(config.trials as f64);
    put(config.truncation.unwrap_or(-1.0));
    h.update(config.seed.to_le_bytes());
    hex(&h.finalize())
}

/// Digest of an arbitrary parameter description.
pub fn params_digest(params: &serde_json::Value) -> String {
    hex(&Sha256::digest(params.to_string().as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub(crate) fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

pub(crate) fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    crate::theory::median(&mut v)
}

pub(crate) fn median_usize(x: &[usize]) -> f64 {
    median(&x.iter().map(|&v| v as f64).collect::<Vec<_>>())
}

/// Sample skewness and excess kurtosis.
pub(crate) fn shape_moments(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    let k = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / k;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / k;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / k;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

pub(crate) fn fraction(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for f in flags {
        hit += usize::from(f);
        total += 1;
    }
    if total == 0 {
        f64::NAN
    } else {
        hit as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_order_is_trial_order() {
        let serial = run_trials(17, RunOptions { threads: Some(1) }, |t| Ok(t * t)).unwrap();
        let parallel = run_trials(17, RunOptions { threads: Some(3) }, |t| Ok(t * t)).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial[4], 16);
        assert!(run_trials(3, RunOptions { threads: Some(0) }, |t| Ok(t)).is_err());
    }

    #[test]
    fn errors_propagate() {
        let r = run_trials(5, RunOptions::default(), |t| {
            if t == 3 {
                Err(Error::InvalidParameter("boom".into()))
            } else {
                Ok(t)
            }
        });
        assert!(r.is_err());
    }

    #[test]
    fn digest_tracks_seed() {
        let a = ExperimentConfig::null(10, 20, 3, 1);
        let b = ExperimentConfig::null(10, 20, 3, 2);
        assert_eq!(config_digest(&a), config_digest(&a.clone()));
        assert_ne!(config_digest(&a), config_digest(&b));
        assert_eq!(config_digest(&a).len(), 64);
    }

    #[test]
    fn moments() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert!((variance(&x) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(median(&x), 2.5);
        let (s, _) = shape_moments(&x);
        assert!(s.abs() < 1e-15);
        assert_eq!(fraction([true, false, true, true].into_iter()), 0.75);
    }
}
