//! The data-driven detection rule.
//!
//! `λ_max^s` is the largest modulus among stored eigenvalues whose argument
//! lies in `[π/log N, π/2]`, a proxy for the noise spectral radius that real
//! outliers cannot inflate. An eigenvalue is flagged when
//! `Re λ ≥ λ_max^s + N^{-1/2}`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::spectrum::{singular_baseline, SpectrumResult};

/// Number of non-flagged leading eigenvalues kept for diagnostics.
const DIAGNOSTIC_LEADING: usize = 5;

/// Which dimension plays the role of `N` in the rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NConvention {
    #[default]
    #[serde(rename = "p+n")]
    PPlusN,
    #[serde(rename = "n")]
    N,
    #[serde(rename = "p")]
    P,
}

impl NConvention {
    pub fn resolve(self, p: usize, n: usize) -> usize {
        match self {
            NConvention::PPlusN => p + n,
            NConvention::N => n,
            NConvention::P => p,
        }
    }
}

impl FromStr for NConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p+n" => Ok(NConvention::PPlusN),
            "n" => Ok(NConvention::N),
            "p" => Ok(NConvention::P),
            other => Err(Error::InvalidParameter(format!("unknown N convention '{other}' (use p+n, n or p)"))),
        }
    }
}

impl fmt::Display for NConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NConvention::PPlusN => "p+n",
            NConvention::N => "n",
            NConvention::P => "p",
        })
    }
}

/// Lower edge `π / log N` of the argument window.
pub fn arg_window_start(n_dim: usize) -> f64 {
    PI / (n_dim as f64).ln()
}

/// `max |λ_i|` over stored eigenvalues with `arg λ_i ∈ [π/log N, π/2]`, or 0
/// when no eigenvalue falls in the window.
pub fn lambda_max_s(lambdas: &[Complex64], n_dim: usize) -> f64 {
    window_max(lambdas, n_dim).unwrap_or(0.0)
}

fn window_max(lambdas: &[Complex64], n_dim: usize) -> Option<f64> {
    let lo = arg_window_start(n_dim);
    lambdas
        .iter()
        .filter(|l| {
            let a = l.arg();
            a >= lo && a <= FRAC_PI_2
        })
        .map(|l| l.norm())
        .reduce(f64::max)
}

/// Optional overrides of the rule's constants.
#[derive(Debug, Clone, Copy, Default)]
pub struct DetectorSettings {
    /// Replaces `N^{-1/2}`.
    pub shift: Option<f64>,
    /// Replaces the merge radius `N^{-1/4}`.
    pub merge_radius: Option<f64>,
}

/// One reported signal: a single flagged eigenvalue or a merged cluster.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    /// 0-based positions in the stored spectrum.
    pub indices: Vec<usize>,
    /// Representative eigenvalue (first member of the cluster).
    pub lambda: Complex64,
    /// Strength estimate: mean real part over the cluster.
    pub estimate: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub lambda_max_s: f64,
    pub threshold_shift: f64,
    pub n_dim: usize,
    pub flagged: Vec<Detection>,
    pub unflagged_leading: Vec<Complex64>,
    /// The argument window was empty and the bulk median replaced `λ_max^s`.
    pub fallback: bool,
}

impl DetectionReport {
    /// `λ_max^s + shift`.
    pub fn threshold(&self) -> f64 {
        self.lambda_max_s + self.threshold_shift
    }

    /// Number of flagged eigenvalues, counting cluster multiplicity.
    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().map(|d| d.multiplicity).sum()
    }

    /// Per-index flag over a spectrum of length `len`.
    pub fn flagged_mask(&self, len: usize) -> Vec<bool> {
        let mut mask = vec![false; len];
        for d in &self.flagged {
            for &i in &d.indices {
                if i < len {
                    mask[i] = true;
                }
            }
        }
        mask
    }

    /// The exported JSON form.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "lambda_max_s": self.lambda_max_s,
            "shift": self.threshold_shift,
            "N": self.n_dim,
            "flagged": self.flagged.iter().map(|d| serde_json::json!({
                "re": d.lambda.re,
                "im": d.lambda.im,
                "estimate": d.estimate,
                "multiplicity": d.multiplicity,
                "indices": d.indices,
            })).collect::<Vec<_>>(),
            "fallback": self.fallback,
        })
    }
}

/// Apply the rule with the default constants.
pub fn detect(spectrum: &SpectrumResult, n_dim: usize) -> DetectionReport {
    detect_with(spectrum, n_dim, DetectorSettings::default())
}

pub fn detect_with(spectrum: &SpectrumResult, n_dim: usize, settings: DetectorSettings) -> DetectionReport {
    let lambdas = &spectrum.lambdas;
    let nf = n_dim as f64;
    let shift = settings.shift.unwrap_or(nf.powf(-0.5));
    let radius = settings.merge_radius.unwrap_or(nf.powf(-0.25));
    let (lms, fallback) = match window_max(lambdas, n_dim) {
        Some(v) => (v, false),
        None => (bulk_median_modulus(lambdas), true),
    };
    let cut = lms + shift;
    let hits: Vec<usize> = (0..lambdas.len()).filter(|&i| lambdas[i].re >= cut).collect();

    // Single-linkage merge of flagged eigenvalues closer than the radius.
    let mut group: Vec<usize> = (0..hits.len()).collect();
    fn root(g: &mut [usize], mut i: usize) -> usize {
        while g[i] != i {
            g[i] = g[g[i]];
            i = g[i];
        }
        i
    }
    for a in 0..hits.len() {
        for b in a + 1..hits.len() {
            if (lambdas[hits[a]] - lambdas[hits[b]]).norm() < radius {
                let (ra, rb) = (root(&mut group, a), root(&mut group, b));
                if ra != rb {
                    group[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut slot_of_root = vec![usize::MAX; hits.len()];
    for a in 0..hits.len() {
        let r = root(&mut group, a);
        if slot_of_root[r] == usize::MAX {
            slot_of_root[r] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[slot_of_root[r]].push(hits[a]);
    }
    let flagged = clusters
        .into_iter()
        .map(|idx| {
            let estimate = idx.iter().map(|&i| lambdas[i].re).sum::<f64>() / idx.len() as f64;
            Detection { lambda: lambdas[idx[0]], estimate, multiplicity: idx.len(), indices: idx }
        })
        .collect();
    let unflagged_leading = (0..lambdas.len())
        .filter(|i| !hits.contains(i))
        .take(DIAGNOSTIC_LEADING)
        .map(|i| lambdas[i])
        .collect();
    DetectionReport { lambda_max_s: lms, threshold_shift: shift, n_dim, flagged, unflagged_leading, fallback }
}

fn bulk_median_modulus(lambdas: &[Complex64]) -> f64 {
    let mut bulk: Vec<f64> = lambdas[lambdas.len() / 2..].iter().map(|l| l.norm()).collect();
    if bulk.is_empty() {
        return 0.0;
    }
    bulk.sort_by(f64::total_cmp);
    let m = bulk.len();
    if m % 2 == 1 {
        bulk[m / 2]
    } else {
        0.5 * (bulk[m / 2 - 1] + bulk[m / 2])
    }
}

/// Singular-value outliers of one observation against eigenvalue detections.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineComparison {
    pub null_edge: f64,
    pub margin: f64,
    pub sv_outliers: Vec<f64>,
    pub ev_detections: Vec<Detection>,
    pub sv_count: usize,
    pub ev_count: usize,
}

/// Default margin above the null edge for counting singular-value outliers.
pub const SV_MARGIN: f64 = 0.05;

pub fn compare_baseline(
    h1: &DenseMatrix,
    spectrum: &SpectrumResult,
    null_edge: f64,
    n_dim: usize,
) -> Result<BaselineComparison> {
    let sv = singular_baseline(h1)?;
    let report = detect(spectrum, n_dim);
    Ok(compare_counts(&sv, &report, null_edge, SV_MARGIN))
}

/// Comparison from precomputed singular values and a detection report.
pub fn compare_counts(
    singular_values: &[f64],
    report: &DetectionReport,
    null_edge: f64,
    margin: f64,
) -> BaselineComparison {
    let sv_outliers: Vec<f64> = singular_values.iter().copied().filter(|&s| s > null_edge + margin).collect();
    BaselineComparison {
        null_edge,
        margin,
        sv_count: sv_outliers.len(),
        sv_outliers,
        ev_count: report.flagged_count(),
        ev_detections: report.flagged.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spec(vals: Vec<Complex64>) -> SpectrumResult {
        SpectrumResult::from_lambdas(vals.len(), vals.len(), vals)
    }

    #[test]
    fn window_maximum_by_hand() {
        let s = spec(vec![c(2.0, 0.0), c(0.5, 0.5), c(0.5, -0.5)]);
        assert!((arg_window_start(2800) - 0.3958).abs() < 1e-4);
        assert!((lambda_max_s(&s.lambdas, 2800) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn real_spectrum_has_empty_window() {
        let s = spec(vec![c(2.0, 0.0), c(1.0, 0.0), c(0.5, 0.0), c(0.25, 0.0)]);
        assert_eq!(lambda_max_s(&s.lambdas, 100), 0.0);
        let r = detect(&s, 100);
        assert!(r.fallback);
        // Bulk is the lower half: median of {0.5, 0.25}.
        assert!((r.lambda_max_s - 0.375).abs() < 1e-15);
    }

    #[test]
    fn imaginary_unit_is_inside_window() {
        assert_eq!(lambda_max_s(&[c(0.0, 1.0)], 2800), 1.0);
    }

    #[test]
    fn boundary_is_closed() {
        let n_dim = 2800;
        let shift = (n_dim as f64).powf(-0.5);
        let base = c(0.5, 0.5);
        let edge = base.norm() + shift;
        let s = spec(vec![c(edge, 0.0), base, base.conj()]);
        let r = detect(&s, n_dim);
        assert_eq!(r.flagged_count(), 1);
        assert_eq!(r.flagged[0].estimate, edge);
        let below = spec(vec![c(edge - 1e-12, 0.0), base, base.conj()]);
        assert_eq!(detect(&below, n_dim).flagged_count(), 0);
    }

    #[test]
    fn conjugate_pair_merges() {
        let s = spec(vec![c(1.5, 0.01), c(1.5, -0.01), c(1.2, 0.0), c(0.3, 0.4), c(0.3, -0.4)]);
        let r = detect(&s, 2800);
        assert_eq!(r.flagged.len(), 2);
        assert_eq!(r.flagged[0].multiplicity, 2);
        assert_eq!(r.flagged[0].indices, vec![0, 1]);
        assert!((r.flagged[0].estimate - 1.5).abs() < 1e-15);
        assert_eq!(r.flagged_count(), 3);
        assert_eq!(r.flagged_mask(5), vec![true, true, true, false, false]);
    }

    #[test]
    fn json_shape() {
        let s = spec(vec![c(1.5, 0.0), c(0.3, 0.4), c(0.3, -0.4)]);
        let v = detect(&s, 2800).to_json();
        assert_eq!(v["N"], 2800);
        assert_eq!(v["fallback"], false);
        assert_eq!(v["flagged"][0]["multiplicity"], 1);
        assert!(v["shift"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn convention_parsing() {
        assert_eq!("p+n".parse::<NConvention>().unwrap().resolve(800, 2000), 2800);
        assert_eq!("n".parse::<NConvention>().unwrap().resolve(800, 2000), 2000);
        assert!("q".parse::<NConvention>().is_err());
    }

    #[test]
    fn baseline_counts() {
        let s = spec(vec![c(1.5, 0.0), c(0.3, 0.4), c(0.3, -0.4)]);
        let r = detect(&s, 2800);
        let cmp = compare_counts(&[4.0, 3.0, 1.64, 1.6], &r, 1.6, SV_MARGIN);
        assert_eq!(cmp.sv_count, 2);
        assert_eq!(cmp.ev_count, 1);
    }

    proptest! {
        #[test]
        fn flagged_satisfy_rule(seed in proptest::collection::vec((0.0f64..2.0, -1.0f64..1.0), 2..30)) {
            let vals: Vec<Complex64> = seed.iter().map(|&(r, i)| c(r, i)).collect();
            let s = spec(vals);
            let n_dim = 500;
            let r = detect(&s, n_dim);
            for d in &r.flagged {
                prop_assert!(d.estimate > 0.0);
                for &i in &d.indices {
                    prop_assert!(s.lambdas[i].re >= r.threshold());
                    if !r.fallback {
                        prop_assert!(s.lambdas[i].arg() < arg_window_start(n_dim));
                    }
                }
            }
        }

        #[test]
        fn moving_right_keeps_flag(shift in 0.0f64..3.0) {
            let s = spec(vec![c(1.5, 0.0), c(0.3, 0.4), c(0.3, -0.4)]);
            let moved = spec(vec![c(1.5 + shift, 0.0), c(0.3, 0.4), c(0.3, -0.4)]);
            prop_assert_eq!(detect(&s, 2800).flagged_count(), 1);
            prop_assert_eq!(detect(&moved, 2800).flagged_count(), 1);
        }
    }
}
