//! Monte Carlo experiments. Each returns an [`ExperimentRun`] whose summary
//! is a deterministic function of its parameters.

use std::time::Instant;

use num_complex::Complex64;
use serde_json::json;

use super::{
    config_digest, fraction, mean, median, median_usize, params_digest, run_trials, shape_moments, variance,
    ExperimentRun, ExperimentSummary, RunOptions, SignalSummary, TrialRecord, RECORD_LEADING,
};
use crate::detector::{detect, NConvention, SV_MARGIN};
use crate::error::{Error, Result};
use crate::linalg::{dot, eig_general, solve_shifted, DenseMatrix};
use crate::model::{signal_matrix, ExperimentConfig, NoiseDistribution, VarianceProfile};
use crate::sampler::{assemble_with_signal, noise_pair, sample_noise, stream_rng, STREAM_X1};
use crate::spectrum::{build_linearization, eigs_asym, singular_baseline};
use crate::theory::{
    fluct_variance, null_edge, secular_value, threshold, trace_moment_limit, KernelPath, NullEdgeMethod,
};

/// Largest distance at which a detection is attributed to a planted strength.
pub const MATCH_RADIUS: f64 = 0.25;

/// Margin above the null edge for counting heavy-tail singular-value outliers.
pub const HEAVY_TAIL_SV_MARGIN: f64 = 0.1;

/// `ε` in the first-order bound `n^{-1/2+ε} σ_max²`.
pub const FIRST_ORDER_EPSILON: f64 = 0.1;

/// Trials used when the null edge has no closed form.
pub const NULL_EDGE_MC_TRIALS: usize = 20;

/// Null singular-value edge: closed form for constant profiles, seeded
/// Monte Carlo otherwise.
pub fn resolve_null_edge(profile: &VarianceProfile, seed: u64) -> Result<f64> {
    if profile.flat_value().is_some() {
        null_edge(profile, NullEdgeMethod::FlatClosedForm)
    } else {
        null_edge(profile, NullEdgeMethod::MonteCarlo { trials: NULL_EDGE_MC_TRIALS, seed: seed ^ 0x6e75_6c6c })
    }
}

/// Half the smallest gap between strengths, capped at [`MATCH_RADIUS`].
pub fn match_radius(strengths: &[f64]) -> f64 {
    let mut r = MATCH_RADIUS;
    for (i, a) in strengths.iter().enumerate() {
        for b in &strengths[i + 1..] {
            r = r.min(0.5 * (a - b).abs());
        }
    }
    r
}

/// Greedy nearest-first assignment of estimates to eligible strengths.
/// Returns the matched estimate per strength and the number of unmatched
/// estimates.
pub fn match_detections(estimates: &[f64], strengths: &[f64], eligible: &[bool], radius: f64) -> (Vec<Option<f64>>, usize) {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (a, e) in estimates.iter().enumerate() {
        for (b, d) in strengths.iter().enumerate() {
            let dist = (e - d).abs();
            if eligible[b] && dist <= radius {
                cand.push((dist, a, b));
            }
        }
    }
    cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used = vec![false; estimates.len()];
    let mut matched = vec![None; strengths.len()];
    for (_, a, b) in cand {
        if !used[a] && matched[b].is_none() {
            used[a] = true;
            matched[b] = Some(estimates[a]);
        }
    }
    let extra = used.iter().filter(|u| !**u).count();
    (matched, extra)
}

/// Settings of the detection experiments.
#[derive(Debug, Clone, Copy)]
pub struct DetectionOptions {
    pub run: RunOptions,
    pub n_convention: NConvention,
    /// Singular values above `null_edge + sv_margin` count as outliers.
    pub sv_margin: f64,
    /// Compute singular values of `H1`.
    pub singular_baseline: bool,
    /// Evaluate the secular function at every flagged eigenvalue.
    pub certify: bool,
}

impl Default for DetectionOptions {
    fn default() -> Self {
        Self {
            run: RunOptions::default(),
            n_convention: NConvention::PPlusN,
            sv_margin: SV_MARGIN,
            singular_baseline: true,
            certify: false,
        }
    }
}

/// Detection rates, location errors and baseline counts over the trials of
/// `config`.
pub fn run_first_order(config: &ExperimentConfig, opts: &DetectionOptions) -> Result<ExperimentRun> {
    run_detection("first_order", config, opts)
}

/// Singular-value outliers against eigenvalue detections, with the outlier
/// margin [`HEAVY_TAIL_SV_MARGIN`].
pub fn run_heavy_tail_comparison(config: &ExperimentConfig, opts: &DetectionOptions) -> Result<ExperimentRun> {
    let opts = DetectionOptions { sv_margin: HEAVY_TAIL_SV_MARGIN, singular_baseline: true, ..*opts };
    run_detection("heavy_tail", config, &opts)
}

fn run_detection(name: &str, config: &ExperimentConfig, opts: &DetectionOptions) -> Result<ExperimentRun> {
    for w in config.validate()? {
        log::warn!("{w}");
    }
    let thr = threshold(&config.profile)?;
    let edge = if opts.singular_baseline { resolve_null_edge(&config.profile, config.seed)? } else { f64::NAN };
    let strengths = config.signal.strengths().to_vec();
    let eligible: Vec<bool> = strengths.iter().map(|&d| d > thr).collect();
    let radius = match_radius(&strengths);
    let n_dim = opts.n_convention.resolve(config.p, config.n);
    let s = signal_matrix(&config.signal);

    let records = run_trials(config.trials, opts.run, |trial| {
        let start = Instant::now();
        let pair = assemble_with_signal(config, &s, trial, opts.certify)?;
        let spec = eigs_asym(&pair.h1, &pair.h2, 0)?;
        let report = detect(&spec, n_dim);
        let (leading_singular, sv_outliers) = if opts.singular_baseline {
            let sv = singular_baseline(&pair.h1)?;
            let count = sv.iter().filter(|&&v| v > edge + opts.sv_margin).count();
            (sv.into_iter().take(RECORD_LEADING).collect(), count)
        } else {
            (Vec::new(), 0)
        };
        let estimates: Vec<f64> = report.flagged.iter().map(|d| d.estimate).collect();
        let (matched, extra_detections) = match_detections(&estimates, &strengths, &eligible, radius);
        let mut secular = Vec::new();
        if opts.certify && !report.flagged.is_empty() {
            let comps = pair.components.as_ref().expect("components retained");
            let noise = build_linearization(&config.sigma.apply(&comps.x1)?, &config.sigma.apply(&comps.x2)?)?;
            for det in &report.flagged {
                secular.push(secular_value(&noise, &config.signal, det.lambda)?.norm());
            }
        }
        Ok(TrialRecord {
            trial_index: trial,
            leading_lambdas: spec.lambdas.iter().take(RECORD_LEADING).copied().collect(),
            detection: Some(report),
            leading_singular,
            sv_outliers,
            matched,
            extra_detections,
            secular,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    })?;

    let mut summary = ExperimentSummary::new(name, config_digest(config), config.trials);
    for (i, &d) in strengths.iter().enumerate() {
        let ests: Vec<f64> = records.iter().filter_map(|r| r.matched[i]).collect();
        let errs: Vec<f64> = records.iter().map(|r| r.matched[i].map_or(f64::INFINITY, |e| (e - d).abs())).collect();
        summary.signals.push(SignalSummary {
            strength: d,
            supercritical: eligible[i],
            detection_rate: fraction(records.iter().map(|r| r.matched[i].is_some())),
            median_abs_error: median(&errs),
            bias: mean(&ests) - d,
            variance: variance(&ests),
        });
    }
    summary.ev_counts = records.iter().map(|r| r.detection.as_ref().map_or(0, |d| d.flagged.len())).collect();
    summary.sv_counts = records.iter().map(|r| r.sv_outliers).collect();
    let m = &mut summary.metrics;
    m.insert("extra_rate".into(), fraction(records.iter().map(|r| r.extra_detections > 0)));
    m.insert("median_ev_count".into(), median_usize(&summary.ev_counts));
    m.insert("ev_zero_rate".into(), fraction(summary.ev_counts.iter().map(|&c| c == 0)));
    if opts.singular_baseline {
        m.insert("median_sv_count".into(), median_usize(&summary.sv_counts));
        m.insert("sv_nonzero_rate".into(), fraction(summary.sv_counts.iter().map(|&c| c > 0)));
    }
    if opts.certify {
        let all: Vec<f64> = records.iter().flat_map(|r| r.secular.iter().copied()).collect();
        m.insert("certified_count".into(), all.len() as f64);
        m.insert("max_secular".into(), all.iter().copied().fold(0.0, f64::max));
    }
    let t = &mut summary.theory;
    t.insert("threshold".into(), thr);
    t.insert("null_edge".into(), edge);
    t.insert("sigma_max".into(), config.sigma.sigma_max());
    t.insert(
        "first_order_bound".into(),
        (config.n as f64).powf(-0.5 + FIRST_ORDER_EPSILON) * config.sigma.sigma_max().powi(2),
    );
    t.insert("match_radius".into(), radius);
    t.insert("N".into(), n_dim as f64);
    Ok(ExperimentRun { summary, records })
}

/// Fluctuation of the outlier near `d_index` compared with its predicted
/// variance.
pub fn run_second_order(config: &ExperimentConfig, index: usize, opts: RunOptions) -> Result<ExperimentRun> {
    for w in config.validate()? {
        log::warn!("{w}");
    }
    let pred = fluct_variance(&config.profile, &config.sigma, &config.signal, index, KernelPath::Auto)?;
    let d = config.signal.strengths()[index];
    let s = signal_matrix(&config.signal);
    let n_dim = NConvention::PPlusN.resolve(config.p, config.n);
    let records = run_trials(config.trials, opts, |trial| {
        let start = Instant::now();
        let pair = assemble_with_signal(config, &s, trial, false)?;
        let spec = eigs_asym(&pair.h1, &pair.h2, 0)?;
        let nearest = spec
            .lambdas
            .iter()
            .copied()
            .min_by(|a, b| (a - d).norm().total_cmp(&(b - d).norm()))
            .ok_or_else(|| Error::Dimension("empty spectrum".into()))?;
        let mut matched = vec![None; config.signal.rank()];
        matched[index] = Some(nearest.re);
        Ok(TrialRecord {
            trial_index: trial,
            leading_lambdas: spec.lambdas.iter().take(RECORD_LEADING).copied().collect(),
            detection: Some(detect(&spec, n_dim)),
            leading_singular: Vec::new(),
            sv_outliers: 0,
            matched,
            extra_detections: 0,
            secular: Vec::new(),
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    })?;
    let devs: Vec<f64> = records.iter().map(|r| r.matched[index].expect("set above") - d).collect();
    let var_emp = variance(&devs);
    let (skew, kurt) = shape_moments(&devs);
    let mut summary = ExperimentSummary::new("second_order", config_digest(config), config.trials);
    summary.signals.push(SignalSummary {
        strength: d,
        supercritical: true,
        detection_rate: 1.0,
        median_abs_error: median(&devs.iter().map(|x| x.abs()).collect::<Vec<_>>()),
        bias: mean(&devs),
        variance: var_emp,
    });
    let nf = config.n as f64;
    let m = &mut summary.metrics;
    m.insert("mean_dev".into(), mean(&devs));
    m.insert("var_emp".into(), var_emp);
    m.insert("n_var_emp".into(), nf * var_emp);
    m.insert("ratio_total".into(), var_emp / pred.var_total);
    m.insert("ratio_outlier".into(), var_emp / pred.var_outlier);
    m.insert("skewness".into(), skew);
    m.insert("excess_kurtosis".into(), kurt);
    m.insert("bias_tolerance".into(), 3.0 * (pred.var_total / config.trials as f64).sqrt() + 0.5 / nf);
    let t = &mut summary.theory;
    t.insert("var_g".into(), pred.var_g);
    t.insert("var_g_row".into(), pred.var_g_terms[0]);
    t.insert("var_g_mixed".into(), pred.var_g_terms[1]);
    t.insert("var_g_col".into(), pred.var_g_terms[2]);
    t.insert("var_linear".into(), pred.var_linear);
    t.insert("var_total".into(), pred.var_total);
    t.insert("var_outlier".into(), pred.var_outlier);
    t.insert("z_abs".into(), pred.z_abs_used);
    Ok(ExperimentRun { summary, records })
}

/// Square iid matrix plus a diagonal finite-rank perturbation.
#[derive(Debug, Clone)]
pub struct IidOutlierParams {
    pub n: usize,
    pub c_values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub distribution: NoiseDistribution,
    /// Radius outside which eigenvalues count as outliers.
    pub radius: f64,
    /// Accepted distance between an outlier and its `c_i`.
    pub tolerance: f64,
}

impl IidOutlierParams {
    pub fn new(n: usize, c_values: Vec<f64>, trials: usize, seed: u64) -> Self {
        Self { n, c_values, trials, seed, distribution: NoiseDistribution::Gaussian, radius: 1.1, tolerance: 0.15 }
    }
}

/// Eigenvalues of `X + Σ c_i e_i e_iᵀ` with `X` iid of variance `1/n`.
pub fn run_iid_outlier(params: &IidOutlierParams, opts: RunOptions) -> Result<ExperimentRun> {
    let n = params.n;
    if params.c_values.len() > n {
        return Err(Error::Dimension(format!("{} perturbations exceed n = {n}", params.c_values.len())));
    }
    let profile = VarianceProfile::ones(n, n);
    let k = params.c_values.len();
    let records = run_trials(params.trials, opts, |trial| {
        let start = Instant::now();
        let mut rng = stream_rng(params.seed, trial, STREAM_X1);
        let mut x = sample_noise(&profile, &params.distribution, &mut rng)?;
        for (i, c) in params.c_values.iter().enumerate() {
            x[(i, i)] += c;
        }
        let eig = eig_general(&x, false)?;
        let values: Vec<Complex64> = eig.iter().map(|e| e.value).collect();
        let mut taken = vec![false; values.len()];
        let mut nearest = Vec::with_capacity(k);
        for &c in &params.c_values {
            let (j, dist) = values
                .iter()
                .enumerate()
                .map(|(j, v)| (j, (v - c).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty spectrum");
            if c.abs() > params.radius && values[j].norm() >= params.radius {
                taken[j] = true;
            }
            nearest.push(Some(dist));
        }
        let others = values.iter().zip(&taken).filter(|(v, t)| !**t && v.norm() >= params.radius).count();
        Ok(TrialRecord {
            trial_index: trial,
            leading_lambdas: values.iter().take(RECORD_LEADING).copied().collect(),
            detection: None,
            leading_singular: Vec::new(),
            sv_outliers: 0,
            matched: nearest,
            extra_detections: others,
            secular: Vec::new(),
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    })?;
    let digest = params_digest(&json!({
        "experiment": "iid_outlier", "n": n, "c": params.c_values, "trials": params.trials,
        "seed": params.seed, "dist": params.distribution.label(), "radius": params.radius, "tol": params.tolerance,
    }));
    let mut summary = ExperimentSummary::new("iid_outlier", digest, params.trials);
    for (i, &c) in params.c_values.iter().enumerate() {
        let dists: Vec<f64> = records.iter().map(|r| r.matched[i].expect("set per trial")).collect();
        summary.metrics.insert(format!("median_distance_c{i}"), median(&dists));
        summary
            .metrics
            .insert(format!("within_tolerance_rate_c{i}"), fraction(dists.iter().map(|&x| x <= params.tolerance)));
        summary.signals.push(SignalSummary {
            strength: c,
            supercritical: c.abs() > 1.0,
            detection_rate: fraction(dists.iter().map(|&x| x <= params.tolerance)),
            median_abs_error: median(&dists),
            bias: f64::NAN,
            variance: f64::NAN,
        });
    }
    summary.ev_counts = records.iter().map(|r| r.extra_detections).collect();
    summary.metrics.insert("no_other_outside_rate".into(), fraction(summary.ev_counts.iter().map(|&c| c == 0)));
    summary.metrics.insert("median_other_outside".into(), median_usize(&summary.ev_counts));
    summary.theory.insert("radius".into(), params.radius);
    summary.theory.insert("tolerance".into(), params.tolerance);
    Ok(ExperimentRun { summary, records })
}

/// Traces of powers of the noise linearization.
#[derive(Debug, Clone, Copy)]
pub struct TraceParams {
    pub p: usize,
    pub n: usize,
    pub k_max: usize,
    pub trials: usize,
    pub seed: u64,
}

/// Empirical mean and variance of `Tr 𝒳^k`, `k = 1..=k_max`, for Gaussian
/// noise with unit profile. Even powers use `Tr 𝒳^{2m} = 2 Tr (X1 X2ᵀ)^m`;
/// odd powers are summed over the computed spectrum of `𝒳`.
pub fn run_trace_moments(params: TraceParams, opts: RunOptions) -> Result<ExperimentRun> {
    if params.k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be at least 1".into()));
    }
    let config = ExperimentConfig::null(params.p, params.n, params.trials, params.seed);
    let traces = run_trials(params.trials, opts, |trial| {
        let (x1, x2) = noise_pair(&config, trial)?;
        let a = x1.matmul_transpose(&x2)?;
        let spec = eigs_asym(&x1, &x2, 0)?;
        let full = spec.full_spectrum();
        let mut out = Vec::with_capacity(params.k_max);
        let mut power = DenseMatrix::identity(params.p);
        for k in 1..=params.k_max {
            if k % 2 == 0 {
                power = power.matmul(&a)?;
                out.push(2.0 * (0..params.p).map(|i| power[(i, i)]).sum::<f64>());
            } else {
                out.push(full.iter().map(|l| l.powi(k as i32)).sum::<Complex64>().re);
            }
        }
        Ok(out)
    })?;
    let digest = params_digest(&json!({
        "experiment": "trace_moments", "p": params.p, "n": params.n, "k_max": params.k_max,
        "trials": params.trials, "seed": params.seed,
    }));
    let mut summary = ExperimentSummary::new("trace_moments", digest, params.trials);
    let c = params.p as f64 / params.n as f64;
    for k in 1..=params.k_max {
        let vals: Vec<f64> = traces.iter().map(|t| t[k - 1]).collect();
        summary.metrics.insert(format!("mean_k{k}"), mean(&vals));
        summary.metrics.insert(format!("var_k{k}"), variance(&vals));
        summary.theory.insert(format!("limit_k{k}"), trace_moment_limit(params.p, params.n, k));
        if k % 2 == 0 {
            summary.theory.insert(format!("var_ref_k{k}"), c.powf(k as f64 / 2.0));
        }
    }
    Ok(ExperimentRun { summary, records: Vec::new() })
}

/// Pairs of unit directions for the quadratic-form experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QfDirection {
    /// `u = v = e1`.
    Same,
    /// `u = e1`, `v = e2`.
    Orthogonal,
    /// `u = v = 𝟙/√p`.
    Delocalized,
}

impl QfDirection {
    pub const ALL: [QfDirection; 3] = [QfDirection::Same, QfDirection::Orthogonal, QfDirection::Delocalized];

    pub fn label(self) -> &'static str {
        match self {
            QfDirection::Same => "same",
            QfDirection::Orthogonal => "orthogonal",
            QfDirection::Delocalized => "delocalized",
        }
    }

    fn vectors(self, p: usize) -> (Vec<f64>, Vec<f64>) {
        let e = |k: usize| {
            let mut v = vec![0.0; p];
            v[k] = 1.0;
            v
        };
        match self {
            QfDirection::Same => (e(0), e(0)),
            QfDirection::Orthogonal => (e(0), e(1)),
            QfDirection::Delocalized => {
                let f = vec![1.0 / (p as f64).sqrt(); p];
                (f.clone(), f)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct QfScalingParams {
    pub n_grid: Vec<usize>,
    /// Aspect ratio `p/n`.
    pub aspect: f64,
    /// Real spectral parameter of `(X1 X2ᵀ - z)⁻¹`.
    pub z: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for QfScalingParams {
    fn default() -> Self {
        Self { n_grid: vec![100, 200, 400, 800], aspect: 0.4, z: 2.25, trials: 200, seed: 0 }
    }
}

/// `uᵀ G̲(z) v` with `G̲(z) = (X1 X2ᵀ - z)⁻¹ + 1/z`.
pub fn centered_quadratic_form(a: &DenseMatrix, z: f64, u: &[f64], v: &[f64]) -> Result<f64> {
    let b = DenseMatrix::from_columns(&[v.to_vec()], v.len())?;
    let x = solve_shifted(a, Complex64::new(z, 0.0), &b)?;
    let g: f64 = (0..u.len()).map(|i| u[i] * x[(i, 0)].re).sum();
    Ok(g + dot(u, v) / z)
}

/// Median `|uᵀ G̲(z) v|` per `n` and its log-log slope, for each direction pair.
pub fn run_qf_scaling(params: &QfScalingParams, opts: RunOptions) -> Result<ExperimentRun> {
    if params.n_grid.len() < 2 {
        return Err(Error::InvalidParameter("need at least two sizes for a slope".into()));
    }
    let digest = params_digest(&json!({
        "experiment": "qf_scaling", "n_grid": params.n_grid, "aspect": params.aspect, "z": params.z,
        "trials": params.trials, "seed": params.seed,
    }));
    let mut summary = ExperimentSummary::new("qf_scaling", digest, params.trials);
    let mut medians = vec![Vec::new(); QfDirection::ALL.len()];
    for &n in &params.n_grid {
        let p = ((params.aspect * n as f64).round() as usize).max(2);
        let config = ExperimentConfig::null(p, n, params.trials, params.seed.wrapping_add(n as u64));
        let pairs: Vec<_> = QfDirection::ALL.iter().map(|d| d.vectors(p)).collect();
        let vals = run_trials(params.trials, opts, |trial| {
            let (x1, x2) = noise_pair(&config, trial)?;
            let a = x1.matmul_transpose(&x2)?;
            pairs.iter().map(|(u, v)| Ok(centered_quadratic_form(&a, params.z, u, v)?.abs())).collect::<Result<Vec<f64>>>()
        })?;
        for (k, dir) in QfDirection::ALL.iter().enumerate() {
            let col: Vec<f64> = vals.iter().map(|v| v[k]).collect();
            let med = median(&col);
            summary.metrics.insert(format!("median_{}_n{n}", dir.label()), med);
            medians[k].push(med);
        }
    }
    let logn: Vec<f64> = params.n_grid.iter().map(|&n| (n as f64).ln()).collect();
    for (k, dir) in QfDirection::ALL.iter().enumerate() {
        let logm: Vec<f64> = medians[k].iter().map(|m| m.ln()).collect();
        summary.metrics.insert(format!("slope_{}", dir.label()), ls_slope(&logn, &logm));
    }
    // Far from the spectrum G̲(z) ≈ z⁻² X1 X2ᵀ.
    let n0 = params.n_grid[0];
    let p0 = ((params.aspect * n0 as f64).round() as usize).max(2);
    let (x1, x2) = noise_pair(&ExperimentConfig::null(p0, n0, 1, params.seed), 0)?;
    let a = x1.matmul_transpose(&x2)?;
    let far = 1e6;
    let (u, v) = QfDirection::Same.vectors(p0);
    summary.metrics.insert("neumann_value".into(), centered_quadratic_form(&a, far, &u, &v)?.abs());
    summary.metrics.insert("neumann_reference".into(), (a[(0, 0)] / (far * far)).abs());
    summary.theory.insert("slope".into(), -0.5);
    Ok(ExperimentRun { summary, records: Vec::new() })
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
