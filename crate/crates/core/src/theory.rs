//! Closed-form and fixed-point predictions: detection threshold, the vector
//! Dyson system, quadratic-form covariances, outlier fluctuation variance,
//! null singular-value edge, trace-moment limits, a determinant expansion and
//! the secular function.

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, elimination_determinant, op_norm, solve_shifted, svd_values, DenseMatrix};
use crate::model::{NoiseDistribution, SigmaSpec, SignalSpec, VarianceProfile};
use crate::sampler::{sample_noise, stream_rng};

/// Relative accuracy used for operator norms of profiles.
const NORM_TOL: f64 = 1e-13;

/// Minimum gap between distinct strengths for the fluctuation formula.
pub const DEFAULT_SEPARATION: f64 = 0.05;

/// Largest dimension accepted by [`det_sum_expansion`].
pub const MAX_EXPANSION_DIM: usize = 10;

/// `sqrt(||T||_op / n)`.
pub fn threshold(profile: &VarianceProfile) -> Result<f64> {
    let n = profile.cols() as f64;
    Ok((op_norm(profile.matrix(), NORM_TOL)? / n).sqrt())
}

/// Application of `𝕋 = T/n` and its transpose, with a fast path for rank-one
/// profiles.
struct ProfileOp<'a> {
    t: &'a DenseMatrix,
    n: f64,
    factors: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a> ProfileOp<'a> {
    fn new(profile: &'a VarianceProfile) -> Self {
        Self { t: profile.matrix(), n: profile.cols() as f64, factors: profile.rank_one_factors() }
    }

    /// `𝕋 x` for `x` of length `n`.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match &self.factors {
            Some((a, b)) => {
                let s = dot(b, x) / self.n;
                a.iter().map(|ai| ai * s).collect()
            }
            None => self.t.matvec(x).into_iter().map(|v| v / self.n).collect(),
        }
    }

    /// `𝕋^T y` for `y` of length `p`.
    fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        match &self.factors {
            Some((a, b)) => {
                let s = dot(a, y) / self.n;
                b.iter().map(|bi| bi * s).collect()
            }
            None => self.t.matvec_transpose(y).into_iter().map(|v| v / self.n).collect(),
        }
    }
}

/// Damped fixed-point settings for [`dyson_solve`].
#[derive(Debug, Clone, Copy)]
pub struct DysonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for DysonOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 100_000, damping: 0.5 }
    }
}

/// Positive solution `(u1, u2, v1, v2)` of the four coupled equations
///
/// ```text
/// 1/u1 = η + 𝕋 v2   + |z|²/(η + 𝕋 u2)
/// 1/u2 = η + 𝕋ᵀ v1  + |z|²/(η + 𝕋ᵀ u1)
/// 1/v1 = η + 𝕋 u2   + |z|²/(η + 𝕋 v2)
/// 1/v2 = η + 𝕋ᵀ u1  + |z|²/(η + 𝕋ᵀ v1)
/// ```
#[derive(Debug, Clone, Serialize)]
pub struct DysonSolution {
    pub eta: f64,
    pub z_abs: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    /// `max |x · rhs(x) - 1|` over all four equations and entries.
    pub residual: f64,
    pub iterations: usize,
}

impl DysonSolution {
    /// `p·⟨u1⟩ + n·⟨u2⟩ - (p·⟨v1⟩ + n·⟨v2⟩)`, normalized by the total mass.
    pub fn balance_gap(&self) -> f64 {
        let su: f64 = self.u1.iter().chain(&self.u2).sum();
        let sv: f64 = self.v1.iter().chain(&self.v2).sum();
        (su - sv).abs() / su.abs().max(sv.abs()).max(f64::MIN_POSITIVE)
    }

    pub fn is_positive(&self) -> bool {
        self.u1.iter().chain(&self.u2).chain(&self.v1).chain(&self.v2).all(|&x| x > 0.0)
    }

    /// `max_j max(u_j, v_j) / η`.
    pub fn max_over_eta(&self) -> f64 {
        self.u1.iter().chain(&self.u2).chain(&self.v1).chain(&self.v2).fold(0.0_f64, |m, &x| m.max(x)) / self.eta
    }
}

struct DysonRhs {
    u1: Vec<f64>,
    u2: Vec<f64>,
    v1: Vec<f64>,
    v2: Vec<f64>,
}

fn dyson_rhs(op: &ProfileOp<'_>, eta: f64, z2: f64, s: (&[f64], &[f64], &[f64], &[f64])) -> DysonRhs {
    let (u1, u2, v1, v2) = s;
    let tu2 = op.apply(u2);
    let tv2 = op.apply(v2);
    let ttu1 = op.apply_t(u1);
    let ttv1 = op.apply_t(v1);
    let f = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| eta + x + z2 / (eta + y)).collect()
    };
    DysonRhs { u1: f(&tv2, &tu2), u2: f(&ttv1, &ttu1), v1: f(&tu2, &tv2), v2: f(&ttu1, &ttv1) }
}

fn relative_residual(x: &[f64], rhs: &[f64]) -> f64 {
    x.iter().zip(rhs).map(|(a, b)| (a * b - 1.0).abs()).fold(0.0, f64::max)
}

/// Solve the vector Dyson system at spectral parameter `|z|` and
/// regularization `η` by damped iteration from `u = v = 1/(η+1)`.
pub fn dyson_solve(profile: &VarianceProfile, z_abs: f64, eta: f64, opts: DysonOptions) -> Result<DysonSolution> {
    if !(eta > 0.0) || !(z_abs > 0.0) {
        return Err(Error::InvalidParameter(format!("need η > 0 and |z| > 0, got η={eta}, |z|={z_abs}")));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidParameter(format!("damping must lie in (0, 1], got {}", opts.damping)));
    }
    let op = ProfileOp::new(profile);
    let (p, n) = (profile.rows(), profile.cols());
    let z2 = z_abs * z_abs;
    let init = 1.0 / (eta + 1.0);
    let (mut u1, mut u2, mut v1, mut v2) = (vec![init; p], vec![init; n], vec![init; p], vec![init; n]);
    let w = opts.damping;
    let mut best: Option<(f64, usize, [Vec<f64>; 4])> = None;
    for it in 0..=opts.max_iter {
        let rhs = dyson_rhs(&op, eta, z2, (&u1, &u2, &v1, &v2));
        let res = relative_residual(&u1, &rhs.u1)
            .max(relative_residual(&u2, &rhs.u2))
            .max(relative_residual(&v1, &rhs.v1))
            .max(relative_residual(&v2, &rhs.v2));
        if best.as_ref().is_none_or(|b| res < b.0) {
            best = Some((res, it, [u1.clone(), u2.clone(), v1.clone(), v2.clone()]));
        }
        if res <= opts.tol {
            return Ok(DysonSolution { eta, z_abs, u1, u2, v1, v2, residual: res, iterations: it });
        }
        if it == opts.max_iter {
            break;
        }
        let step = |x: &mut Vec<f64>, r: &[f64]| {
            x.iter_mut().zip(r).for_each(|(xi, ri)| *xi = (1.0 - w) * *xi + w / ri);
        };
        step(&mut u1, &rhs.u1);
        step(&mut u2, &rhs.u2);
        step(&mut v1, &rhs.v1);
        step(&mut v2, &rhs.v2);
    }
    let (residual, iterations, [u1, u2, v1, v2]) = best.expect("at least one iterate");
    Err(Error::DysonNoConvergence {
        iterations: opts.max_iter,
        residual,
        best: Box::new(DysonSolution { eta, z_abs, u1, u2, v1, v2, residual, iterations }),
    })
}

/// Regularizations used to approximate the `η → 0` limit.
pub const PSEUDOSPECTRUM_GRID: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Whether `|z|` lies in the self-consistent `τ`-pseudospectrum, judged by
/// `max_j(u_j, v_j)/η ≥ 1/τ` at the finest point of [`PSEUDOSPECTRUM_GRID`].
pub fn pseudospectrum_member(profile: &VarianceProfile, z_abs: f64, tau: f64) -> Result<bool> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("τ must be positive, got {tau}")));
    }
    let mut last = None;
    for &eta in &PSEUDOSPECTRUM_GRID {
        last = Some(dyson_solve(profile, z_abs, eta, DysonOptions::default())?);
    }
    let sol = last.expect("grid is non-empty");
    Ok(sol.max_over_eta() >= 1.0 / tau)
}

/// How the kernels `[I - TᵀT/(n²|z|²)]⁻¹` and `[I - TTᵀ/(n²|z|²)]⁻¹` are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelPath {
    /// Sherman–Morrison when `T` has rank one, dense otherwise.
    #[default]
    Auto,
    Dense,
    ShermanMorrison,
}

enum KernelImpl {
    Dense { kn: faer::linalg::solvers::PartialPivLu<f64>, kp: faer::linalg::solvers::PartialPivLu<f64> },
    Rank1 { a: Vec<f64>, b: Vec<f64>, scale: f64 },
}

/// The two resolvent-type kernels at a fixed `|z|`.
pub struct Kernels<'a> {
    t: &'a DenseMatrix,
    imp: KernelImpl,
}

impl<'a> Kernels<'a> {
    pub fn new(profile: &'a VarianceProfile, z_abs: f64, path: KernelPath) -> Result<Self> {
        let t = profile.matrix();
        let (p, n) = (t.rows(), t.cols());
        let nf = n as f64;
        let scale = 1.0 / (nf * nf * z_abs * z_abs);
        let norm = op_norm(t, NORM_TOL)?;
        let radius = norm * norm * scale;
        if !(radius < 1.0) {
            return Err(Error::KernelSingular { radius });
        }
        let factors = profile.rank_one_factors();
        let use_rank1 = match path {
            KernelPath::Auto => factors.is_some(),
            KernelPath::Dense => false,
            KernelPath::ShermanMorrison => {
                if factors.is_none() {
                    return Err(Error::InvalidParameter("Sherman–Morrison path needs a rank-one profile".into()));
                }
                true
            }
        };
        let imp = if use_rank1 {
            let (a, b) = factors.expect("checked above");
            KernelImpl::Rank1 { a, b, scale }
        } else {
            crate::linalg::init_backend();
            let ft = t.to_faer();
            let ttt = ft.transpose() * &ft;
            let tttt = &ft * ft.transpose();
            let kn = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - scale * ttt[(i, j)]);
            let kp = Mat::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.0 } - scale * tttt[(i, j)]);
            KernelImpl::Dense { kn: kn.partial_piv_lu(), kp: kp.partial_piv_lu() }
        };
        Ok(Self { t, imp })
    }

    /// `[I_n - TᵀT/(n²|z|²)]⁻¹ h`.
    pub fn apply_n(&self, h: &[f64]) -> Vec<f64> {
        match &self.imp {
            KernelImpl::Dense { kn, .. } => dense_solve(kn, h),
            // TᵀT = |a|² b bᵀ.
            KernelImpl::Rank1 { a, b, scale } => sherman_morrison(b, dot(a, a) * scale, h),
        }
    }

    /// `[I_p - TTᵀ/(n²|z|²)]⁻¹ g`.
    pub fn apply_p(&self, g: &[f64]) -> Vec<f64> {
        match &self.imp {
            KernelImpl::Dense { kp, .. } => dense_solve(kp, g),
            // TTᵀ = |b|² a aᵀ.
            KernelImpl::Rank1 { a, b, scale } => sherman_morrison(a, dot(b, b) * scale, g),
        }
    }

    fn t(&self) -> &DenseMatrix {
        self.t
    }
}

fn dense_solve(lu: &faer::linalg::solvers::PartialPivLu<f64>, rhs: &[f64]) -> Vec<f64> {
    use faer::linalg::solvers::Solve;
    let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    (0..rhs.len()).map(|i| x[(i, 0)]).collect()
}

/// `(I - κ c cᵀ)⁻¹ h = h + κ (cᵀh) / (1 - κ |c|²) c`.
fn sherman_morrison(c: &[f64], kappa: f64, h: &[f64]) -> Vec<f64> {
    let coef = kappa * dot(c, h) / (1.0 - kappa * dot(c, c));
    h.iter().zip(c).map(|(x, y)| x + coef * y).collect()
}

/// Family of quadratic forms whose limiting covariance is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QfKind {
    /// `√n xᵀ G̲ y` with `x, y ∈ ℝ^p`.
    A,
    /// `√n xᵀ 𝒢̲ y` with `x, y ∈ ℝ^n`.
    B,
    /// Mixed forms with `x ∈ ℝ^p`, `y ∈ ℝ^n`.
    C,
    D,
}

/// The vectors of the two forms whose covariance is computed.
#[derive(Debug, Clone, Copy)]
pub struct QfSlots<'a> {
    pub x_i: &'a [f64],
    pub y_i: &'a [f64],
    pub x_j: &'a [f64],
    pub y_j: &'a [f64],
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Limiting covariance of two quadratic forms of the centered resolvent at
/// spectral parameter `|z|`.
pub fn qf_covariance(
    profile: &VarianceProfile,
    z_abs: f64,
    kind: QfKind,
    slots: QfSlots<'_>,
    path: KernelPath,
) -> Result<f64> {
    let kernels = Kernels::new(profile, z_abs, path)?;
    qf_covariance_with(&kernels, z_abs, kind, slots)
}

/// [`qf_covariance`] with prebuilt kernels.
pub fn qf_covariance_with(kernels: &Kernels<'_>, z_abs: f64, kind: QfKind, s: QfSlots<'_>) -> Result<f64> {
    let t = kernels.t();
    let (p, n) = (t.rows(), t.cols());
    let (lx, ly) = match kind {
        QfKind::A => (p, p),
        QfKind::B => (n, n),
        QfKind::C | QfKind::D => (p, n),
    };
    for (name, v, want) in [("x_i", s.x_i, lx), ("x_j", s.x_j, lx), ("y_i", s.y_i, ly), ("y_j", s.y_j, ly)] {
        if v.len() != want {
            return Err(Error::Dimension(format!("{name} has length {}, expected {want}", v.len())));
        }
    }
    let nf = n as f64;
    let z4 = z_abs.powi(4);
    let a = hadamard(s.x_i, s.x_j);
    let b = hadamard(s.y_i, s.y_j);
    Ok(match kind {
        // Σ_{αβ} a_α b_β T_{α·}ᵀ K_n T_{β·} = (Tᵀa)ᵀ K_n (Tᵀb)
        QfKind::A => {
            let g = t.matvec_transpose(&a);
            let h = t.matvec_transpose(&b);
            dot(&g, &kernels.apply_n(&h)) / (nf * z4)
        }
        // Σ_{αβ} a_α b_β T_{·α}ᵀ K_p T_{·β} = (Ta)ᵀ K_p (Tb)
        QfKind::B => {
            let g = t.matvec(&a);
            let h = t.matvec(&b);
            dot(&g, &kernels.apply_p(&h)) / (nf * z4)
        }
        // Σ_{αβ} a_α b_β (TTᵀ K_p T_{·β})_α = aᵀ TTᵀ K_p T b
        QfKind::C | QfKind::D => {
            let k = kernels.apply_p(&t.matvec(&b));
            let ttk = t.matvec(&t.matvec_transpose(&k));
            dot(&a, &ttk) / (nf * nf * z4)
        }
    })
}

/// Predicted fluctuation of one outlier.
#[derive(Debug, Clone, Serialize)]
pub struct FluctuationSpec {
    /// Variance of the Gaussian component `𝔤`.
    pub var_g: f64,
    /// The three contributions to `var_g` (row kernel, mixed kernel, column kernel).
    pub var_g_terms: [f64; 3],
    /// Variance of `uᵀΣX₁v + vᵀX₂ᵀΣᵀu`.
    pub var_linear: f64,
    /// `var_linear + var_g / n`.
    pub var_total: f64,
    /// `var_total / 4`: the expansion terms evaluated with the unit-norm
    /// eigenvectors `(u; ±v)/√2` of the linearized signal. This is the value
    /// Monte Carlo estimates of `Var(λ_i - d_i)` converge to.
    pub var_outlier: f64,
    /// Spectral parameter `|z| = d_i²` at which the kernels are evaluated.
    pub z_abs_used: f64,
}

/// Fluctuation variance of the outlier near `d_i` (0-based `index`).
pub fn fluct_variance(
    profile: &VarianceProfile,
    sigma: &SigmaSpec,
    signal: &SignalSpec,
    index: usize,
    path: KernelPath,
) -> Result<FluctuationSpec> {
    let d = *signal
        .strengths()
        .get(index)
        .ok_or_else(|| Error::InvalidParameter(format!("signal index {index} out of range")))?;
    let thr = threshold(profile)?;
    if d <= thr {
        return Err(Error::Subcritical { value: d, threshold: thr });
    }
    let gap = signal
        .strengths()
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != index)
        .map(|(_, &dj)| (dj - d).abs())
        .fold(f64::INFINITY, f64::min);
    if gap < DEFAULT_SEPARATION {
        return Err(Error::Separation { gap, required: DEFAULT_SEPARATION });
    }
    let t = profile.matrix();
    if sigma.p() != t.rows() || signal.p() != t.rows() || signal.n() != t.cols() {
        return Err(Error::Dimension("profile, Σ and signal dimensions disagree".into()));
    }
    let n = t.cols() as f64;
    let z_abs = d * d;
    let kernels = Kernels::new(profile, z_abs, path)?;

    let w = sigma.apply_transpose_vec(&signal.u(index));
    let v = signal.v(index);
    // Diagonals of Σᵀu uᵀΣ and v vᵀ.
    let a = hadamard(&w, &w);
    let b = hadamard(&v, &v);

    let ta = t.matvec_transpose(&a);
    let tb = t.matvec(&b);
    let d2 = d * d;
    let first = d2 / (n * n) * dot(&ta, &kernels.apply_n(&ta));
    let kp_tb = kernels.apply_p(&tb);
    let middle = 2.0 / (n * n * n) * dot(&a, &t.matvec(&t.matvec_transpose(&kp_tb)));
    // Transposed profile: columns of T with the TTᵀ kernel.
    let third = d2 / (n * n) * dot(&tb, &kp_tb);
    let outer = n / (d2 * d2);
    let var_g_terms = [outer * first, outer * middle, outer * third];
    let var_g = var_g_terms.iter().sum::<f64>();
    let var_linear = 2.0 * dot(&a, &tb) / n;
    let var_total = var_linear + var_g / n;
    Ok(FluctuationSpec { var_g, var_g_terms, var_linear, var_total, var_outlier: var_total / 4.0, z_abs_used: z_abs })
}

/// How to obtain the null right edge of the singular values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NullEdgeMethod {
    FlatClosedForm,
    MonteCarlo { trials: usize, seed: u64 },
}

/// Right edge of the singular-value bulk of pure noise with profile `T`.
pub fn null_edge(profile: &VarianceProfile, method: NullEdgeMethod) -> Result<f64> {
    let (p, n) = (profile.rows() as f64, profile.cols() as f64);
    match method {
        NullEdgeMethod::FlatClosedForm => {
            let t = profile
                .flat_value()
                .ok_or_else(|| Error::InvalidParameter("closed-form edge needs a constant profile".into()))?;
            Ok(t.sqrt() * (1.0 + (p / n).sqrt()))
        }
        NullEdgeMethod::MonteCarlo { trials, seed } => {
            if trials == 0 {
                return Err(Error::InvalidParameter("need at least one trial".into()));
            }
            let mut tops = (0..trials)
                .into_par_iter()
                .map(|k| {
                    let mut rng = stream_rng(seed, k as u64, 0);
                    let x = sample_noise(profile, &NoiseDistribution::Gaussian, &mut rng)?;
                    Ok(svd_values(&x)?[0])
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(median(&mut tops))
        }
    }
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// `2 (p/n)^{m+1}` for `k = 4m`, zero otherwise.
pub fn trace_moment_limit(p: usize, n: usize, k: usize) -> f64 {
    if k == 0 || k % 4 != 0 {
        return 0.0;
    }
    let m = (k / 4) as i32;
    2.0 * (p as f64 / n as f64).powi(m + 1)
}

/// `det(A + B)` as `Σ_{|I|=|J|} (-1)^{s(I,J)} det A[I,J] det B[Iᶜ,Jᶜ]`, where
/// the sign is that of the permutations listing `I` before `Iᶜ` and `J`
/// before `Jᶜ`.
pub fn det_sum_expansion(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let n = a.rows();
    if n > MAX_EXPANSION_DIM {
        return Err(Error::InvalidParameter(format!(
            "expansion has 4^{n} terms; dimension is capped at {MAX_EXPANSION_DIM}"
        )));
    }
    let full: u32 = if n == 0 { 0 } else { (1u32 << n) - 1 };
    let mut by_size: Vec<Vec<u32>> = vec![Vec::new(); n + 1];
    for mask in 0..=full {
        by_size[mask.count_ones() as usize].push(mask);
    }
    let mut total = 0.0;
    for masks in &by_size {
        for &i in masks {
            let si = split_sign(i, n);
            for &j in masks {
                let sign = si * split_sign(j, n);
                let da = minor(a, i, j);
                if da == 0.0 {
                    continue;
                }
                total += sign * da * minor(b, full & !i, full & !j);
            }
        }
    }
    Ok(total)
}

/// Sign of the permutation listing the set bits of `mask` in order, then the
/// clear bits in order.
fn split_sign(mask: u32, n: usize) -> f64 {
    // Each (clear, set) pair with the clear index first is one inversion.
    let mut inversions = 0u32;
    let mut clear_seen = 0u32;
    for k in 0..n {
        if mask >> k & 1 == 1 {
            inversions += clear_seen;
        } else {
            clear_seen += 1;
        }
    }
    if inversions % 2 == 0 { 1.0 } else { -1.0 }
}

fn minor(m: &DenseMatrix, rows: u32, cols: u32) -> f64 {
    let r: Vec<usize> = (0..m.rows()).filter(|k| rows >> k & 1 == 1).collect();
    let c: Vec<usize> = (0..m.cols()).filter(|k| cols >> k & 1 == 1).collect();
    if r.is_empty() {
        return 1.0;
    }
    let data: Vec<f64> = r.iter().flat_map(|&i| c.iter().map(move |&j| m[(i, j)])).collect();
    elimination_determinant(data, r.len())
}

/// `det(I + 𝔇 Wᵀ (𝒳 - λ)⁻¹ W)` where `W = [w_{+1..+k}, w_{-1..-k}]` and
/// `𝔇 = diag(d, -d)`; it vanishes exactly when `λ` is an eigenvalue of the
/// signal-plus-noise linearization.
pub fn secular_value(noise_lin: &DenseMatrix, signal: &SignalSpec, lambda: Complex64) -> Result<Complex64> {
    let k = signal.rank();
    let dim = signal.p() + signal.n();
    if noise_lin.shape() != (dim, dim) {
        return Err(Error::Dimension(format!(
            "noise linearization is {:?}, signal needs {dim}x{dim}",
            noise_lin.shape()
        )));
    }
    if k == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let mut cols = Vec::with_capacity(2 * k);
    let mut dvec = Vec::with_capacity(2 * k);
    for (sign, flip) in [(1.0, 1.0), (-1.0, -1.0)] {
        for i in 0..k {
            cols.push(signal.linearized_vector(i, sign));
            dvec.push(flip * signal.strengths()[i]);
        }
    }
    let w = DenseMatrix::from_columns(&cols, dim)?;
    let z = solve_shifted(noise_lin, lambda, &w)?;
    let m = 2 * k;
    let mut data = vec![Complex64::new(0.0, 0.0); m * m];
    for a in 0..m {
        for b in 0..m {
            let s: Complex64 = (0..dim).map(|r| z[(r, b)] * cols[a][r]).sum();
            data[a * m + b] = dvec[a] * s + if a == b { 1.0 } else { 0.0 };
        }
    }
    Ok(elimination_determinant(data, m))
}
