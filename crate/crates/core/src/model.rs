//! Model objects: the planted signal, the spiked noise multiplier, the
//! variance profile and the entry distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, svd_values, DenseMatrix};

/// Default cap on the largest signal strength.
pub const DEFAULT_STRENGTH_CAP: f64 = 100.0;

/// Default bound on the operator norm of the inverse noise multiplier.
pub const DEFAULT_INVERSE_BOUND: f64 = 10.0;

/// Gram deviation accepted without repair.
const ORTHO_EXACT: f64 = 1e-10;

/// Gram deviation repaired by re-orthogonalization; anything larger is rejected.
const ORTHO_REPAIRABLE: f64 = 1e-6;

/// Rank-k signal `S = U diag(d) V^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    strengths: Vec<f64>,
    left: DenseMatrix,
    right: DenseMatrix,
}

impl SignalSpec {
    /// Validates with the default strength cap.
    pub fn new(strengths: Vec<f64>, left: DenseMatrix, right: DenseMatrix) -> Result<Self> {
        Self::with_cap(strengths, left, right, DEFAULT_STRENGTH_CAP)
    }

    pub fn with_cap(strengths: Vec<f64>, left: DenseMatrix, right: DenseMatrix, cap: f64) -> Result<Self> {
        let k = strengths.len();
        if left.cols() != k || right.cols() != k {
            return Err(Error::Dimension(format!(
                "{k} strengths but U has {} columns and V has {}",
                left.cols(),
                right.cols()
            )));
        }
        for (i, &d) in strengths.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::InvalidParameter(format!("strength d[{i}] = {d} must be finite and >= 0")));
            }
        }
        if strengths.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter("strengths must be in descending order".into()));
        }
        if let Some(&d1) = strengths.first() {
            if d1 > cap {
                return Err(Error::InvalidParameter(format!("largest strength {d1} exceeds cap {cap}")));
            }
        }
        let left = orthonormal_columns(left, "U")?;
        let right = orthonormal_columns(right, "V")?;
        Ok(Self { strengths, left, right })
    }

    /// Empty signal on a `p x n` grid.
    pub fn none(p: usize, n: usize) -> Self {
        Self { strengths: Vec::new(), left: DenseMatrix::zeros(p, 0), right: DenseMatrix::zeros(n, 0) }
    }

    pub fn rank(&self) -> usize {
        self.strengths.len()
    }

    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    pub fn left(&self) -> &DenseMatrix {
        &self.left
    }

    pub fn right(&self) -> &DenseMatrix {
        &self.right
    }

    pub fn p(&self) -> usize {
        self.left.rows()
    }

    pub fn n(&self) -> usize {
        self.right.rows()
    }

    pub fn u(&self, i: usize) -> Vec<f64> {
        self.left.column(i)
    }

    pub fn v(&self, i: usize) -> Vec<f64> {
        self.right.column(i)
    }

    /// Unit eigenvectors `w_{+i} = (u_i; v_i)/sqrt(2)` and
    /// `w_{-i} = (u_i; -v_i)/sqrt(2)` of the linearized signal, with
    /// eigenvalues `+d_i` and `-d_i`.
    pub fn linearized_vector(&self, i: usize, sign: f64) -> Vec<f64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut w: Vec<f64> = self.u(i).into_iter().map(|x| x * s).collect();
        w.extend(self.v(i).into_iter().map(|x| sign * x * s));
        w
    }
}

/// Noise multiplier `Σ = I + Ξ diag(σ) Θ^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSpec {
    strengths: Vec<f64>,
    left: DenseMatrix,
    right: DenseMatrix,
}

impl SigmaSpec {
    pub fn new(strengths: Vec<f64>, left: DenseMatrix, right: DenseMatrix) -> Result<Self> {
        Self::with_inverse_bound(strengths, left, right, DEFAULT_INVERSE_BOUND)
    }

    pub fn with_inverse_bound(
        strengths: Vec<f64>,
        left: DenseMatrix,
        right: DenseMatrix,
        bound: f64,
    ) -> Result<Self> {
        let r = strengths.len();
        if left.cols() != r || right.cols() != r || left.rows() != right.rows() {
            return Err(Error::Dimension(format!(
                "{r} spikes but Ξ is {:?} and Θ is {:?}",
                left.shape(),
                right.shape()
            )));
        }
        for (j, &s) in strengths.iter().enumerate() {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidParameter(format!("spike σ[{j}] = {s} must be finite and >= 0")));
            }
        }
        if strengths.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter("spike strengths must be in descending order".into()));
        }
        let left = orthonormal_columns(left, "Ξ")?;
        let right = orthonormal_columns(right, "Θ")?;
        let spec = Self { strengths, left, right };
        let inv = spec.inverse_norm();
        if !(inv <= bound) {
            return Err(Error::InvalidParameter(format!(
                "noise multiplier has ||Σ^-1|| = {inv:.4}, above the bound {bound}"
            )));
        }
        Ok(spec)
    }

    pub fn identity(p: usize) -> Self {
        Self { strengths: Vec::new(), left: DenseMatrix::zeros(p, 0), right: DenseMatrix::zeros(p, 0) }
    }

    /// Diagonal spikes on the first coordinates: `ξ_j = θ_j = e_j`.
    pub fn standard_basis(p: usize, strengths: Vec<f64>) -> Result<Self> {
        let r = strengths.len();
        if r > p {
            return Err(Error::Dimension(format!("{r} spikes do not fit in dimension {p}")));
        }
        let e = DenseMatrix::from_fn(p, r, |i, j| if i == j { 1.0 } else { 0.0 });
        Self::new(strengths, e.clone(), e)
    }

    pub fn rank(&self) -> usize {
        self.strengths.len()
    }

    pub fn p(&self) -> usize {
        self.left.rows()
    }

    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    pub fn left(&self) -> &DenseMatrix {
        &self.left
    }

    pub fn right(&self) -> &DenseMatrix {
        &self.right
    }

    /// `Σ x` for a vector of length `p`.
    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let coef: Vec<f64> = (0..self.rank())
            .map(|j| self.strengths[j] * dot(&self.right.column(j), x))
            .collect();
        let mut out = x.to_vec();
        for (j, c) in coef.iter().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += c * self.left[(i, j)];
            }
        }
        out
    }

    /// `Σ^T x` for a vector of length `p`.
    pub fn apply_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        let coef: Vec<f64> = (0..self.rank())
            .map(|j| self.strengths[j] * dot(&self.left.column(j), x))
            .collect();
        let mut out = x.to_vec();
        for (j, c) in coef.iter().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += c * self.right[(i, j)];
            }
        }
        out
    }

    /// `Σ X` without forming `Σ`: `X + Ξ diag(σ) (Θ^T X)`.
    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.rows() != self.p() {
            return Err(Error::Dimension(format!(
                "Σ is {p}x{p} but X has {} rows",
                x.rows(),
                p = self.p()
            )));
        }
        let mut out = x.clone();
        let cols = x.cols();
        for j in 0..self.rank() {
            let theta = self.right.column(j);
            let mut coef = vec![0.0; cols];
            for (i, &t) in theta.iter().enumerate() {
                if t == 0.0 {
                    continue;
                }
                for (c, &xv) in coef.iter_mut().zip(x.row(i)) {
                    *c += t * xv;
                }
            }
            let s = self.strengths[j];
            for i in 0..self.p() {
                let xi = self.left[(i, j)] * s;
                if xi == 0.0 {
                    continue;
                }
                let row = &mut out.as_mut_slice()[i * cols..(i + 1) * cols];
                for (o, c) in row.iter_mut().zip(&coef) {
                    *o += xi * c;
                }
            }
        }
        Ok(out)
    }

    /// Singular values of `Σ` that differ from 1, computed on the span of
    /// `[Ξ Θ]`, followed by 1 when that span is a proper subspace.
    fn nontrivial_singular_values(&self) -> Vec<f64> {
        let p = self.p();
        let r = self.rank();
        if r == 0 {
            return vec![1.0];
        }
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for j in 0..r {
            for m in [&self.left, &self.right] {
                let mut c = m.column(j);
                for _ in 0..2 {
                    for b in &basis {
                        let proj = dot(b, &c);
                        c.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
                    }
                }
                let nrm = dot(&c, &c).sqrt();
                if nrm > 1e-12 {
                    c.iter_mut().for_each(|x| *x /= nrm);
                    basis.push(c);
                }
            }
        }
        let q = basis.len();
        // Restriction Q^T Σ Q = I + (Q^T Ξ) diag(σ) (Q^T Θ)^T.
        let qx = DenseMatrix::from_fn(q, r, |a, j| dot(&basis[a], &self.left.column(j)));
        let qt = DenseMatrix::from_fn(q, r, |a, j| dot(&basis[a], &self.right.column(j)));
        let small = DenseMatrix::from_fn(q, q, |a, b| {
            let mut v = if a == b { 1.0 } else { 0.0 };
            for j in 0..r {
                v += qx[(a, j)] * self.strengths[j] * qt[(b, j)];
            }
            v
        });
        let mut s = svd_values(&small).unwrap_or_else(|_| vec![f64::NAN]);
        if q < p {
            s.push(1.0);
        }
        s
    }

    /// `||Σ||_op`.
    pub fn sigma_max(&self) -> f64 {
        self.nontrivial_singular_values().into_iter().fold(0.0, f64::max)
    }

    /// `||Σ^{-1}||_op`, infinite when `Σ` is singular.
    pub fn inverse_norm(&self) -> f64 {
        let smin = self.nontrivial_singular_values().into_iter().fold(f64::INFINITY, f64::min);
        if smin > 0.0 { 1.0 / smin } else { f64::INFINITY }
    }

    /// Warning text when the largest spike exceeds `n^{1/4}`.
    pub fn spike_warning(&self, n: usize) -> Option<String> {
        let smax = self.strengths.first().copied().unwrap_or(0.0);
        let limit = (n as f64).powf(0.25);
        (smax > limit).then(|| {
            format!("largest spike {smax} exceeds n^(1/4) = {limit:.3}; first-order error bounds degrade")
        })
    }
}

/// Dense `p x p` matrix of `Σ`.
pub fn sigma_matrix(spec: &SigmaSpec, p: usize) -> Result<DenseMatrix> {
    if spec.p() != p {
        return Err(Error::Dimension(format!("Σ spec has dimension {}, requested {p}", spec.p())));
    }
    let mut m = DenseMatrix::identity(p);
    for j in 0..spec.rank() {
        let s = spec.strengths[j];
        for a in 0..p {
            let xa = spec.left[(a, j)] * s;
            if xa == 0.0 {
                continue;
            }
            for b in 0..p {
                m[(a, b)] += xa * spec.right[(b, j)];
            }
        }
    }
    Ok(m)
}

/// Dense `p x n` signal matrix `U diag(d) V^T`.
pub fn signal_matrix(spec: &SignalSpec) -> DenseMatrix {
    let (p, n) = (spec.p(), spec.n());
    let mut s = DenseMatrix::zeros(p, n);
    for (i, &d) in spec.strengths.iter().enumerate() {
        let v = spec.right.column(i);
        for a in 0..p {
            let ua = spec.left[(a, i)] * d;
            if ua == 0.0 {
                continue;
            }
            for (b, &vb) in v.iter().enumerate() {
                s[(a, b)] += ua * vb;
            }
        }
    }
    s
}

/// Planting `u_i = e_{i+2}`, `v_i = e_{i+3}` (1-based), i.e. `S` has entries
/// `d_i` at positions `(i+2, i+3)`.
pub fn standard_basis_signal(p: usize, n: usize, d: &[f64]) -> Result<SignalSpec> {
    let k = d.len();
    if k + 6 > p.min(n) {
        return Err(Error::Dimension(format!(
            "{k} signals need min(p, n) >= {}, got p={p}, n={n}",
            k + 6
        )));
    }
    let u = DenseMatrix::from_fn(p, k, |a, i| if a == i + 2 { 1.0 } else { 0.0 });
    let v = DenseMatrix::from_fn(n, k, |b, i| if b == i + 3 { 1.0 } else { 0.0 });
    SignalSpec::new(d.to_vec(), u, v)
}

fn gram_deviation(m: &DenseMatrix) -> f64 {
    let k = m.cols();
    let cols: Vec<Vec<f64>> = (0..k).map(|j| m.column(j)).collect();
    let mut dev: f64 = 0.0;
    for a in 0..k {
        for b in a..k {
            let g = dot(&cols[a], &cols[b]);
            let target = if a == b { 1.0 } else { 0.0 };
            dev = dev.max((g - target).abs());
        }
    }
    dev
}

/// Accept, repair or reject a matrix whose columns should be orthonormal.
fn orthonormal_columns(m: DenseMatrix, what: &'static str) -> Result<DenseMatrix> {
    if let Some((row, col)) = m.find_non_finite() {
        return Err(Error::NonFinite { row, col });
    }
    let dev = gram_deviation(&m);
    if dev <= ORTHO_EXACT {
        return Ok(m);
    }
    if dev > ORTHO_REPAIRABLE {
        return Err(Error::NotOrthonormal { what, deviation: dev });
    }
    let rows = m.rows();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m.cols());
    for j in 0..m.cols() {
        let mut c = m.column(j);
        for _ in 0..2 {
            for b in &cols {
                let proj = dot(b, &c);
                c.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let nrm = dot(&c, &c).sqrt();
        c.iter_mut().for_each(|x| *x /= nrm);
        cols.push(c);
    }
    DenseMatrix::from_columns(&cols, rows)
}

/// Per-entry variance profile: `Var(x_ij) = t_ij / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    t: DenseMatrix,
    t_lo: f64,
    t_hi: f64,
}

impl VarianceProfile {
    pub fn new(t: DenseMatrix) -> Result<Self> {
        t.ensure_finite()?;
        if t.rows() == 0 || t.cols() == 0 {
            return Err(Error::Dimension("variance profile must be non-empty".into()));
        }
        let t_lo = t.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
        let t_hi = t.as_slice().iter().copied().fold(0.0, f64::max);
        if !(t_lo > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "variance profile entries must be positive, minimum is {t_lo}"
            )));
        }
        Ok(Self { t, t_lo, t_hi })
    }

    pub fn ones(p: usize, n: usize) -> Self {
        Self::constant(p, n, 1.0).expect("unit profile is valid")
    }

    pub fn constant(p: usize, n: usize, t: f64) -> Result<Self> {
        Self::new(DenseMatrix::from_fn(p, n, |_, _| t))
    }

    /// Rows grouped into consecutive blocks `(count, value)`.
    pub fn row_blocks(n: usize, blocks: &[(usize, f64)]) -> Result<Self> {
        let p: usize = blocks.iter().map(|b| b.0).sum();
        let mut values = Vec::with_capacity(p);
        for &(count, value) in blocks {
            values.extend(std::iter::repeat_n(value, count));
        }
        Self::new(DenseMatrix::from_fn(p, n, |i, _| values[i]))
    }

    /// Two-level profile: first half of the rows at 1, second half at 1.5.
    pub fn two_level(p: usize, n: usize) -> Result<Self> {
        Self::row_blocks(n, &[(p / 2, 1.0), (p - p / 2, 1.5)])
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.t
    }

    pub fn rows(&self) -> usize {
        self.t.rows()
    }

    pub fn cols(&self) -> usize {
        self.t.cols()
    }

    pub fn t_lo(&self) -> f64 {
        self.t_lo
    }

    pub fn t_hi(&self) -> f64 {
        self.t_hi
    }

    /// The common value when every entry is equal.
    pub fn flat_value(&self) -> Option<f64> {
        (self.t_lo == self.t_hi).then_some(self.t_lo)
    }

    /// Factors `(a, b)` with `T = a b^T` when the profile has rank one.
    pub fn rank_one_factors(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let t00 = self.t[(0, 0)];
        let a = self.t.column(0);
        let b: Vec<f64> = self.t.row(0).iter().map(|x| x / t00).collect();
        for i in 0..self.rows() {
            for (j, &bj) in b.iter().enumerate() {
                let want = a[i] * bj;
                if (self.t[(i, j)] - want).abs() > 1e-12 * want.abs().max(1.0) {
                    return None;
                }
            }
        }
        Some((a, b))
    }

    pub fn scaled(&self, gamma: f64) -> Result<Self> {
        Self::new(self.t.scale(gamma))
    }
}

/// Entry law before scaling to variance `t_ij / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    Gaussian,
    StudentT(f64),
    Rademacher,
}

impl NoiseDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseDistribution::StudentT(nu) if !(nu > 2.0) || !nu.is_finite() => Err(Error::InvalidParameter(
                format!("Student-t degrees of freedom must exceed 2 for finite variance, got {nu}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            NoiseDistribution::Gaussian => "gaussian".into(),
            NoiseDistribution::StudentT(nu) => format!("student_t({nu})"),
            NoiseDistribution::Rademacher => "rademacher".into(),
        }
    }
}

/// Everything needed to draw trials of the two-sample model.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub p: usize,
    pub n: usize,
    pub signal: SignalSpec,
    pub sigma: SigmaSpec,
    pub profile: VarianceProfile,
    pub distribution: NoiseDistribution,
    pub trials: usize,
    pub seed: u64,
    /// Optional truncation level `M` applied to each noise matrix.
    pub truncation: Option<f64>,
}

impl ExperimentConfig {
    /// Gaussian, unit profile, no signal, no spikes.
    pub fn null(p: usize, n: usize, trials: usize, seed: u64) -> Self {
        Self {
            p,
            n,
            signal: SignalSpec::none(p, n),
            sigma: SigmaSpec::identity(p),
            profile: VarianceProfile::ones(p, n),
            distribution: NoiseDistribution::Gaussian,
            trials,
            seed,
            truncation: None,
        }
    }

    /// Check dimensional consistency; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let (p, n) = (self.p, self.n);
        if p == 0 || n == 0 {
            return Err(Error::Dimension(format!("p and n must be positive, got {p}x{n}")));
        }
        if self.signal.p() != p || self.signal.n() != n {
            return Err(Error::Dimension(format!(
                "signal vectors are {}x{}, expected {p}x{n}",
                self.signal.p(),
                self.signal.n()
            )));
        }
        if self.sigma.p() != p {
            return Err(Error::Dimension(format!("Σ has dimension {}, expected {p}", self.sigma.p())));
        }
        if self.profile.rows() != p || self.profile.cols() != n {
            return Err(Error::Dimension(format!(
                "profile is {}x{}, expected {p}x{n}",
                self.profile.rows(),
                self.profile.cols()
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if let Some(m) = self.truncation {
            if !(m > 0.0) {
                return Err(Error::InvalidParameter(format!("truncation level must be positive, got {m}")));
            }
        }
        self.distribution.validate()?;
        Ok(self.sigma.spike_warning(n).into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::op_norm;
    use proptest::prelude::*;

    #[test]
    fn sigma_without_spikes_is_identity() {
        let s = SigmaSpec::identity(5);
        assert_eq!(sigma_matrix(&s, 5).unwrap(), DenseMatrix::identity(5));
        assert_eq!(s.sigma_max(), 1.0);
    }

    #[test]
    fn diagonal_spikes() {
        let s = SigmaSpec::standard_basis(6, vec![3.0, 2.0]).unwrap();
        let m = sigma_matrix(&s, 6).unwrap();
        let diag: Vec<f64> = (0..6).map(|i| m[(i, i)]).collect();
        assert_eq!(diag, vec![4.0, 3.0, 1.0, 1.0, 1.0, 1.0]);
        assert!((s.sigma_max() - 4.0).abs() < 1e-12);
        assert!((s.inverse_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn off_diagonal_spike_norm_matches_power_iteration() {
        let p = 7;
        let xi = DenseMatrix::from_fn(p, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let theta = DenseMatrix::from_fn(p, 1, |i, _| if i == 1 { 1.0 } else { 0.0 });
        let s = SigmaSpec::new(vec![2.0], xi, theta).unwrap();
        let m = sigma_matrix(&s, p).unwrap();
        assert_eq!(m[(0, 1)], 2.0);
        let oracle = op_norm(&m, 1e-15).unwrap();
        assert!((s.sigma_max() - oracle).abs() < 1e-9);
        // [[1,2],[0,1]] has norm 1 + sqrt(2).
        assert!((oracle - (1.0 + 2f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn apply_matches_dense_product() {
        let p = 6;
        let xi = DenseMatrix::from_fn(p, 1, |i, _| if i == 0 { 0.6 } else if i == 3 { 0.8 } else { 0.0 });
        let theta = DenseMatrix::from_fn(p, 1, |i, _| if i == 2 { 1.0 } else { 0.0 });
        let s = SigmaSpec::new(vec![1.5], xi, theta).unwrap();
        let x = DenseMatrix::from_fn(p, 4, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.7);
        let fast = s.apply(&x).unwrap();
        let dense = sigma_matrix(&s, p).unwrap().matmul(&x).unwrap();
        assert!(fast.sub(&dense).unwrap().max_abs() < 1e-14);
        let v: Vec<f64> = (0..p).map(|i| i as f64 - 2.0).collect();
        let st = sigma_matrix(&s, p).unwrap().transpose().matvec(&v);
        let ours = s.apply_transpose_vec(&v);
        assert!(st.iter().zip(&ours).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn singular_sigma_rejected() {
        let e = DenseMatrix::from_fn(4, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let err = SigmaSpec::new(vec![0.0], e.clone(), e.scale(-1.0)).unwrap();
        assert_eq!(err.inverse_norm(), 1.0);
        // Σ = I - 0.95 e1 e1^T has ||Σ^-1|| = 20 > 10.
        let bad = SigmaSpec::new(vec![0.95], e.clone(), e.scale(-1.0));
        assert!(matches!(bad, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn spike_warning_threshold() {
        let s = SigmaSpec::standard_basis(10, vec![3.0, 2.0]).unwrap();
        assert!(s.spike_warning(2000).is_none());
        assert!(s.spike_warning(50).is_some());
    }

    #[test]
    fn empty_signal_is_zero() {
        let s = SignalSpec::none(4, 5);
        assert_eq!(signal_matrix(&s), DenseMatrix::zeros(4, 5));
    }

    #[test]
    fn standard_planting_positions() {
        let s = standard_basis_signal(10, 12, &[1.5, 1.2, 0.5]).unwrap();
        let m = signal_matrix(&s);
        let mut nz = Vec::new();
        for i in 0..10 {
            for j in 0..12 {
                if m[(i, j)] != 0.0 {
                    nz.push((i + 1, j + 1, m[(i, j)]));
                }
            }
        }
        assert_eq!(nz, vec![(3, 4, 1.5), (4, 5, 1.2), (5, 6, 0.5)]);
        assert!(gram_deviation(s.left()) == 0.0 && gram_deviation(s.right()) == 0.0);
    }

    #[test]
    fn single_signal_planting() {
        let s = standard_basis_signal(8, 9, &[2.0]).unwrap();
        assert_eq!(s.rank(), 1);
        assert_eq!(signal_matrix(&s)[(2, 3)], 2.0);
    }

    #[test]
    fn standard_planting_needs_room() {
        assert!(matches!(standard_basis_signal(8, 20, &[1.0, 1.0, 1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn signal_singular_values_round_trip() {
        let s = standard_basis_signal(20, 30, &[3.0, 2.0, 0.5]).unwrap();
        let sv = svd_values(&signal_matrix(&s)).unwrap();
        for (a, b) in sv.iter().zip([3.0, 2.0, 0.5]) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(sv[3..].iter().all(|&x| x < 1e-10));
    }

    #[test]
    fn orthonormality_repair_and_rejection() {
        let mut u = DenseMatrix::from_fn(5, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        u[(1, 0)] = 1e-8;
        let s = SignalSpec::new(vec![1.0, 0.5], u.clone(), DenseMatrix::from_fn(6, 2, |i, j| if i == j { 1.0 } else { 0.0 }))
            .unwrap();
        assert!(gram_deviation(s.left()) < 1e-12);
        u[(1, 0)] = 1e-3;
        let bad = SignalSpec::new(vec![1.0, 0.5], u, DenseMatrix::from_fn(6, 2, |i, j| if i == j { 1.0 } else { 0.0 }));
        assert!(matches!(bad, Err(Error::NotOrthonormal { what: "U", .. })));
    }

    #[test]
    fn strengths_validated() {
        let u = DenseMatrix::from_fn(5, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let v = DenseMatrix::from_fn(5, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        assert!(SignalSpec::new(vec![0.5, 1.0], u.clone(), v.clone()).is_err());
        assert!(SignalSpec::new(vec![101.0, 1.0], u.clone(), v.clone()).is_err());
        assert!(SignalSpec::with_cap(vec![101.0, 1.0], u.clone(), v.clone(), 200.0).is_ok());
        assert!(SignalSpec::new(vec![1.0, -0.1], u, v).is_err());
    }

    #[test]
    fn profile_validation_and_structure() {
        assert!(VarianceProfile::constant(3, 4, 0.0).is_err());
        let t2 = VarianceProfile::two_level(800, 2000).unwrap();
        assert_eq!((t2.t_lo(), t2.t_hi()), (1.0, 1.5));
        assert!(t2.flat_value().is_none());
        let (a, b) = t2.rank_one_factors().unwrap();
        assert_eq!(a[0], 1.0);
        assert_eq!(a[799], 1.5);
        assert!(b.iter().all(|&x| x == 1.0));
        assert_eq!(VarianceProfile::ones(3, 4).flat_value(), Some(1.0));
        let mut t = DenseMatrix::from_fn(2, 2, |_, _| 1.0);
        t[(1, 1)] = 2.0;
        assert!(VarianceProfile::new(t).unwrap().rank_one_factors().is_none());
    }

    #[test]
    fn student_t_requires_finite_variance() {
        assert!(NoiseDistribution::StudentT(2.0).validate().is_err());
        assert!(NoiseDistribution::StudentT(2.2).validate().is_ok());
    }

    #[test]
    fn config_dimension_checks() {
        let mut cfg = ExperimentConfig::null(10, 20, 1, 0);
        assert!(cfg.validate().unwrap().is_empty());
        cfg.profile = VarianceProfile::ones(10, 21);
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::null(10, 20, 1, 0);
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn accepted_sigma_has_bounded_inverse(s1 in 0.0f64..5.0, s2 in 0.0f64..5.0, off in any::<bool>()) {
            let (a, b) = if s1 >= s2 { (s1, s2) } else { (s2, s1) };
            let p = 6;
            let xi = DenseMatrix::from_fn(p, 2, |i, j| if i == j { 1.0 } else { 0.0 });
            let theta = if off {
                DenseMatrix::from_fn(p, 2, |i, j| if i == j + 2 { 1.0 } else { 0.0 })
            } else {
                xi.clone()
            };
            if let Ok(spec) = SigmaSpec::new(vec![a, b], xi, theta) {
                let m = sigma_matrix(&spec, p).unwrap();
                let sv = svd_values(&m).unwrap();
                prop_assert!(1.0 / sv[p - 1] <= DEFAULT_INVERSE_BOUND + 1e-9);
                prop_assert!((sv[0] - spec.sigma_max()).abs() < 1e-9);
            }
        }
    }
}
