//! Eigenvalues of the linearization `Y = [[0, H1], [H2^T, 0]]`.
//!
//! The nonzero spectrum of `Y` is `{±λ_j}` with `λ_j^2` running over the
//! eigenvalues of `H1 H2^T`, plus `|n - p|` zeros. Only the representative
//! with argument in `(-π/2, π/2]` is stored.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{biorthogonal_basis, init_backend, magnitude_order, svd_values, DenseMatrix};

/// Biorthogonal eigenvector data for one stored eigenvalue.
#[derive(Debug, Clone)]
pub struct VectorPair {
    /// Right vector of `Y` (length `p + n`, unit norm).
    pub right: Vec<Complex64>,
    /// Left vector of `Y`, scaled so that `left^* right = 1`.
    pub left: Vec<Complex64>,
    /// Indices sharing one invariant-subspace basis with this one.
    pub cluster: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub p: usize,
    pub n: usize,
    pub lambdas: Vec<Complex64>,
    pub zero_multiplicity: usize,
    /// The full spectrum is `{±λ_j} ∪ {0 repeated zero_multiplicity times}`.
    pub pairs_negated: bool,
    /// One entry per leading index for which vectors were requested.
    pub vectors: Vec<VectorPair>,
}

impl SpectrumResult {
    /// Wrap an already ordered list of stored eigenvalues.
    pub fn from_lambdas(p: usize, n: usize, mut lambdas: Vec<Complex64>) -> Self {
        lambdas.iter_mut().for_each(|l| *l = canonical_branch(*l));
        let order = magnitude_order(&lambdas);
        let lambdas = order.into_iter().map(|i| lambdas[i]).collect();
        Self { p, n, lambdas, zero_multiplicity: p.abs_diff(n), pairs_negated: true, vectors: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Dimension of the linearization.
    pub fn dim(&self) -> usize {
        self.p + self.n
    }

    /// The full multiset of eigenvalues of `Y`.
    pub fn full_spectrum(&self) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = self.lambdas.iter().flat_map(|&l| [l, -l]).collect();
        out.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), self.zero_multiplicity));
        out
    }
}

/// Square root with `Re ≥ 0`; purely imaginary roots get the `+i` sign.
pub fn principal_root(mu: Complex64) -> Complex64 {
    if mu.im == 0.0 {
        return if mu.re >= 0.0 {
            Complex64::new(mu.re.sqrt(), 0.0)
        } else {
            Complex64::new(0.0, (-mu.re).sqrt())
        };
    }
    canonical_branch(mu.sqrt())
}

/// Of `±λ`, the member with argument in `(-π/2, π/2]`.
pub fn canonical_branch(l: Complex64) -> Complex64 {
    if l.re < 0.0 || (l.re == 0.0 && l.im < 0.0) {
        -l
    } else {
        l
    }
}

/// `[[0, H1], [H2^T, 0]]`.
pub fn build_linearization(h1: &DenseMatrix, h2: &DenseMatrix) -> Result<DenseMatrix> {
    if h1.shape() != h2.shape() {
        return Err(Error::Dimension(format!(
            "H1 is {:?} but H2 is {:?}",
            h1.shape(),
            h2.shape()
        )));
    }
    let (p, n) = h1.shape();
    Ok(DenseMatrix::from_fn(p + n, p + n, |i, j| {
        if i < p && j >= p {
            h1[(i, j - p)]
        } else if i >= p && j < p {
            h2[(j, i - p)]
        } else {
            0.0
        }
    }))
}

/// Stored eigenvalues of the linearization of `(H1, H2)`, with biorthogonal
/// vectors for the leading `want_vectors` indices.
pub fn eigs_asym(h1: &DenseMatrix, h2: &DenseMatrix, want_vectors: usize) -> Result<SpectrumResult> {
    if h1.shape() != h2.shape() {
        return Err(Error::Dimension(format!(
            "H1 is {:?} but H2 is {:?}",
            h1.shape(),
            h2.shape()
        )));
    }
    h1.ensure_finite()?;
    h2.ensure_finite()?;
    init_backend();
    let (p, n) = h1.shape();
    let (f1, f2) = (h1.to_faer(), h2.to_faer());
    // Nonzero eigenvalues of H1 H2^T and H2^T H1 coincide; use the smaller one.
    let product = if p <= n { &f1 * f2.transpose() } else { f2.transpose() * &f1 };
    let mus = product
        .eigenvalues()
        .map_err(|_| Error::NoConvergence { routine: "eigenvalues", iterations: 30 * p.min(n) })?;
    let lambdas: Vec<Complex64> = mus.into_iter().map(principal_root).collect();
    let mut result = SpectrumResult::from_lambdas(p, n, lambdas);
    if want_vectors > 0 {
        let y = build_linearization(h1, h2)?;
        result.vectors = leading_vectors(&y, &result.lambdas, want_vectors)?;
    }
    Ok(result)
}

fn leading_vectors(y: &DenseMatrix, lambdas: &[Complex64], m: usize) -> Result<Vec<VectorPair>> {
    let m = m.min(lambdas.len());
    let scale = lambdas.first().map_or(1.0, |l| l.norm()).max(1.0);
    let tol = 1e-8 * scale;
    let mut out = Vec::with_capacity(m);
    let mut i = 0;
    while i < m {
        let mut j = i + 1;
        while j < lambdas.len() && (lambdas[j] - lambdas[i]).norm() < tol {
            j += 1;
        }
        let members: Vec<usize> = (i..j).collect();
        let center = members.iter().map(|&k| lambdas[k]).sum::<Complex64>() / members.len() as f64;
        let (r, l) = biorthogonal_basis(y, center, members.len())?;
        for (col, _) in members.iter().enumerate() {
            if out.len() < m.max(j) {
                out.push(VectorPair { right: r.column(col), left: l.column(col), cluster: members.clone() });
            }
        }
        i = j;
    }
    Ok(out)
}

/// Singular values of one observation.
pub fn singular_baseline(h: &DenseMatrix) -> Result<Vec<f64>> {
    svd_values(h)
}

/// `Σ_{j ∈ cluster} (a^T w̃_j)(ŵ_j^* a)`.
pub fn eigvec_projection(result: &SpectrumResult, cluster: &[usize], a: &[f64]) -> Result<Complex64> {
    let mut total = Complex64::new(0.0, 0.0);
    for &j in cluster {
        let pair = result.vectors.get(j).ok_or(Error::MissingEigenvectors(j))?;
        if pair.right.len() != a.len() {
            return Err(Error::Dimension(format!(
                "direction has length {}, eigenvectors have length {}",
                a.len(),
                pair.right.len()
            )));
        }
        let norm: Complex64 = pair.left.iter().zip(&pair.right).map(|(l, r)| l.conj() * r).sum();
        if norm.norm() < 1e-10 {
            return Err(Error::DegenerateNormalization(norm.norm()));
        }
        let ar: Complex64 = a.iter().zip(&pair.right).map(|(x, r)| r * x).sum();
        let la: Complex64 = pair.left.iter().zip(a).map(|(l, x)| l.conj() * x).sum();
        total += ar * la;
    }
    Ok(total)
}

/// Estimated and, when known, true projection of `a` onto a cluster.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionEstimate {
    pub index_set: Vec<usize>,
    pub direction: Vec<f64>,
    pub value: Complex64,
    pub reference: Option<f64>,
}

/// Projection estimate for a unit direction `a`; `truth` holds the
/// eigenvectors of the noiseless linearization for the same cluster.
pub fn projection_estimate(
    result: &SpectrumResult,
    cluster: &[usize],
    a: &[f64],
    truth: Option<&[Vec<f64>]>,
) -> Result<ProjectionEstimate> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (na - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!("direction must have unit norm, got {na}")));
    }
    let value = eigvec_projection(result, cluster, a)?;
    let reference = truth.map(|ws| {
        ws.iter()
            .map(|w| w.iter().zip(a).map(|(x, y)| x * y).sum::<f64>().powi(2))
            .sum()
    });
    Ok(ProjectionEstimate { index_set: cluster.to_vec(), direction: a.to_vec(), value, reference })
}

/// Write `index,re,im,magnitude,arg[,flagged]` rows, 1-based index.
pub fn write_spectrum_csv<W: Write>(w: &mut W, lambdas: &[Complex64], flagged: Option<&[bool]>) -> Result<()> {
    match flagged {
        Some(_) => writeln!(w, "index,re,im,magnitude,arg,flagged")?,
        None => writeln!(w, "index,re,im,magnitude,arg")?,
    }
    for (i, l) in lambdas.iter().enumerate() {
        write!(w, "{},{},{},{},{}", i + 1, l.re, l.im, l.norm(), l.arg())?;
        match flagged {
            Some(f) => writeln!(w, ",{}", u8::from(f.get(i).copied().unwrap_or(false)))?,
            None => writeln!(w)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eig_general;
    use crate::model::{signal_matrix, standard_basis_signal};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / (cols as f64).sqrt();
        DenseMatrix::from_fn(rows, cols, |_, _| s * Distribution::<f64>::sample(&StandardNormal, &mut rng))
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn nearest(set: &[Complex64], z: Complex64) -> f64 {
        set.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn scalar_linearization() {
        let h1 = DenseMatrix::from_rows(&[vec![2.0]]).unwrap();
        let h2 = DenseMatrix::from_rows(&[vec![8.0]]).unwrap();
        let y = build_linearization(&h1, &h2).unwrap();
        assert_eq!(y, DenseMatrix::from_rows(&[vec![0.0, 2.0], vec![8.0, 0.0]]).unwrap());
        let vals: Vec<f64> = eig_general(&y, false).unwrap().iter().map(|p| p.value.re).collect();
        assert!((vals[0].abs() - 4.0).abs() < 1e-12 && (vals[0] + vals[1]).abs() < 1e-12);
    }

    #[test]
    fn linearization_blocks() {
        let h1 = gaussian(3, 5, 1);
        let h2 = gaussian(3, 5, 2);
        let y = build_linearization(&h1, &h2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(y[(i, j)], 0.0);
            }
        }
        for i in 3..8 {
            for j in 3..8 {
                assert_eq!(y[(i, j)], 0.0);
            }
        }
        assert_eq!(y[(1, 4)], h1[(1, 1)]);
        assert_eq!(y[(4, 1)], h2[(1, 1)]);
        assert!(build_linearization(&h1, &gaussian(3, 4, 3)).is_err());
    }

    #[test]
    fn diagonal_signal_gives_strength() {
        let mut h = DenseMatrix::zeros(4, 6);
        h[(0, 0)] = 1.7;
        let r = eigs_asym(&h, &h, 0).unwrap();
        assert!((r.lambdas[0] - c(1.7, 0.0)).norm() < 1e-12);
        assert_eq!(r.zero_multiplicity, 2);
        assert_eq!(r.len(), 4);
    }

    #[test]
    fn negative_product_eigenvalue_maps_to_plus_i() {
        assert_eq!(principal_root(c(-4.0, 0.0)), c(0.0, 2.0));
        assert_eq!(principal_root(c(-4.0, -0.0)), c(0.0, 2.0));
        let h1 = DenseMatrix::from_rows(&[vec![2.0]]).unwrap();
        let h2 = DenseMatrix::from_rows(&[vec![-2.0]]).unwrap();
        let r = eigs_asym(&h1, &h2, 0).unwrap();
        assert_eq!(r.lambdas, vec![c(0.0, 2.0)]);
    }

    #[test]
    fn product_and_linearization_agree_on_5x8() {
        let h1 = gaussian(5, 8, 10);
        let h2 = gaussian(5, 8, 11);
        let r = eigs_asym(&h1, &h2, 0).unwrap();
        let prod = h1.matmul_transpose(&h2).unwrap();
        let mus: Vec<Complex64> = eig_general(&prod, false).unwrap().iter().map(|p| p.value).collect();
        for l in &r.lambdas {
            assert!(nearest(&mus, l * l) < 1e-9);
        }
        let y = build_linearization(&h1, &h2).unwrap();
        let full: Vec<Complex64> = eig_general(&y, false).unwrap().iter().map(|p| p.value).collect();
        for l in r.full_spectrum() {
            assert!(nearest(&full, l) < 1e-7, "{l}");
        }
        let zeros = full.iter().filter(|z| z.norm() < 1e-6).count();
        assert_eq!(zeros, 3);
    }

    #[test]
    fn ordering_convention() {
        let h1 = gaussian(20, 30, 4);
        let h2 = gaussian(20, 30, 5);
        let r = eigs_asym(&h1, &h2, 0).unwrap();
        for w in r.lambdas.windows(2) {
            assert!(w[0].norm() >= w[1].norm() - 1e-12);
        }
        for (i, l) in r.lambdas.iter().enumerate() {
            let a = l.arg();
            assert!(a > -std::f64::consts::FRAC_PI_2 && a <= std::f64::consts::FRAC_PI_2);
            if l.im > 0.0 && l.re > 0.0 {
                assert!((r.lambdas[i + 1] - l.conj()).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn noiseless_projection_is_exact() {
        let sig = standard_basis_signal(10, 14, &[2.0, 1.0]).unwrap();
        let s = signal_matrix(&sig);
        let r = eigs_asym(&s, &s, 2).unwrap();
        assert!((r.lambdas[0] - c(2.0, 0.0)).norm() < 1e-12);
        let w1 = sig.linearized_vector(0, 1.0);
        let p = eigvec_projection(&r, &[0], &w1).unwrap();
        assert!((p - c(1.0, 0.0)).norm() < 1e-10);
        let w2 = sig.linearized_vector(1, 1.0);
        let mix: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| (a + b) / 2f64.sqrt()).collect();
        let est = projection_estimate(&r, &[0], &mix, Some(&[w1.clone()])).unwrap();
        assert!((est.value.re - est.reference.unwrap()).abs() < 1e-10);
        assert!((est.value.re - 0.5).abs() < 1e-10);
        let mut orth = vec![0.0; 24];
        orth[0] = 1.0;
        assert!(eigvec_projection(&r, &[0], &orth).unwrap().norm() < 1e-10);
    }

    #[test]
    fn degenerate_strengths_use_cluster_basis() {
        let sig = standard_basis_signal(10, 14, &[1.5, 1.5]).unwrap();
        let s = signal_matrix(&sig);
        let r = eigs_asym(&s, &s, 2).unwrap();
        assert_eq!(r.vectors[0].cluster, vec![0, 1]);
        let a = sig.linearized_vector(0, 1.0);
        let p = eigvec_projection(&r, &[0, 1], &a).unwrap();
        assert!((p - c(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn missing_vectors_reported() {
        let h = gaussian(4, 6, 1);
        let r = eigs_asym(&h, &h, 0).unwrap();
        let a = vec![0.5; 10];
        assert!(matches!(eigvec_projection(&r, &[0], &a), Err(Error::MissingEigenvectors(0))));
    }

    #[test]
    fn csv_export() {
        let r = SpectrumResult::from_lambdas(2, 3, vec![c(0.0, 1.0), c(2.0, 0.0)]);
        let mut buf = Vec::new();
        write_spectrum_csv(&mut buf, &r.lambdas, Some(&[true, false])).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "index,re,im,magnitude,arg,flagged");
        assert_eq!(lines[1], "1,2,0,2,0,1");
        assert!(lines[2].starts_with("2,0,1,1,1.5707963267948966,0"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn product_matches_linearization(p in 1usize..25, n in 1usize..30, seed in any::<u64>()) {
            prop_assume!(p + n <= 60);
            let h1 = gaussian(p, n, seed);
            let h2 = gaussian(p, n, seed.wrapping_add(1));
            let r = eigs_asym(&h1, &h2, 0).unwrap();
            let y = build_linearization(&h1, &h2).unwrap();
            let full: Vec<Complex64> = eig_general(&y, false).unwrap().iter().map(|q| q.value).collect();
            for l in r.full_spectrum() {
                prop_assert!(nearest(&full, l) < 1e-7);
            }
            let ours = r.full_spectrum();
            for l in &ours {
                prop_assert!(nearest(&ours, l.conj()) < 1e-8);
            }
        }

        #[test]
        fn scale_equivariance(gamma in 0.1f64..10.0, seed in any::<u64>()) {
            let h1 = gaussian(6, 9, seed);
            let h2 = gaussian(6, 9, seed ^ 0xff);
            let a = eigs_asym(&h1, &h2, 0).unwrap();
            let b = eigs_asym(&h1.scale(gamma), &h2.scale(gamma), 0).unwrap();
            for (x, y) in a.lambdas.iter().zip(&b.lambdas) {
                prop_assert!((x * gamma - y).norm() < 1e-9 * gamma.max(1.0));
            }
        }
    }
}
