//! Dense real matrices and the handful of factorizations the rest of the crate needs.
//!
//! Heavy lifting (Schur, SVD, LU) goes through `faer`. The operator norm is a
//! hand-written power iteration so that it can serve as an independent check
//! on the SVD route.

use std::ops::{Index, IndexMut};
use std::sync::Once;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use num_complex::{Complex64, ComplexFloat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result, ShiftDisplay};

/// Relative eigenvalue gap below which vectors are reported as ill-conditioned.
pub const SIMPLE_SPECTRUM_TOL: f64 = 1e-10;

/// Condition estimate above which a shifted system is rejected.
pub const CONDITION_CAP: f64 = 1e13;

const POWER_MAX_ITER: usize = 20_000;

static SEQUENTIAL: Once = Once::new();

/// Pin faer to sequential kernels. Trials are parallelized one level up, and a
/// fixed reduction order keeps results identical across thread counts.
pub(crate) fn init_backend() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Build from row-major storage.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {c}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<f64>], rows: usize) -> Result<Self> {
        for (j, c) in cols.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::Dimension(format!(
                    "column {j} has length {}, expected {rows}",
                    c.len()
                )));
            }
        }
        Ok(Self::from_fn(rows, cols.len(), |i, j| cols[j][i]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// First non-finite entry, if any.
    pub fn find_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|x| !x.is_finite())
            .map(|k| (k / self.cols, k % self.cols))
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.find_non_finite() {
            Some((row, col)) => Err(Error::NonFinite { row, col }),
            None => Ok(()),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        init_backend();
        let prod = self.to_faer() * other.to_faer();
        Ok(Self::from_faer(prod.as_ref()))
    }

    /// `self * other^T`.
    pub fn matmul_transpose(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "cannot multiply {:?} by transpose of {:?}",
                self.shape(),
                other.shape()
            )));
        }
        init_backend();
        let prod = self.to_faer() * other.to_faer().transpose();
        Ok(Self::from_faer(prod.as_ref()))
    }

    /// `self^T * other`.
    pub fn transpose_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply transpose of {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        init_backend();
        let prod = self.to_faer().transpose() * other.to_faer();
        Ok(Self::from_faer(prod.as_ref()))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec length mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "matvec_transpose length mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }

    pub fn from_faer(m: faer::MatRef<'_, f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real(m: &DenseMatrix) -> Self {
        Self::from_fn(m.rows(), m.cols(), |i, j| Complex64::new(m[(i, j)], 0.0))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn to_faer(&self) -> Mat<Complex64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }

    pub fn from_faer(m: faer::MatRef<'_, Complex64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    /// Determinant via partial-pivot elimination; intended for small matrices.
    pub fn determinant(&self) -> Result<Complex64> {
        if self.rows != self.cols {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        Ok(elimination_determinant(self.data.clone(), self.rows))
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugated inner product `a^* b`.
pub fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn cnorm2(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Determinant of a row-major `n x n` matrix by Gaussian elimination with
/// partial pivoting. Works for real and complex scalars.
pub fn elimination_determinant<T: ComplexFloat>(mut a: Vec<T>, n: usize) -> T {
    assert_eq!(a.len(), n * n);
    let mut det = T::one();
    for k in 0..n {
        let mut piv = k;
        let mut best = a[k * n + k].abs();
        for i in k + 1..n {
            let v = a[i * n + k].abs();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best == T::zero().abs() {
            return T::zero();
        }
        if piv != k {
            for j in 0..n {
                a.swap(k * n + j, piv * n + j);
            }
            det = -det;
        }
        let pivot = a[k * n + k];
        det = det * pivot;
        for i in k + 1..n {
            let f = a[i * n + k] / pivot;
            if f == T::zero() {
                continue;
            }
            for j in k + 1..n {
                let v = a[k * n + j];
                a[i * n + j] = a[i * n + j] - f * v;
            }
        }
    }
    det
}

/// One eigenvalue with optional right/left eigenvectors.
///
/// When vectors are present, `right` has unit 2-norm and `left` is scaled so
/// that `left^* right = 1`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: Complex64,
    pub right: Option<Vec<Complex64>>,
    pub left: Option<Vec<Complex64>>,
    pub ill_conditioned: bool,
}

/// Permutation ordering `values` by modulus, largest first, with each
/// conjugate pair kept adjacent and the member with positive imaginary part
/// leading.
pub fn magnitude_order(values: &[Complex64]) -> Vec<usize> {
    let scale = values.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
    let tol = 1e-9 * scale;
    let mut used = vec![false; values.len()];
    // (modulus, arg, head, partner)
    let mut groups: Vec<(f64, f64, usize, Option<usize>)> = Vec::new();
    for (i, z) in values.iter().enumerate() {
        if used[i] || z.im <= tol {
            continue;
        }
        used[i] = true;
        let target = z.conj();
        let partner = values
            .iter()
            .enumerate()
            .filter(|(j, w)| !used[*j] && w.im < -tol)
            .map(|(j, w)| (j, (w - target).norm()))
            .filter(|&(_, d)| d <= tol.max(1e-9 * z.norm()) * 10.0)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(j, _)| j);
        if let Some(j) = partner {
            used[j] = true;
        }
        groups.push((z.norm(), z.arg(), i, partner));
    }
    for (i, z) in values.iter().enumerate() {
        if !used[i] {
            groups.push((z.norm(), z.arg(), i, None));
        }
    }
    groups.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    let mut order = Vec::with_capacity(values.len());
    for (_, _, head, partner) in groups {
        order.push(head);
        if let Some(j) = partner {
            order.push(j);
        }
    }
    order
}

/// Eigenvalues, and optionally right/left eigenvectors, of a real square matrix.
///
/// Pairs are returned in [`magnitude_order`]. Left vectors come from the
/// eigendecomposition of the transpose, matched to the nearest eigenvalue.
pub fn eig_general(m: &DenseMatrix, want_vectors: bool) -> Result<Vec<EigenPair>> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    m.ensure_finite()?;
    init_backend();
    let n = m.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let fm = m.to_faer();
    if !want_vectors {
        let values = fm.eigenvalues().map_err(|_| no_convergence("eigenvalues", n))?;
        let order = magnitude_order(&values);
        return Ok(order
            .into_iter()
            .map(|i| EigenPair { value: values[i], right: None, left: None, ill_conditioned: false })
            .collect());
    }

    let right = fm.eigen().map_err(|_| no_convergence("eigen", n))?;
    let left = fm.transpose().to_owned().eigen().map_err(|_| no_convergence("eigen", n))?;
    let values: Vec<Complex64> = (0..n).map(|i| right.S()[i]).collect();
    let left_values: Vec<Complex64> = (0..n).map(|i| left.S()[i]).collect();
    let scale = values.iter().fold(0.0_f64, |a, z| a.max(z.norm())).max(f64::MIN_POSITIVE);

    let mut taken = vec![false; n];
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let lam = values[i];
        let j = (0..n)
            .filter(|&j| !taken[j])
            .min_by(|&a, &b| (left_values[a] - lam).norm().total_cmp(&(left_values[b] - lam).norm()))
            .expect("transpose has as many eigenvalues as the matrix");
        taken[j] = true;

        let mut r: Vec<Complex64> = (0..n).map(|k| right.U()[(k, i)]).collect();
        let rn = cnorm2(&r);
        r.iter_mut().for_each(|x| *x /= rn);
        let y: Vec<Complex64> = (0..n).map(|k| left.U()[(k, j)]).collect();
        // y is a right eigenvector of M^T, so conj(y) is a left eigenvector of M.
        let c: Complex64 = y.iter().zip(&r).map(|(a, b)| a * b).sum();
        let yn = cnorm2(&y);
        let gap = values
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, v)| (v - lam).norm())
            .fold(f64::INFINITY, f64::min);
        let ill = gap < SIMPLE_SPECTRUM_TOL * scale || c.norm() < SIMPLE_SPECTRUM_TOL * yn;
        let l: Vec<Complex64> = if c.norm() > 0.0 {
            y.iter().map(|a| (a / c).conj()).collect()
        } else {
            y.iter().map(|a| a.conj()).collect()
        };
        pairs.push(EigenPair { value: lam, right: Some(r), left: Some(l), ill_conditioned: ill });
    }
    let order = magnitude_order(&values);
    let mut slots: Vec<Option<EigenPair>> = pairs.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|i| slots[i].take().expect("permutation")).collect())
}

fn no_convergence(routine: &'static str, n: usize) -> Error {
    // The QR-type solvers sweep at most a fixed multiple of the dimension.
    Error::NoConvergence { routine, iterations: 30 * n.max(1) }
}

/// Largest singular value by power iteration on `M^T M`.
///
/// Iterates until the Rayleigh quotient changes by less than `tol` relatively.
pub fn op_norm(m: &DenseMatrix, tol: f64) -> Result<f64> {
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(0.0);
    }
    m.ensure_finite()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f0e);
    let mut v: Vec<f64> = (0..m.cols()).map(|_| 1.0 + 0.5 * rng.random::<f64>()).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut prev = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        let w = m.matvec(&v);
        let s = dot(&w, &w);
        if s == 0.0 {
            return Ok(0.0);
        }
        if (s - prev).abs() <= tol * s {
            return Ok(s.sqrt());
        }
        prev = s;
        v = m.matvec_transpose(&w);
        let nv = norm2(&v);
        if nv == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|x| *x /= nv);
    }
    Err(Error::NoConvergence { routine: "power iteration", iterations: POWER_MAX_ITER })
}

/// Singular values in descending order.
pub fn svd_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    m.ensure_finite()?;
    init_backend();
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(Vec::new());
    }
    let mut s = m
        .to_faer()
        .singular_values()
        .map_err(|_| no_convergence("svd", m.rows().max(m.cols())))?;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// LU factorization of `M - zI`, real when the shift is real.
pub enum ShiftedLu {
    Real(PartialPivLu<f64>),
    Complex(PartialPivLu<Complex64>),
}

impl ShiftedLu {
    /// Factor `M - zI`, rejecting shifts whose pivot-ratio condition estimate
    /// exceeds [`CONDITION_CAP`].
    pub fn new(m: &DenseMatrix, z: Complex64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare { rows: m.rows(), cols: m.cols() });
        }
        m.ensure_finite()?;
        init_backend();
        let n = m.rows();
        let (lu, condition) = if z.im == 0.0 {
            let a = Mat::from_fn(n, n, |i, j| m[(i, j)] - if i == j { z.re } else { 0.0 });
            let lu = a.partial_piv_lu();
            let c = pivot_ratio((0..n).map(|i| lu.U()[(i, i)].abs()));
            (ShiftedLu::Real(lu), c)
        } else {
            let a = Mat::from_fn(n, n, |i, j| {
                Complex64::new(m[(i, j)], 0.0) - if i == j { z } else { Complex64::new(0.0, 0.0) }
            });
            let lu = a.partial_piv_lu();
            let c = pivot_ratio((0..n).map(|i| lu.U()[(i, i)].norm()));
            (ShiftedLu::Complex(lu), c)
        };
        if !(condition <= CONDITION_CAP) {
            return Err(Error::SingularShift { shift: ShiftDisplay(z), condition });
        }
        Ok(lu)
    }

    /// Solve `(M - zI) X = B`.
    pub fn solve(&self, b: &Mat<Complex64>) -> Mat<Complex64> {
        match self {
            ShiftedLu::Complex(lu) => lu.solve(b),
            ShiftedLu::Real(lu) => split_solve(b, |r| lu.solve(r)),
        }
    }

    /// Solve `(M - zI)^T X = B` (plain transpose, no conjugation).
    pub fn solve_transpose(&self, b: &Mat<Complex64>) -> Mat<Complex64> {
        match self {
            ShiftedLu::Complex(lu) => lu.solve_transpose(b),
            ShiftedLu::Real(lu) => split_solve(b, |r| lu.solve_transpose(r)),
        }
    }
}

fn split_solve(b: &Mat<Complex64>, f: impl Fn(&Mat<f64>) -> Mat<f64>) -> Mat<Complex64> {
    let re = Mat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)].re);
    let im = Mat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)].im);
    let (xr, xi) = (f(&re), f(&im));
    Mat::from_fn(b.nrows(), b.ncols(), |i, j| Complex64::new(xr[(i, j)], xi[(i, j)]))
}

fn pivot_ratio(diag: impl Iterator<Item = f64>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for d in diag {
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo == 0.0 || !lo.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solve `(M - zI) X = B` for a real square `M` and real right-hand sides.
pub fn solve_shifted(m: &DenseMatrix, z: Complex64, b: &DenseMatrix) -> Result<ComplexMatrix> {
    if b.rows() != m.rows() {
        return Err(Error::Dimension(format!(
            "right-hand side has {} rows, matrix has {}",
            b.rows(),
            m.rows()
        )));
    }
    let lu = ShiftedLu::new(m, z)?;
    let rhs = Mat::from_fn(b.rows(), b.cols(), |i, j| Complex64::new(b[(i, j)], 0.0));
    Ok(ComplexMatrix::from_faer(lu.solve(&rhs).as_ref()))
}

/// Biorthogonal bases `(R, L)` of the invariant subspace of `M` belonging to
/// the `dim` eigenvalues nearest `center`, with `L^* R = I` and orthonormal
/// columns in `R`.
///
/// Computed by block inverse iteration; for `dim = 1` the columns are the
/// right and left eigenvectors.
pub fn biorthogonal_basis(
    m: &DenseMatrix,
    center: Complex64,
    dim: usize,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    let n = m.rows();
    if dim == 0 || dim > n {
        return Err(Error::InvalidParameter(format!("subspace dimension {dim} for size {n}")));
    }
    let scale = m.max_abs().max(center.norm()).max(1.0);
    let mut lu = None;
    // Nudge off the eigenvalue so the factorization stays usable.
    for k in 0..6 {
        let eps = 1e-9 * scale * 10f64.powi(k);
        let shift = center + Complex64::new(eps, if center.im == 0.0 { 0.0 } else { eps });
        match ShiftedLu::new(m, shift) {
            Ok(f) => {
                lu = Some(f);
                break;
            }
            Err(Error::SingularShift { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    let lu = lu.ok_or(Error::SingularShift { shift: ShiftDisplay(center), condition: f64::INFINITY })?;

    let mut rng = ChaCha8Rng::seed_from_u64(0xb10_0b5e);
    let mut start = || {
        Mat::from_fn(n, dim, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    };
    let mut r = orthonormalize(start());
    let mut l = orthonormalize(start());
    for _ in 0..4 {
        r = orthonormalize(lu.solve(&r));
        l = orthonormalize(lu.solve_transpose(&l));
    }
    // Columns of l span the right invariant subspace of M^T; conjugate to get
    // left vectors of M, then rescale so that L^* R = I.
    let lbar = Mat::from_fn(n, dim, |i, j| l[(i, j)].conj());
    let g = ComplexMatrix::from_fn(dim, dim, |i, j| {
        (0..n).map(|k| lbar[(k, i)].conj() * r[(k, j)]).sum()
    });
    let gdet = g.determinant()?;
    if gdet.norm() < SIMPLE_SPECTRUM_TOL {
        return Err(Error::DegenerateNormalization(gdet.norm()));
    }
    let ginv = invert_small(&g)?;
    // L = lbar * (G^{-1})^*, so that L^* R = G^{-1} G = I.
    let lmat = ComplexMatrix::from_fn(n, dim, |i, j| {
        (0..dim).map(|k| lbar[(i, k)] * ginv[(j, k)].conj()).sum()
    });
    Ok((ComplexMatrix::from_faer(r.as_ref()), lmat))
}

fn orthonormalize(mut a: Mat<Complex64>) -> Mat<Complex64> {
    let (n, k) = (a.nrows(), a.ncols());
    for j in 0..k {
        for _ in 0..2 {
            for i in 0..j {
                let proj: Complex64 = (0..n).map(|t| a[(t, i)].conj() * a[(t, j)]).sum();
                for t in 0..n {
                    let v = a[(t, i)];
                    a[(t, j)] -= proj * v;
                }
            }
        }
        let nrm = (0..n).map(|t| a[(t, j)].norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            for t in 0..n {
                a[(t, j)] /= nrm;
            }
        }
    }
    a
}

fn invert_small(g: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = g.rows();
    let lu = g.to_faer().partial_piv_lu();
    let eye = Mat::<Complex64>::from_fn(n, n, |i, j| {
        if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
    });
    let inv = lu.solve(&eye);
    let out = ComplexMatrix::from_faer(inv.as_ref());
    if out.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::DegenerateNormalization(0.0));
    }
    Ok(out)
}
