//! Small dense linear algebra for the Gaussian (Bures–Wasserstein) code path.
//!
//! Matrices here are tiny (d ≤ 16), so everything is a plain row-major
//! `Vec<f64>`. Symmetric eigenproblems use cyclic Jacobi rotations, which are
//! unconditionally robust in the symmetric case; SPD square roots and inverses
//! are taken spectrally.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Largest supported dimension.
pub const MAX_DIM: usize = 16;

/// Eigenvalues at or below this are treated as singular.
pub const SPD_THRESHOLD: f64 = 1e-12;

/// Absolute tolerance on `m[i,j] - m[j,i]` accepted by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

const JACOBI_REL_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix dimension {0} outside supported range 1..={MAX_DIM}")]
    BadDimension(usize),

    #[error("expected {expected} entries for a {dim}x{dim} matrix, got {got}")]
    BadLength { dim: usize, expected: usize, got: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("matrix is not symmetric: |m[{i},{j}] - m[{j},{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },

    #[error("matrix is not SPD: eigenvalue {eigenvalue:e} <= {SPD_THRESHOLD:e}")]
    NotSpd { eigenvalue: f64 },

    #[error("non-finite entry at ({0},{1})")]
    NonFinite(usize, usize),

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        Err(LinalgError::BadDimension(dim))
    } else {
        Ok(())
    }
}

/// General square matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Mat {
    dim: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if data.len() != dim * dim {
            return Err(LinalgError::BadLength { dim, expected: dim * dim, got: data.len() });
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![1.0; dim])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let data: Vec<f64> = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(dim, data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim, "matvec dimension mismatch");
        self.data.chunks_exact(self.dim).map(|row| dot(row, v)).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    /// `(m + mᵀ)/2`.
    pub fn symmetrize(&self) -> SymMatrix {
        let n = self.dim;
        let mut s = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = 0.5 * (self[(i, j)] + self[(j, i)]);
            }
        }
        SymMatrix(s)
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = self.data.chunks_exact(self.dim).collect();
        f.debug_list().entries(rows).finish()
    }
}

impl<'a> Mul<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl<'a> Add<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        assert_eq!(self.dim, rhs.dim, "add dimension mismatch");
        Mat { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl<'a> Sub<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        assert_eq!(self.dim, rhs.dim, "sub dimension mismatch");
        Mat { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

/// Symmetric matrix. The wrapped [`Mat`] is exactly symmetric.
#[derive(Clone, PartialEq)]
pub struct SymMatrix(Mat);

impl SymMatrix {
    /// Validates symmetry to [`SYMMETRY_TOL`] and finiteness, then stores the
    /// symmetrized matrix.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        Self::try_from_mat(Mat::new(dim, data)?)
    }

    pub fn try_from_mat(m: Mat) -> Result<Self> {
        let n = m.dim;
        for i in 0..n {
            for j in 0..n {
                if !m[(i, j)].is_finite() {
                    return Err(LinalgError::NonFinite(i, j));
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let gap = (m[(i, j)] - m[(j, i)]).abs();
                if gap > SYMMETRY_TOL {
                    return Err(LinalgError::NotSymmetric { i, j, gap });
                }
            }
        }
        Ok(m.symmetrize())
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::try_from_mat(Mat::from_rows(rows)?)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(Mat::identity(dim))
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        SymMatrix(Mat::from_diag(diag))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn scale(&self, s: f64) -> Self {
        SymMatrix(self.0.scale(s))
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 - &other.0)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius(&self) -> f64 {
        self.0.frobenius()
    }

    /// `a · self · aᵀ`-free congruence `b · self · b` for symmetric `b`,
    /// re-symmetrized.
    pub fn congruence(&self, b: &SymMatrix) -> SymMatrix {
        (&(&b.0 * &self.0) * &b.0).symmetrize()
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sym{:?}", self.0)
    }
}

impl std::ops::Deref for SymMatrix {
    type Target = Mat;
    fn deref(&self) -> &Mat {
        &self.0
    }
}

/// Spectral decomposition `m = Q diag(λ) Qᵀ`, eigenvalues ascending, the
/// eigenvectors stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl SymEigen {
    /// `Q diag(f(λ)) Qᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.values.len();
        let q = &self.vectors;
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..n).map(|k| q[(i, k)] * fl[k] * q[(j, k)]).sum();
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        SymMatrix(out)
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }
}

fn off_diagonal_norm(a: &Mat) -> f64 {
    let n = a.dim;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigensolver.
///
/// Converges when the off-diagonal Frobenius norm drops below
/// `1e-13 · ‖m‖_F`.
pub fn sym_eigen(m: &SymMatrix) -> Result<SymEigen> {
    let n = m.dim();
    let mut a = m.as_mat().symmetrize().into_mat();
    let mut v = Mat::identity(n);
    let scale = a.frobenius();
    let tol = JACOBI_REL_TOL * scale;

    let mut converged = scale == 0.0 || off_diagonal_norm(&a) <= tol;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        converged = off_diagonal_norm(&a) <= tol;
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps, residual: off_diagonal_norm(&a) });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Mat::zeros(n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, new_col)] = v[(k, old_col)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Eigendecomposition that additionally requires every eigenvalue to exceed
/// [`SPD_THRESHOLD`].
pub fn spd_eigen(m: &SymMatrix) -> Result<SymEigen> {
    let eig = sym_eigen(m)?;
    if eig.min_value() <= SPD_THRESHOLD {
        return Err(LinalgError::NotSpd { eigenvalue: eig.min_value() });
    }
    Ok(eig)
}

pub fn is_spd(m: &SymMatrix) -> bool {
    spd_eigen(m).is_ok()
}

pub fn spd_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    Ok(spd_eigen(m)?.map(f64::sqrt))
}

pub fn spd_inverse(m: &SymMatrix) -> Result<SymMatrix> {
    Ok(spd_eigen(m)?.map(|l| 1.0 / l))
}

pub fn spd_inv_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    Ok(spd_eigen(m)?.map(|l| 1.0 / l.sqrt()))
}

/// Orthogonal factor of the QR decomposition of `m` (modified Gram–Schmidt),
/// with the sign convention `R_ii > 0`.
pub fn qr_orthogonal(m: &Mat) -> Result<Mat> {
    let n = m.dim();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    for j in 0..n {
        for k in 0..j {
            let (head, tail) = cols.split_at_mut(j);
            let proj = dot(&head[k], &tail[0]);
            for (x, q) in tail[0].iter_mut().zip(&head[k]) {
                *x -= proj * q;
            }
        }
        let norm = norm2(&cols[j]);
        if norm <= 1e-14 {
            return Err(LinalgError::NotSpd { eigenvalue: norm });
        }
        cols[j].iter_mut().for_each(|x| *x /= norm);
    }
    let mut q = Mat::zeros(n);
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            q[(i, j)] = col[i];
        }
    }
    Ok(q)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
