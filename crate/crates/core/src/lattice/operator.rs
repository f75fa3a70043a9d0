//! Dense complex matrices on a finite Hilbert space.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use faer::{c64, Mat, MatRef, Side};

use super::LatticeError;

/// A dense square complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(Mat<c64>);

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
///
/// `real_vectors` is populated when the input had no imaginary part, so that
/// later products with the eigenbasis can run in real arithmetic.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<c64>,
    pub real_vectors: Option<Mat<f64>>,
}

pub fn c(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Self(Mat::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Mat::identity(dim, dim))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> c64) -> Self {
        Self(Mat::from_fn(dim, dim, f))
    }

    pub fn from_real_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self(Mat::from_fn(dim, dim, |i, j| c64::new(f(i, j), 0.0)))
    }

    /// Panics when `m` is not square.
    pub fn from_mat(m: Mat<c64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operator matrix must be square");
        Self(m)
    }

    pub fn from_real_mat(m: MatRef<'_, f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operator matrix must be square");
        Self(Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0)))
    }

    /// Builds from row-major entries.
    pub fn from_rows(rows: &[Vec<c64>]) -> Result<Self, LatticeError> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(LatticeError::NotSquare);
        }
        Ok(Self::from_fn(d, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let d = rows.len();
        Self::from_real_fn(d, |i, j| rows[i][j])
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let d = values.len();
        Self::from_fn(d, |i, j| if i == j { c64::new(values[i], 0.0) } else { c64::new(0.0, 0.0) })
    }

    /// `|psi><phi|`
    pub fn outer(psi: &[c64], phi: &[c64]) -> Self {
        Self::from_fn(psi.len(), |i, j| psi[i] * phi[j].conj())
    }

    pub fn projector(psi: &[c64]) -> Self {
        Self::outer(psi, psi)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn mat(&self) -> MatRef<'_, c64> {
        self.0.as_ref()
    }

    pub fn mat_mut(&mut self) -> &mut Mat<c64> {
        &mut self.0
    }

    pub fn into_mat(self) -> Mat<c64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: c64) {
        self.0[(i, j)] = v;
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint().to_owned())
    }

    pub fn matmul(&self, rhs: &Operator) -> Self {
        Self(&self.0 * &rhs.0)
    }

    pub fn scale(&self, s: c64) -> Self {
        Self(Mat::from_fn(self.dim(), self.dim(), |i, j| self.0[(i, j)] * s))
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(c64::new(s, 0.0))
    }

    pub fn kron(&self, rhs: &Operator) -> Self {
        let (a, b) = (self.dim(), rhs.dim());
        Self::from_fn(a * b, |i, j| self.0[(i / b, j / b)] * rhs.0[(i % b, j % b)])
    }

    pub fn trace(&self) -> c64 {
        (0..self.dim()).map(|i| self.0[(i, i)]).sum()
    }

    /// `Tr(self * rhs)` without forming the product.
    pub fn trace_product(&self, rhs: &Operator) -> c64 {
        let d = self.dim();
        let mut acc = c64::new(0.0, 0.0);
        for j in 0..d {
            for i in 0..d {
                acc += self.0[(i, j)] * rhs.0[(j, i)];
            }
        }
        acc
    }

    pub fn commutator(&self, rhs: &Operator) -> Self {
        &self.matmul(rhs) - &rhs.matmul(self)
    }

    pub fn max_abs(&self) -> f64 {
        let d = self.dim();
        let mut m: f64 = 0.0;
        for j in 0..d {
            for i in 0..d {
                m = m.max(self.0[(i, j)].norm());
            }
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm_l2()
    }

    /// Largest deviation from Hermiticity, entrywise.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut m: f64 = 0.0;
        for j in 0..d {
            for i in 0..=j {
                m = m.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        m
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol * self.max_abs().max(1.0)
    }

    pub fn hermitian_part(&self) -> Self {
        let d = self.dim();
        Self::from_fn(d, |i, j| (self.0[(i, j)] + self.0[(j, i)].conj()) * 0.5)
    }

    pub fn is_real(&self) -> bool {
        let d = self.dim();
        (0..d).all(|j| (0..d).all(|i| self.0[(i, j)].im == 0.0))
    }

    pub fn real_part_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.dim(), self.dim(), |i, j| self.0[(i, j)].re)
    }

    pub fn apply(&self, psi: &[c64]) -> Vec<c64> {
        let d = self.dim();
        let mut out = vec![c64::new(0.0, 0.0); d];
        for j in 0..d {
            let pj = psi[j];
            if pj == c64::new(0.0, 0.0) {
                continue;
            }
            let col = self.0.col(j);
            for i in 0..d {
                out[i] += col[i] * pj;
            }
        }
        out
    }

    /// `<psi|self|psi>`
    pub fn expectation(&self, psi: &[c64]) -> c64 {
        let v = self.apply(psi);
        psi.iter().zip(&v).map(|(a, b)| a.conj() * b).sum()
    }

    /// Eigendecomposition of the Hermitian part, with a real-arithmetic path
    /// when the matrix has no imaginary entries.
    pub fn eigh(&self) -> Result<HermitianEigen, LatticeError> {
        let d = self.dim();
        if self.is_real() {
            let re = self.real_part_mat();
            let e = re
                .self_adjoint_eigen(Side::Lower)
                .map_err(|_| LatticeError::EigenNoConvergence { dim: d })?;
            let values: Vec<f64> = (0..d).map(|i| e.S().column_vector()[i]).collect();
            let u = e.U().to_owned();
            let vectors = Mat::from_fn(d, d, |i, j| c64::new(u[(i, j)], 0.0));
            Ok(HermitianEigen { values, vectors, real_vectors: Some(u) })
        } else {
            let e = self
                .0
                .self_adjoint_eigen(Side::Lower)
                .map_err(|_| LatticeError::EigenNoConvergence { dim: d })?;
            let values: Vec<f64> = (0..d).map(|i| e.S().column_vector()[i].re).collect();
            Ok(HermitianEigen { values, vectors: e.U().to_owned(), real_vectors: None })
        }
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigvalsh(&self) -> Result<Vec<f64>, LatticeError> {
        let d = self.dim();
        if self.is_real() {
            self.real_part_mat()
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|_| LatticeError::EigenNoConvergence { dim: d })
        } else {
            self.0
                .self_adjoint_eigenvalues(Side::Lower)
                .map(|v| v.into_iter().collect())
                .map_err(|_| LatticeError::EigenNoConvergence { dim: d })
        }
    }

    /// Operator norm. Hermitian inputs use the spectrum, others the largest
    /// singular value.
    pub fn operator_norm(&self) -> Result<f64, LatticeError> {
        if self.dim() == 0 {
            return Ok(0.0);
        }
        if self.is_hermitian(1e-13) {
            let ev = self.eigvalsh()?;
            Ok(ev.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        } else {
            let sv = self
                .0
                .singular_values()
                .map_err(|_| LatticeError::EigenNoConvergence { dim: self.dim() })?;
            Ok(sv.first().copied().unwrap_or(0.0))
        }
    }

    /// Trace norm of a Hermitian matrix.
    pub fn trace_norm_hermitian(&self) -> Result<f64, LatticeError> {
        Ok(self.eigvalsh()?.iter().map(|v| v.abs()).sum())
    }

    /// `f` applied to the spectrum of a Hermitian matrix.
    pub fn hermitian_function(&self, f: impl Fn(f64) -> f64) -> Result<Self, LatticeError> {
        let e = self.eigh()?;
        let w: Vec<f64> = e.values.iter().map(|&x| f(x)).collect();
        Ok(reconstruct(&e, &w))
    }
}

/// `V diag(w) V^dagger`, in real arithmetic when possible.
pub fn reconstruct(e: &HermitianEigen, w: &[f64]) -> Operator {
    let d = e.values.len();
    if let Some(u) = &e.real_vectors {
        let scaled = Mat::from_fn(d, d, |i, j| u[(i, j)] * w[j]);
        let m = &scaled * u.transpose();
        Operator::from_real_mat(m.as_ref())
    } else {
        let v = &e.vectors;
        let scaled = Mat::from_fn(d, d, |i, j| v[(i, j)] * w[j]);
        Operator(&scaled * v.adjoint())
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale_real(-1.0)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.matmul(rhs)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale_real(rhs)
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&Operator> for Operator {
    fn sub_assign(&mut self, rhs: &Operator) {
        self.0 -= &rhs.0;
    }
}

/// Single-site matrices in the computational basis `|0>, |1>`.
pub mod pauli {
    use super::{c, Operator};

    pub fn identity() -> Operator {
        Operator::identity(2)
    }
    pub fn x() -> Operator {
        Operator::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
    }
    pub fn y() -> Operator {
        Operator::from_rows(&[vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]]).unwrap()
    }
    pub fn z() -> Operator {
        Operator::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
    }
    /// `|0><1|`: lowers the occupation of a mode.
    pub fn annihilation() -> Operator {
        Operator::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]])
    }
    /// `|1><0|`
    pub fn creation() -> Operator {
        Operator::from_real_rows(&[&[0.0, 0.0], &[1.0, 0.0]])
    }
    /// `|1><1|`
    pub fn number() -> Operator {
        Operator::diagonal(&[0.0, 1.0])
    }
}
