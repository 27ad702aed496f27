//! Small dense complex linear algebra on top of `nalgebra`.
//!
//! Every Hilbert space here has dimension at most 16, so plain dense
//! matrices are used throughout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tolerances::TOLERANCES;

pub type C64 = Complex64;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl ComplexMatrix {
    pub fn from_nalgebra(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidMatrix(format!("expected a non-empty square matrix, got {}x{}", m.nrows(), m.ncols())));
        }
        Ok(Self(m))
    }

    /// Builds a matrix from row-major entries.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMatrix("rows must all have length equal to the row count".into()));
        }
        Self::from_nalgebra(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows.iter().map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    /// `|v⟩⟨v|`
    pub fn outer(v: &CVector) -> Self {
        Self(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0)
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.0 * v
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// `U M U†`
    pub fn conjugate_by(&self, u: &Self) -> Self {
        Self(&u.0 * &self.0 * u.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (&self.0 - &other.0).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max-norm of the commutator `[self, other]`.
    pub fn commutator_norm(&self, other: &Self) -> f64 {
        let ab = &self.0 * &other.0;
        let ba = &other.0 * &self.0;
        (ab - ba).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| (self.0[(i, j)] - self.0[(j, i)].conj()).norm() <= tol))
    }

    pub fn is_projector(&self, tol: f64) -> bool {
        self.matmul(self).max_abs_diff(self) <= tol
    }

    pub fn verify_hermitian(&self) -> Result<()> {
        if self.is_hermitian(TOLERANCES.hermitian) {
            Ok(())
        } else {
            Err(Error::InvalidMatrix("matrix is not Hermitian".into()))
        }
    }

    pub fn verify_projector(&self) -> Result<()> {
        self.verify_hermitian()?;
        if self.is_projector(TOLERANCES.projector) {
            Ok(())
        } else {
            Err(Error::InvalidMatrix("matrix is not idempotent".into()))
        }
    }

    /// Eigen-decomposition of a Hermitian matrix: `(eigenvalues, eigenvectors)`
    /// with eigenvalues in ascending order and orthonormal eigenvectors.
    pub fn hermitian_eigen(&self) -> (Vec<f64>, Vec<CVector>) {
        let eig = nalgebra::SymmetricEigen::new(self.0.clone());
        let mut pairs: Vec<(f64, CVector)> =
            eig.eigenvalues.iter().enumerate().map(|(k, &lambda)| (lambda, eig.eigenvectors.column(k).into_owned())).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.into_iter().unzip()
    }

    /// Partial trace over the second factor of a `d1 ⊗ d2` space.
    pub fn partial_trace_second(&self, d1: usize, d2: usize) -> Self {
        let mut out = DMatrix::zeros(d1, d1);
        for i in 0..d1 {
            for j in 0..d1 {
                let mut s = ZERO;
                for k in 0..d2 {
                    s += self.0[(i * d2 + k, j * d2 + k)];
                }
                out[(i, j)] = s;
            }
        }
        Self(out)
    }

    /// Partial trace over the first factor of a `d1 ⊗ d2` space.
    pub fn partial_trace_first(&self, d1: usize, d2: usize) -> Self {
        let mut out = DMatrix::zeros(d2, d2);
        for i in 0..d2 {
            for j in 0..d2 {
                let mut s = ZERO;
                for k in 0..d1 {
                    s += self.0[(k * d2 + i, k * d2 + j)];
                }
                out[(i, j)] = s;
            }
        }
        Self(out)
    }
}

/// Pauli matrices and the 2×2 identity.
pub mod pauli {
    use super::*;

    pub fn id() -> ComplexMatrix {
        ComplexMatrix::identity(2)
    }

    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).expect("static matrix")
    }

    pub fn y() -> ComplexMatrix {
        ComplexMatrix::from_rows(&[vec![ZERO, -I], vec![I, ZERO]]).expect("static matrix")
    }

    /// σ_z with σ_z|0⟩ = +|0⟩.
    pub fn z() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).expect("static matrix")
    }
}

/// Builds a vector from complex entries.
pub fn cvector(entries: &[C64]) -> CVector {
    CVector::from_column_slice(entries)
}

pub fn basis_vector(dim: usize, k: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[k] = ONE;
    v
}

pub fn norm_sqr(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `⟨v|M|v⟩`, real part.
pub fn expectation(m: &ComplexMatrix, v: &CVector) -> f64 {
    v.dotc(&m.apply(v)).re
}

/// Serde adapter for complex numbers as `[re, im]` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPair(pub [f64; 2]);

impl From<C64> for ComplexPair {
    fn from(z: C64) -> Self {
        ComplexPair([z.re, z.im])
    }
}

impl From<ComplexPair> for C64 {
    fn from(p: ComplexPair) -> Self {
        C64::new(p.0[0], p.0[1])
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    dim: usize,
    entries: Vec<Vec<ComplexPair>>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        let doc = MatrixDoc { dim: n, entries: (0..n).map(|i| (0..n).map(|j| self.0[(i, j)].into()).collect()).collect() };
        doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = MatrixDoc::deserialize(d)?;
        let rows: Vec<Vec<C64>> = doc.entries.into_iter().map(|r| r.into_iter().map(C64::from).collect()).collect();
        if rows.len() != doc.dim {
            return Err(serde::de::Error::custom("row count does not match dim"));
        }
        ComplexMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Serde helpers for vectors stored as lists of `[re, im]`.
pub mod vector_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &CVector, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<ComplexPair> = v.iter().map(|&z| z.into()).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CVector, D::Error> {
        let pairs = Vec::<ComplexPair>::deserialize(d)?;
        Ok(CVector::from_iterator(pairs.len(), pairs.into_iter().map(C64::from)))
    }
}
