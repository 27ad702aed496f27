//! Pure and mixed quantum states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CVector, ComplexMatrix, C64};
use crate::tolerances::TOLERANCES;

/// A quantum state on a `dim`-dimensional space: either a unit vector or a
/// density matrix. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateDoc", into = "StateDoc")]
pub struct QuantumState {
    repr: Repr,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Pure(CVector),
    Mixed(ComplexMatrix),
}

impl QuantumState {
    /// Wraps a unit vector; fails if the norm deviates from one.
    pub fn pure(v: CVector) -> Result<Self> {
        check_dim(v.len())?;
        let n = linalg::norm_sqr(&v);
        if (n - 1.0).abs() > TOLERANCES.normalization {
            return Err(Error::InvalidState(format!("pure state has squared norm {n}")));
        }
        Ok(Self { repr: Repr::Pure(v) })
    }

    /// Normalizes `v` before wrapping it.
    pub fn pure_normalized(v: CVector) -> Result<Self> {
        let n = linalg::norm_sqr(&v).sqrt();
        if n < 1e-300 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        Self::pure(v.unscale(n))
    }

    /// Wraps a density matrix after checking trace, Hermiticity and positivity.
    pub fn mixed(rho: ComplexMatrix) -> Result<Self> {
        check_dim(rho.dim())?;
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TOLERANCES.normalization || tr.im.abs() > TOLERANCES.normalization {
            return Err(Error::InvalidState(format!("density matrix has trace {tr}")));
        }
        if !rho.is_hermitian(TOLERANCES.hermitian) {
            return Err(Error::InvalidState("density matrix is not Hermitian".into()));
        }
        let (vals, _) = rho.hermitian_eigen();
        if let Some(&min) = vals.first() {
            if min < TOLERANCES.eigenvalue_floor {
                return Err(Error::InvalidState(format!("density matrix has eigenvalue {min}")));
            }
        }
        Ok(Self { repr: Repr::Mixed(rho) })
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        Self::mixed(ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64))
    }

    /// Computational basis state `|k⟩`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        Self::pure(linalg::basis_vector(dim, k))
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            Repr::Pure(v) => v.len(),
            Repr::Mixed(m) => m.dim(),
        }
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.repr, Repr::Pure(_))
    }

    pub fn vector(&self) -> Option<&CVector> {
        match &self.repr {
            Repr::Pure(v) => Some(v),
            Repr::Mixed(_) => None,
        }
    }

    pub fn density_matrix(&self) -> ComplexMatrix {
        match &self.repr {
            Repr::Pure(v) => ComplexMatrix::outer(v),
            Repr::Mixed(m) => m.clone(),
        }
    }

    /// `tr(ρ M)` for Hermitian `M`.
    pub fn expectation(&self, m: &ComplexMatrix) -> f64 {
        match &self.repr {
            Repr::Pure(v) => linalg::expectation(m, v),
            Repr::Mixed(rho) => rho.matmul(m).trace().re,
        }
    }

    /// Applies the projector and returns `(tr(Π ρ), unnormalized Π ρ Π)`
    /// represented in the same form as `self`.
    pub(crate) fn project_unnormalized(&self, projector: &ComplexMatrix) -> (f64, Projected) {
        match &self.repr {
            Repr::Pure(v) => {
                let w = projector.apply(v);
                (linalg::norm_sqr(&w), Projected::Pure(w))
            }
            Repr::Mixed(rho) => {
                let r = projector.matmul(rho).matmul(projector);
                (r.trace().re, Projected::Mixed(r))
            }
        }
    }

    /// Builds a normalized state from an unnormalized projected one.
    pub(crate) fn from_projected(p: f64, r: Projected) -> Self {
        match r {
            Projected::Pure(w) => Self { repr: Repr::Pure(w.unscale(p.sqrt())) },
            Projected::Mixed(m) => Self { repr: Repr::Mixed(m.scale_real(1.0 / p)) },
        }
    }

    /// Fidelity-style overlap with a pure target, `⟨φ|ρ|φ⟩`.
    pub fn overlap_with(&self, target: &CVector) -> f64 {
        match &self.repr {
            Repr::Pure(v) => target.dotc(v).norm_sqr(),
            Repr::Mixed(rho) => linalg::expectation(rho, target),
        }
    }

    /// Amplitude access for pure states.
    pub fn amplitude(&self, k: usize) -> Option<C64> {
        self.vector().map(|v| v[k])
    }
}

/// Unnormalized projected state.
pub(crate) enum Projected {
    Pure(CVector),
    Mixed(ComplexMatrix),
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > TOLERANCES.max_dim {
        return Err(Error::InvalidState(format!("dimension {dim} outside 1..={}", TOLERANCES.max_dim)));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum StateDoc {
    Pure {
        dim: usize,
        #[serde(with = "linalg::vector_serde")]
        amplitudes: CVector,
    },
    Mixed {
        dim: usize,
        density: ComplexMatrix,
    },
}

impl From<QuantumState> for StateDoc {
    fn from(s: QuantumState) -> Self {
        match s.repr {
            Repr::Pure(v) => StateDoc::Pure { dim: v.len(), amplitudes: v },
            Repr::Mixed(m) => StateDoc::Mixed { dim: m.dim(), density: m },
        }
    }
}

impl TryFrom<StateDoc> for QuantumState {
    type Error = Error;
    fn try_from(doc: StateDoc) -> Result<Self> {
        match doc {
            StateDoc::Pure { dim, amplitudes } => {
                if amplitudes.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: amplitudes.len() });
                }
                QuantumState::pure(amplitudes)
            }
            StateDoc::Mixed { dim, density } => {
                if density.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: density.dim() });
                }
                QuantumState::mixed(density)
            }
        }
    }
}
