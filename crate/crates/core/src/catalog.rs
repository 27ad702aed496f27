//! Named observable sets and states.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::engine::{Observable, Observables};
use crate::error::{Error, Result};
use crate::linalg::{cvector, pauli, CVector, ComplexMatrix, C64, ZERO};
use crate::state::QuantumState;

/// Which noncontextuality inequality a set is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum InequalityKind {
    Chsh,
    Kcbs,
    Ks,
}

/// A named collection of observables with declared contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SetDoc", into = "SetDoc")]
pub struct ObservableSet {
    name: String,
    kind: InequalityKind,
    observables: Vec<Observable>,
    compatibility_edges: Vec<Vec<String>>,
}

impl ObservableSet {
    /// Builds a set and checks that every declared context is mutually commuting.
    pub fn new(
        name: impl Into<String>,
        kind: InequalityKind,
        observables: Vec<Observable>,
        compatibility_edges: Vec<Vec<String>>,
    ) -> Result<Self> {
        let set = Self { name: name.into(), kind, observables, compatibility_edges };
        set.verify()?;
        Ok(set)
    }

    fn verify(&self) -> Result<()> {
        let dim = self
            .observables
            .first()
            .map(Observable::dim)
            .ok_or_else(|| Error::InvalidParameter(format!("observable set `{}` is empty", self.name)))?;
        for (i, o) in self.observables.iter().enumerate() {
            if o.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: o.dim() });
            }
            if self.observables[..i].iter().any(|p| p.label() == o.label()) {
                return Err(Error::InvalidParameter(format!("duplicate label `{}`", o.label())));
            }
        }
        for ctx in &self.compatibility_edges {
            let obs: Vec<&Observable> =
                ctx.iter().map(|l| self.observable(l).ok_or_else(|| Error::UnknownLabel(l.clone()))).collect::<Result<_>>()?;
            for (i, a) in obs.iter().enumerate() {
                for b in &obs[i + 1..] {
                    if !a.commutes_with(b) {
                        return Err(Error::InvalidMatrix(format!(
                            "declared compatible pair ({}, {}) does not commute",
                            a.label(),
                            b.label()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> InequalityKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.observables[0].dim()
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    pub fn labels(&self) -> Vec<&str> {
        self.observables.iter().map(Observable::label).collect()
    }

    pub fn compatibility_edges(&self) -> &[Vec<String>] {
        &self.compatibility_edges
    }

    /// True when `a` and `b` appear together in a declared context.
    pub fn declared_compatible(&self, a: &str, b: &str) -> bool {
        self.compatibility_edges.iter().any(|c| c.iter().any(|l| l == a) && c.iter().any(|l| l == b))
    }

    /// All unordered pairs drawn from the declared contexts.
    pub fn compatible_pairs(&self) -> Vec<(String, String)> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for ctx in &self.compatibility_edges {
            for (i, a) in ctx.iter().enumerate() {
                for b in &ctx[i + 1..] {
                    let p = (a.clone(), b.clone());
                    if !pairs.contains(&p) {
                        pairs.push(p);
                    }
                }
            }
        }
        pairs
    }
}

impl Observables for ObservableSet {
    fn observable(&self, label: &str) -> Option<&Observable> {
        self.observables.iter().find(|o| o.label() == label)
    }
}

#[derive(Serialize, Deserialize)]
struct SetDoc {
    name: String,
    kind: InequalityKind,
    dim: usize,
    observables: Vec<Observable>,
    compatibility_edges: Vec<Vec<String>>,
}

impl From<ObservableSet> for SetDoc {
    fn from(s: ObservableSet) -> Self {
        SetDoc {
            dim: s.dim(),
            name: s.name,
            kind: s.kind,
            observables: s.observables,
            compatibility_edges: s.compatibility_edges,
        }
    }
}

impl TryFrom<SetDoc> for ObservableSet {
    type Error = Error;
    fn try_from(doc: SetDoc) -> Result<Self> {
        let set = ObservableSet::new(doc.name, doc.kind, doc.observables, doc.compatibility_edges)?;
        if set.dim() != doc.dim {
            return Err(Error::DimensionMismatch { expected: doc.dim, found: set.dim() });
        }
        Ok(set)
    }
}

/// A catalog state with its name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedState {
    pub name: String,
    pub state: QuantumState,
}

pub const SET_NAMES: [&str; 4] = ["chsh_entangled", "chsh_product", "mermin_peres", "kcbs_pentagram"];

pub const STATE_NAMES: [&str; 8] =
    ["phi_plus", "x_plus_zero", "fig2_psi", "singlet", "zero_zero", "max_mixed_2q", "kcbs_optimal", "max_mixed_qutrit"];

/// Two-qubit catalog states.
pub const TWO_QUBIT_STATES: [&str; 6] = ["phi_plus", "x_plus_zero", "fig2_psi", "singlet", "zero_zero", "max_mixed_2q"];

pub fn load_set(name: &str) -> Result<ObservableSet> {
    match name {
        "chsh_entangled" => chsh_entangled(),
        "chsh_product" => chsh_product(),
        "mermin_peres" => mermin_peres(),
        "kcbs_pentagram" => kcbs_pentagram(),
        "singlet_witness" => singlet_witness(),
        other => Err(Error::UnknownSetName(other.to_string())),
    }
}

pub fn load_state(name: &str) -> Result<NamedState> {
    let r = FRAC_1_SQRT_2;
    let re = |x: f64| C64::new(x, 0.0);
    let state = match name {
        "phi_plus" => QuantumState::pure(cvector(&[re(r), ZERO, ZERO, re(r)]))?,
        "x_plus_zero" => QuantumState::pure(cvector(&[re(r), ZERO, re(r), ZERO]))?,
        "fig2_psi" => {
            let e = C64::from_polar(0.5, FRAC_PI_4);
            QuantumState::pure(cvector(&[ZERO, e, e, re(r)]))?
        }
        "singlet" => QuantumState::pure(cvector(&[ZERO, re(r), re(-r), ZERO]))?,
        "zero_zero" => QuantumState::basis(4, 0)?,
        "max_mixed_2q" => QuantumState::maximally_mixed(4)?,
        "kcbs_optimal" => QuantumState::pure(kcbs_optimal_vector()?)?,
        "max_mixed_qutrit" => QuantumState::maximally_mixed(3)?,
        other => return Err(Error::UnknownStateName(other.to_string())),
    };
    Ok(NamedState { name: name.to_string(), state })
}

fn pair(a: &str, b: &str) -> Vec<String> {
    vec![a.to_string(), b.to_string()]
}

fn triple(a: &str, b: &str, c: &str) -> Vec<String> {
    vec![a.to_string(), b.to_string(), c.to_string()]
}

fn chsh_edges() -> Vec<Vec<String>> {
    vec![pair("A", "B"), pair("B", "C"), pair("C", "D"), pair("D", "A")]
}

fn chsh_entangled() -> Result<ObservableSet> {
    let (x, z, id) = (pauli::x(), pauli::z(), pauli::id());
    let r = FRAC_1_SQRT_2;
    let obs = vec![
        Observable::from_operator("A", &x.kron(&id))?,
        Observable::from_operator("B", &id.kron(&z.add(&x).scale_real(r)))?,
        Observable::from_operator("C", &z.kron(&id))?,
        Observable::from_operator("D", &id.kron(&z.sub(&x).scale_real(r)))?,
    ];
    ObservableSet::new("chsh_entangled", InequalityKind::Chsh, obs, chsh_edges())
}

fn chsh_product() -> Result<ObservableSet> {
    let (x, z, id) = (pauli::x(), pauli::z(), pauli::id());
    let r = FRAC_1_SQRT_2;
    let b = ComplexMatrix::from_real_rows(&[
        &[1.0, 1.0, 0.0, 0.0],
        &[1.0, -1.0, 0.0, 0.0],
        &[0.0, 0.0, -1.0, 1.0],
        &[0.0, 0.0, 1.0, 1.0],
    ])?
    .scale_real(r);
    let d = ComplexMatrix::from_real_rows(&[
        &[1.0, -1.0, 0.0, 0.0],
        &[-1.0, -1.0, 0.0, 0.0],
        &[0.0, 0.0, -1.0, -1.0],
        &[0.0, 0.0, -1.0, 1.0],
    ])?
    .scale_real(r);
    let obs = vec![
        Observable::from_operator("A", &x.kron(&x))?,
        Observable::from_operator("B", &b)?,
        Observable::from_operator("C", &z.kron(&id))?,
        Observable::from_operator("D", &d)?,
    ];
    ObservableSet::new("chsh_product", InequalityKind::Chsh, obs, chsh_edges())
}

/// Rows `(A,B,C)`, `(a,b,c)`, `(alpha,beta,gamma)` and columns in the order
/// they enter the KS sum; the last column carries the minus sign.
pub const MERMIN_PERES_CONTEXTS: [[&str; 3]; 6] =
    [["A", "B", "C"], ["a", "b", "c"], ["alpha", "beta", "gamma"], ["A", "a", "alpha"], ["B", "b", "beta"], ["C", "c", "gamma"]];

pub const MERMIN_PERES_SIGNS: [f64; 6] = [1.0, 1.0, 1.0, 1.0, 1.0, -1.0];

fn mermin_peres() -> Result<ObservableSet> {
    let (x, y, z, id) = (pauli::x(), pauli::y(), pauli::z(), pauli::id());
    let obs = vec![
        Observable::from_operator("A", &z.kron(&id))?,
        Observable::from_operator("B", &id.kron(&z))?,
        Observable::from_operator("C", &z.kron(&z))?,
        Observable::from_operator("a", &id.kron(&x))?,
        Observable::from_operator("b", &x.kron(&id))?,
        Observable::from_operator("c", &x.kron(&x))?,
        Observable::from_operator("alpha", &z.kron(&x))?,
        Observable::from_operator("beta", &x.kron(&z))?,
        Observable::from_operator("gamma", &y.kron(&y))?,
    ];
    let edges = MERMIN_PERES_CONTEXTS.iter().map(|t| triple(t[0], t[1], t[2])).collect();
    ObservableSet::new("mermin_peres", InequalityKind::Ks, obs, edges)
}

/// `A = σz⊗1`, `B = −1⊗σz`: on the singlet `⟨A₁B₂⟩ = 1` while `⟨B⟩ = 0`.
fn singlet_witness() -> Result<ObservableSet> {
    let (z, id) = (pauli::z(), pauli::id());
    let obs = vec![Observable::from_operator("A", &z.kron(&id))?, Observable::from_operator("B", &id.kron(&z).scale_real(-1.0))?];
    ObservableSet::new("singlet_witness", InequalityKind::Chsh, obs, vec![pair("A", "B")])
}

pub const KCBS_LABELS: [&str; 5] = ["A", "B", "C", "D", "E"];

/// Pentagram vectors: unit vectors in R³ symmetric about the z axis with
/// neighbours orthogonal. The polar angle satisfies
/// `cos²θ = cos(π/5) / (1 + cos(π/5))`.
pub fn kcbs_vectors() -> Vec<[f64; 3]> {
    let c = (PI / 5.0).cos();
    let cos_theta = (c / (1.0 + c)).sqrt();
    let sin_theta = (1.0 - cos_theta * cos_theta).sqrt();
    (0..5)
        .map(|j| {
            let phi = 4.0 * PI * j as f64 / 5.0;
            [sin_theta * phi.cos(), sin_theta * phi.sin(), cos_theta]
        })
        .collect()
}

fn kcbs_pentagram() -> Result<ObservableSet> {
    let obs = kcbs_vectors()
        .iter()
        .zip(KCBS_LABELS)
        .map(|(v, label)| {
            let v = cvector(&[C64::new(v[0], 0.0), C64::new(v[1], 0.0), C64::new(v[2], 0.0)]);
            Observable::from_plus_projector(label, ComplexMatrix::outer(&v))
        })
        .collect::<Result<Vec<_>>>()?;
    let edges = (0..5).map(|i| pair(KCBS_LABELS[i], KCBS_LABELS[(i + 1) % 5])).collect();
    ObservableSet::new("kcbs_pentagram", InequalityKind::Kcbs, obs, edges)
}

/// `Σ A_i A_{i+1}` over the pentagram edges.
pub fn kcbs_sum_operator(set: &ObservableSet) -> Result<ComplexMatrix> {
    let mut sum = ComplexMatrix::zeros(set.dim());
    for i in 0..5 {
        let a = set.observable(KCBS_LABELS[i]).ok_or_else(|| Error::UnknownLabel(KCBS_LABELS[i].into()))?;
        let b = set.observable(KCBS_LABELS[(i + 1) % 5]).ok_or_else(|| Error::UnknownLabel(KCBS_LABELS[(i + 1) % 5].into()))?;
        sum = sum.add(&a.operator().matmul(&b.operator()));
    }
    Ok(sum)
}

/// Ground state of the KCBS sum operator, the qutrit state minimizing the sum.
fn kcbs_optimal_vector() -> Result<CVector> {
    let set = kcbs_pentagram()?;
    let (_, vecs) = kcbs_sum_operator(&set)?.hermitian_eigen();
    let v = vecs.into_iter().next().expect("3x3 operator has eigenvectors");
    // Fix the global phase so that the largest amplitude is real and positive.
    let k = (0..v.len()).max_by(|&i, &j| v[i].norm().total_cmp(&v[j].norm())).unwrap_or(0);
    let phase = v[k] / v[k].norm();
    Ok(v.map(|z| z / phase))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::sequence_mean;
    use crate::linalg::I;
    use crate::sequence::MeasurementSequence;

    const CHSH_SETS: [&str; 2] = ["chsh_entangled", "chsh_product"];

    #[test]
    fn every_set_loads() {
        for name in SET_NAMES {
            let s = load_set(name).unwrap();
            assert_eq!(s.name(), name);
        }
        assert_eq!(load_set("singlet_witness").unwrap().labels(), vec!["A", "B"]);
        assert_eq!(load_set("nope").unwrap_err(), Error::UnknownSetName("nope".into()));
    }

    #[test]
    fn every_state_is_normalized() {
        for name in STATE_NAMES {
            let s = load_state(name).unwrap().state;
            assert!((s.density_matrix().trace().re - 1.0).abs() < 1e-12, "{name}");
        }
        assert_eq!(load_state("nope").unwrap_err(), Error::UnknownStateName("nope".into()));
    }

    #[test]
    fn chsh_edges_commute_and_diagonals_do_not() {
        for name in CHSH_SETS {
            let s = load_set(name).unwrap();
            for (a, b) in [("A", "B"), ("B", "C"), ("C", "D"), ("D", "A")] {
                assert!(s.observable(a).unwrap().commutes_with(s.observable(b).unwrap()));
            }
            let a = s.observable("A").unwrap();
            let c = s.observable("C").unwrap();
            assert!(!a.commutes_with(c), "{name}: A, C must not commute");
            let b = s.observable("B").unwrap();
            let d = s.observable("D").unwrap();
            assert!(!b.commutes_with(d), "{name}: B, D must not commute");
        }
    }

    #[test]
    fn product_set_matrices_are_dichotomic() {
        let s = load_set("chsh_product").unwrap();
        for l in ["B", "D"] {
            let op = s.observable(l).unwrap().operator();
            assert!(op.is_hermitian(1e-15));
            assert!(op.matmul(&op).max_abs_diff(&ComplexMatrix::identity(4)) < 1e-12);
        }
        // B = (1⊗σx + σz⊗σz)/√2
        let b = pauli::id().kron(&pauli::x()).add(&pauli::z().kron(&pauli::z())).scale_real(FRAC_1_SQRT_2);
        assert!(s.observable("B").unwrap().operator().max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn mermin_peres_products() {
        let s = load_set("mermin_peres").unwrap();
        let id = ComplexMatrix::identity(4);
        for (ctx, sign) in MERMIN_PERES_CONTEXTS.iter().zip(MERMIN_PERES_SIGNS) {
            let prod = ctx.iter().map(|l| s.observable(l).unwrap().operator()).reduce(|acc, m| acc.matmul(&m)).unwrap();
            assert!(prod.max_abs_diff(&id.scale_real(sign)) < 1e-12, "{ctx:?}");
            for i in 0..3 {
                for j in 0..3 {
                    assert!(s.observable(ctx[i]).unwrap().commutes_with(s.observable(ctx[j]).unwrap()));
                }
            }
        }
    }

    #[test]
    fn kcbs_exactly_adjacent_pairs_commute() {
        let s = load_set("kcbs_pentagram").unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i == j {
                    continue;
                }
                let adjacent = (i + 1) % 5 == j || (j + 1) % 5 == i;
                let commute = s.observable(KCBS_LABELS[i]).unwrap().commutes_with(s.observable(KCBS_LABELS[j]).unwrap());
                assert_eq!(commute, adjacent, "pair {i},{j}");
            }
        }
    }

    #[test]
    fn kcbs_optimal_state_is_the_symmetry_axis() {
        let v = kcbs_optimal_vector().unwrap();
        assert!((v[2].norm() - 1.0).abs() < 1e-12);
        let set = kcbs_pentagram().unwrap();
        let (vals, _) = kcbs_sum_operator(&set).unwrap().hermitian_eigen();
        assert!((vals[0] - (5.0 - 4.0 * 5f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn fig2_state_has_zero_zz_mean() {
        let s = load_state("fig2_psi").unwrap().state;
        let zz = Observable::from_operator("ZZ", &pauli::z().kron(&pauli::z())).unwrap();
        assert!(s.expectation(&zz.operator()).abs() < 1e-15);
    }

    /// The trapped-ion gate sequence applied to |11⟩ prepares the same state up to a phase.
    #[test]
    fn fig2_state_from_gate_sequence() {
        let expm_pauli_sum = |theta: f64, gen: &ComplexMatrix| {
            // exp(-i θ/2 G) for G² = 1 (MS) or via eigendecomposition in general.
            let (vals, vecs) = gen.hermitian_eigen();
            let mut u = ComplexMatrix::zeros(gen.dim());
            for (l, v) in vals.iter().zip(&vecs) {
                u = u.add(&ComplexMatrix::outer(v).scale(C64::from_polar(1.0, -theta / 2.0 * l)));
            }
            u
        };
        let sigma = |phi: f64| pauli::x().scale_real(phi.cos()).add(&pauli::y().scale_real(phi.sin()));
        let ms = |theta: f64, phi: f64| expm_pauli_sum(theta, &sigma(phi).kron(&sigma(phi)));
        let collective = |theta: f64, phi: f64| {
            let g = sigma(phi).kron(&pauli::id()).add(&pauli::id().kron(&sigma(phi)));
            expm_pauli_sum(theta, &g)
        };
        let u = ms(-PI / 2.0, FRAC_PI_4).matmul(&ms(-PI / 2.0, 0.0)).matmul(&collective(PI / 2.0, 0.0));
        let psi = u.apply(&crate::linalg::basis_vector(4, 3));
        let target = load_state("fig2_psi").unwrap().state;
        assert!((target.overlap_with(&psi) - 1.0).abs() < 1e-12);
        let _ = I;
    }

    #[test]
    fn chsh_entangled_value() {
        let s = load_set("chsh_entangled").unwrap();
        let phi = load_state("phi_plus").unwrap().state;
        let m = sequence_mean(&phi, &s, &MeasurementSequence::parse("A,B").unwrap()).unwrap();
        assert!((m - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn custom_set_rejects_non_commuting_context() {
        let x = Observable::from_operator("X", &pauli::x()).unwrap();
        let z = Observable::from_operator("Z", &pauli::z()).unwrap();
        let err = ObservableSet::new("bad", InequalityKind::Chsh, vec![x, z], vec![pair("X", "Z")]);
        assert!(matches!(err, Err(Error::InvalidMatrix(_))));
    }

    #[test]
    fn set_json_round_trip() {
        let s = load_set("mermin_peres").unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: ObservableSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back.labels(), s.labels());
        assert_eq!(back.compatibility_edges(), s.compatibility_edges());
    }
}
