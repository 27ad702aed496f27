//! Contextual model that reproduces every quantum prediction for sequences.
//!
//! The hidden state holds one parameter `λ^X ∈ [0,1)` per observable and a
//! unit vector `ψ`. Measuring `X` computes `q = ⟨ψ|Π₋|ψ⟩`, answers −1 iff
//! `λ^X < q`, rescales `λ^X` back to `[0,1)` and collapses `ψ`.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{DistributionKind, HiddenState, HvDistribution, HvModel};
use crate::catalog::ObservableSet;
use crate::engine::Observables;
use crate::error::{Error, Result};
use crate::linalg::{self, CVector};
use crate::sequence::Outcome;
use crate::state::QuantumState;
use crate::tolerances::TOLERANCES;

/// Grid points per parameter used when conditioning, `λ_g = (g + ½)/G`.
pub const GRID_SIZE: u32 = 1024;

/// Largest representable value below one.
const LAMBDA_MAX: f64 = 1.0 - f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmHiddenState {
    /// One parameter per model label, in the model's label order.
    pub lambdas: Vec<f64>,
    #[serde(with = "linalg::vector_serde")]
    pub psi: CVector,
}

/// One pure component of the ensemble with optional grid constraints on λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmComponent {
    #[serde(with = "linalg::vector_serde")]
    pub psi: CVector,
    pub weight: f64,
    /// Allowed grid indices for labels that have been conditioned on.
    pub constraints: BTreeMap<String, Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmEnsemble {
    pub components: Vec<QmComponent>,
}

impl QmEnsemble {
    /// `Σ w_i |ψ_i⟩⟨ψ_i|`.
    pub fn density_matrix(&self) -> linalg::ComplexMatrix {
        let dim = self.components[0].psi.len();
        self.components
            .iter()
            .fold(linalg::ComplexMatrix::zeros(dim), |acc, c| acc.add(&linalg::ComplexMatrix::outer(&c.psi).scale_real(c.weight)))
    }
}

#[derive(Debug, Clone)]
pub struct QmReproducingModel {
    set: ObservableSet,
    labels: Vec<String>,
}

fn grid_value(g: u32) -> f64 {
    (g as f64 + 0.5) / GRID_SIZE as f64
}

/// Clamps numerically forced outcomes to exactly 0 or 1.
fn clamp_q(q: f64) -> f64 {
    if q < TOLERANCES.zero_probability {
        0.0
    } else if q > 1.0 - TOLERANCES.zero_probability {
        1.0
    } else {
        q
    }
}

/// Finite pure-state decomposition of `state` with uniform λ parameters.
pub fn qmhv_distribution_for(state: &QuantumState) -> Result<HvDistribution> {
    let components = match state.vector() {
        Some(v) => vec![QmComponent { psi: v.clone(), weight: 1.0, constraints: BTreeMap::new() }],
        None => {
            let (vals, vecs) = state.density_matrix().hermitian_eigen();
            let kept: Vec<(f64, CVector)> =
                vals.into_iter().zip(vecs).filter(|(w, _)| *w > TOLERANCES.zero_probability).collect();
            let total: f64 = kept.iter().map(|(w, _)| w).sum();
            kept.into_iter().map(|(w, v)| QmComponent { psi: v, weight: w / total, constraints: BTreeMap::new() }).collect()
        }
    };
    Ok(HvDistribution { id: "qm_ensemble".into(), kind: DistributionKind::QmEnsemble(QmEnsemble { components }) })
}

/// Fraction of hidden states prepared for the singlet with `v(B₁) ≠ v(B₂|A₁B₂)`,
/// for `A = σz⊗1` and `B = −1⊗σz`. Any positive value shows the model is contextual.
pub fn singlet_witness_fraction(n: u64, rng: &mut dyn RngCore) -> Result<f64> {
    let set = crate::catalog::load_set("singlet_witness")?;
    let dist = qmhv_distribution_for(&crate::catalog::load_state("singlet")?.state)?;
    super::sampled_flip_fraction(&QmReproducingModel::new(set), &dist, &["A"], "B", n, rng)
}

impl QmReproducingModel {
    pub fn new(set: ObservableSet) -> Self {
        let labels = set.labels().into_iter().map(String::from).collect();
        Self { set, labels }
    }

    pub fn set(&self) -> &ObservableSet {
        &self.set
    }

    fn index(&self, label: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    fn ensemble<'a>(&self, dist: &'a HvDistribution) -> Result<&'a QmEnsemble> {
        match &dist.kind {
            DistributionKind::QmEnsemble(e) => {
                if e.components.iter().any(|c| c.psi.len() != self.set.dim()) {
                    return Err(Error::DimensionMismatch { expected: self.set.dim(), found: e.components[0].psi.len() });
                }
                Ok(e)
            }
            DistributionKind::Finite { .. } => {
                Err(Error::InvalidDistribution("qm_reproducing model needs a state ensemble".into()))
            }
        }
    }

    /// `q^X = ⟨ψ|Π₋^X|ψ⟩` before clamping.
    fn minus_weight(&self, label: &str, psi: &CVector) -> Result<f64> {
        let obs = self.set.observable(label).ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        Ok(linalg::norm_sqr(&obs.minus_projector().apply(psi)))
    }
}

/// One measurement on an explicit `(λ, ψ)` pair, returning the outcome and updated pair.
pub fn qmhv_measure(lambda: f64, psi: &CVector, minus_projector: &linalg::ComplexMatrix) -> Result<(Outcome, f64, CVector)> {
    let mut psi = psi.clone();
    let (outcome, lambda) = measure_in_place(lambda, &mut psi, minus_projector)?;
    Ok((outcome, lambda, psi))
}

fn measure_in_place(lambda: f64, psi: &mut CVector, minus_projector: &linalg::ComplexMatrix) -> Result<(Outcome, f64)> {
    let w = minus_projector.apply(psi);
    let q = clamp_q(linalg::norm_sqr(&w));
    let (outcome, lambda) = if lambda < q {
        *psi = w;
        (Outcome::Minus, lambda / q)
    } else {
        *psi -= &w;
        (Outcome::Plus, (lambda - q) / (1.0 - q))
    };
    let norm = linalg::norm_sqr(psi).sqrt();
    if norm < 1e-150 {
        return Err(Error::DegenerateUpdate(format!("outcome {outcome}")));
    }
    psi.unscale_mut(norm);
    Ok((outcome, lambda.clamp(0.0, LAMBDA_MAX)))
}

impl HvModel for QmReproducingModel {
    fn id(&self) -> &str {
        "qm_reproducing"
    }

    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn supports(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    fn measure(&self, hidden: &mut HiddenState, label: &str) -> Result<Outcome> {
        let HiddenState::QmReproducing(s) = hidden else {
            return Err(Error::InvalidDistribution("qm_reproducing model needs a (λ, ψ) state".into()));
        };
        let i = self.index(label)?;
        let obs = &self.set.observables()[i];
        let (outcome, lambda) = measure_in_place(s.lambdas[i], &mut s.psi, obs.minus_projector())?;
        s.lambdas[i] = lambda;
        Ok(outcome)
    }

    fn prepare(&self, dist: &HvDistribution, rng: &mut dyn RngCore) -> Result<HiddenState> {
        let e = self.ensemble(dist)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = e.components.last().expect("ensemble is nonempty");
        for c in &e.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        let lambdas = if chosen.constraints.is_empty() {
            (0..self.labels.len()).map(|_| rng.gen::<f64>()).collect()
        } else {
            self.labels
                .iter()
                .map(|l| match chosen.constraints.get(l) {
                    Some(allowed) => grid_value(allowed[rng.gen_range(0..allowed.len())]),
                    None => rng.gen::<f64>(),
                })
                .collect()
        };
        Ok(HiddenState::QmReproducing(QmHiddenState { lambdas, psi: chosen.psi.clone() }))
    }

    fn exact_support(&self, _dist: &HvDistribution, _steps: &[String]) -> Result<Option<Vec<(HiddenState, f64)>>> {
        Ok(None)
    }

    fn condition_on_first(&self, dist: &HvDistribution, label: &str, outcome: Outcome) -> Result<HvDistribution> {
        let e = self.ensemble(dist)?;
        self.index(label)?;
        let mut components = Vec::new();
        for c in &e.components {
            let q = clamp_q(self.minus_weight(label, &c.psi)?);
            let all: Vec<u32> = (0..GRID_SIZE).collect();
            let before = c.constraints.get(label).unwrap_or(&all);
            let after: Vec<u32> =
                before.iter().copied().filter(|&g| (grid_value(g) < q) == (outcome == Outcome::Minus)).collect();
            if after.is_empty() {
                continue;
            }
            let mut constraints = c.constraints.clone();
            let weight = c.weight * after.len() as f64 / before.len() as f64;
            constraints.insert(label.to_string(), after);
            components.push(QmComponent { psi: c.psi.clone(), weight, constraints });
        }
        let mass: f64 = components.iter().map(|c| c.weight).sum();
        if mass <= TOLERANCES.zero_probability {
            return Err(Error::ZeroProbabilityCondition);
        }
        components.iter_mut().for_each(|c| c.weight /= mass);
        Ok(HvDistribution {
            id: format!("{}|{label}1={outcome}", dist.id),
            kind: DistributionKind::QmEnsemble(QmEnsemble { components }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{load_set, load_state};
    use crate::engine::Observable;
    use crate::linalg::{pauli, ComplexMatrix};
    use crate::sequence::MeasurementSequence;
    use crate::system::{estimate, Estimator, MeasurementSystem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eigenstate_forces_plus_and_keeps_lambda() {
        let a = Observable::from_operator("A", &pauli::z().kron(&pauli::id())).unwrap();
        let psi = linalg::basis_vector(4, 0);
        let (o, l, p) = qmhv_measure(0.3, &psi, a.minus_projector()).unwrap();
        assert_eq!((o, l), (Outcome::Plus, 0.3));
        assert!((p - psi).norm() < 1e-15);
    }

    #[test]
    fn bell_state_update() {
        let a = Observable::from_operator("A", &pauli::z().kron(&pauli::id())).unwrap();
        let phi = load_state("phi_plus").unwrap().state;
        let (o, l, p) = qmhv_measure(0.25, phi.vector().unwrap(), a.minus_projector()).unwrap();
        assert_eq!(o, Outcome::Minus);
        assert!((l - 0.5).abs() < 1e-15);
        assert!((p - linalg::basis_vector(4, 3)).norm() < 1e-12);
    }

    #[test]
    fn singlet_witness_is_about_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = singlet_witness_fraction(10_000, &mut rng).unwrap();
        assert!((f - 0.5).abs() < 0.03, "{f}");
    }

    #[test]
    fn tie_gives_plus() {
        let a = Observable::from_operator("A", &pauli::z().kron(&pauli::id())).unwrap();
        let phi = load_state("phi_plus").unwrap().state;
        let q = linalg::norm_sqr(&a.minus_projector().apply(phi.vector().unwrap()));
        assert_eq!(qmhv_measure(q, phi.vector().unwrap(), a.minus_projector()).unwrap().0, Outcome::Plus);
    }

    #[test]
    fn minus_frequency_matches_q() {
        let a = Observable::from_operator("A", &pauli::x().kron(&pauli::id())).unwrap();
        let psi = load_state("fig2_psi").unwrap().state.vector().unwrap().clone();
        let q = linalg::norm_sqr(&a.minus_projector().apply(&psi));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let minus = (0..n).filter(|_| qmhv_measure(rng.gen(), &psi, a.minus_projector()).unwrap().0 == Outcome::Minus).count();
        let sigma = (q * (1.0 - q) / n as f64).sqrt();
        assert!((minus as f64 / n as f64 - q).abs() < 4.0 * sigma);
    }

    #[test]
    fn mixed_ensemble_reconstructs_density() {
        let d = qmhv_distribution_for(&QuantumState::maximally_mixed(4).unwrap()).unwrap();
        let DistributionKind::QmEnsemble(e) = &d.kind else { panic!() };
        assert_eq!(e.components.len(), 4);
        assert!(e.components.iter().all(|c| (c.weight - 0.25).abs() < 1e-12));
        assert!(e.density_matrix().max_abs_diff(&ComplexMatrix::identity(4).scale_real(0.25)) < 1e-12);
        let p = qmhv_distribution_for(&load_state("singlet").unwrap().state).unwrap();
        let DistributionKind::QmEnsemble(e) = &p.kind else { panic!() };
        assert_eq!(e.components.len(), 1);
    }

    #[test]
    fn grid_conditioning_fixes_the_conditioned_outcome() {
        let set = load_set("chsh_entangled").unwrap();
        let model = QmReproducingModel::new(set);
        let dist = qmhv_distribution_for(&load_state("phi_plus").unwrap().state).unwrap();
        let cond = model.condition_on_first(&dist, "B", Outcome::Plus).unwrap();
        let sys = super::super::HvSystem::new(std::sync::Arc::new(model.clone()), cond.clone());
        let d =
            estimate(&sys, &MeasurementSequence::parse("B").unwrap(), Estimator::MonteCarlo { n_trials: 5000, seed: 1 }).unwrap();
        assert_eq!(d.sequence_mean(), 1.0);
        assert!(sys.exact(&MeasurementSequence::parse("B").unwrap()).unwrap().is_none());
        assert_eq!(model.condition_on_first(&cond, "B", Outcome::Minus).unwrap_err(), Error::ZeroProbabilityCondition);
    }

    #[test]
    fn hidden_state_json_round_trip() {
        let model = QmReproducingModel::new(load_set("chsh_entangled").unwrap());
        let dist = qmhv_distribution_for(&load_state("fig2_psi").unwrap().state).unwrap();
        let h = model.prepare(&dist, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let back: HiddenState = serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
        assert_eq!(back, h);
    }
}
