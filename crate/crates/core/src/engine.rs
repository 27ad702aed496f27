//! Exact and sampled quantum mechanics of sequential dichotomic measurements.
//!
//! Every observable is stored through its `+1` projector `Π₊`; the `−1`
//! projector is `1 − Π₊`. A measurement with outcome `±1` maps
//! `ρ ↦ Π± ρ Π± / tr(Π± ρ)`. Branch tables enumerate all outcome paths of a
//! sequence and are the exact oracle for every sequence statistic.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::sequence::{outcomes_to_index, MeasurementSequence, Outcome, OutcomeDistribution, OutcomeRecord};
use crate::state::QuantumState;
use crate::tolerances::TOLERANCES;

/// A ±1-valued observable `A = 2Π₊ − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObservableDoc", into = "ObservableDoc")]
pub struct Observable {
    label: String,
    plus: ComplexMatrix,
    minus: ComplexMatrix,
}

impl Observable {
    /// Builds the observable from its operator, which must be Hermitian and square to one.
    pub fn from_operator(label: impl Into<String>, operator: &ComplexMatrix) -> Result<Self> {
        operator.verify_hermitian()?;
        let dim = operator.dim();
        let id = ComplexMatrix::identity(dim);
        if operator.matmul(operator).max_abs_diff(&id) > TOLERANCES.projector {
            return Err(Error::InvalidMatrix("observable does not square to the identity".into()));
        }
        let plus = id.add(operator).scale_real(0.5);
        Self::from_plus_projector(label, plus)
    }

    pub fn from_plus_projector(label: impl Into<String>, plus: ComplexMatrix) -> Result<Self> {
        plus.verify_projector()?;
        let minus = ComplexMatrix::identity(plus.dim()).sub(&plus);
        Ok(Self { label: label.into(), plus, minus })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.plus.dim()
    }

    pub fn plus_projector(&self) -> &ComplexMatrix {
        &self.plus
    }

    pub fn minus_projector(&self) -> &ComplexMatrix {
        &self.minus
    }

    pub fn projector(&self, outcome: Outcome) -> &ComplexMatrix {
        match outcome {
            Outcome::Plus => &self.plus,
            Outcome::Minus => &self.minus,
        }
    }

    /// `A = Π₊ − Π₋`
    pub fn operator(&self) -> ComplexMatrix {
        self.plus.sub(&self.minus)
    }

    pub fn commutes_with(&self, other: &Observable) -> bool {
        self.plus.commutator_norm(&other.plus) < TOLERANCES.commutation
    }

    pub fn relabeled(&self, label: impl Into<String>) -> Self {
        Self { label: label.into(), ..self.clone() }
    }
}

#[derive(Serialize, Deserialize)]
struct ObservableDoc {
    label: String,
    dim: usize,
    operator: ComplexMatrix,
}

impl From<Observable> for ObservableDoc {
    fn from(o: Observable) -> Self {
        ObservableDoc { dim: o.dim(), operator: o.operator(), label: o.label }
    }
}

impl TryFrom<ObservableDoc> for Observable {
    type Error = Error;
    fn try_from(doc: ObservableDoc) -> Result<Self> {
        if doc.operator.dim() != doc.dim {
            return Err(Error::DimensionMismatch { expected: doc.dim, found: doc.operator.dim() });
        }
        Observable::from_operator(doc.label, &doc.operator)
    }
}

/// Anything that resolves observable labels.
pub trait Observables {
    fn observable(&self, label: &str) -> Option<&Observable>;

    fn resolve(&self, seq: &MeasurementSequence) -> Result<Vec<&Observable>> {
        seq.steps().iter().map(|l| self.observable(l).ok_or_else(|| Error::UnknownLabel(l.clone()))).collect()
    }
}

impl Observables for BTreeMap<String, Observable> {
    fn observable(&self, label: &str) -> Option<&Observable> {
        self.get(label)
    }
}

impl Observables for [Observable] {
    fn observable(&self, label: &str) -> Option<&Observable> {
        self.iter().find(|o| o.label() == label)
    }
}

impl Observables for Vec<Observable> {
    fn observable(&self, label: &str) -> Option<&Observable> {
        self.as_slice().observable(label)
    }
}

/// Born probability of `outcome` and the Lüders post-measurement state.
pub fn lueders_update(state: &QuantumState, obs: &Observable, outcome: Outcome) -> Result<(f64, QuantumState)> {
    if state.dim() != obs.dim() {
        return Err(Error::DimensionMismatch { expected: obs.dim(), found: state.dim() });
    }
    let (p, projected) = state.project_unnormalized(obs.projector(outcome));
    if p < TOLERANCES.zero_probability {
        return Err(Error::ZeroProbabilityBranch { outcome: outcome.value(), probability: p });
    }
    Ok((p, QuantumState::from_projected(p, projected)))
}

/// One outcome path through a sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub outcomes: Vec<Outcome>,
    pub probability: f64,
    pub post_state: QuantumState,
}

/// All outcome paths of a sequence with non-negligible probability.
///
/// Paths whose probability falls below the pruning threshold at any step are
/// omitted, so [`BranchTable::probability`] reports zero for them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchTable {
    pub sequence: MeasurementSequence,
    pub branches: Vec<Branch>,
}

impl BranchTable {
    pub fn total_probability(&self) -> f64 {
        self.branches.iter().map(|b| b.probability).sum()
    }

    pub fn probability(&self, outcomes: &[Outcome]) -> f64 {
        self.branches.iter().find(|b| b.outcomes == outcomes).map_or(0.0, |b| b.probability)
    }

    pub fn distribution(&self) -> OutcomeDistribution {
        let mut probs = vec![0.0; 1 << self.sequence.len()];
        for b in &self.branches {
            probs[outcomes_to_index(&b.outcomes)] = b.probability;
        }
        OutcomeDistribution::exact(self.sequence.clone(), probs).expect("branch table has matching length")
    }
}

fn check_dims(state: &QuantumState, observables: &[&Observable]) -> Result<()> {
    for o in observables {
        if o.dim() != state.dim() {
            return Err(Error::DimensionMismatch { expected: o.dim(), found: state.dim() });
        }
    }
    Ok(())
}

/// Enumerates every outcome path of `seq` by repeated Lüders updates.
pub fn branch_table<O: Observables + ?Sized>(
    state: &QuantumState,
    observables: &O,
    seq: &MeasurementSequence,
) -> Result<BranchTable> {
    if seq.len() > TOLERANCES.max_sequence_len {
        return Err(Error::SequenceTooLong { len: seq.len(), max: TOLERANCES.max_sequence_len });
    }
    let obs = observables.resolve(seq)?;
    check_dims(state, &obs)?;
    let mut branches = Vec::new();
    let mut path = Vec::with_capacity(seq.len());
    expand(state, 1.0, &obs, &mut path, &mut branches);
    Ok(BranchTable { sequence: seq.clone(), branches })
}

fn expand(state: &QuantumState, prob: f64, rest: &[&Observable], path: &mut Vec<Outcome>, out: &mut Vec<Branch>) {
    let Some((first, tail)) = rest.split_first() else {
        out.push(Branch { outcomes: path.clone(), probability: prob, post_state: state.clone() });
        return;
    };
    for outcome in Outcome::BOTH {
        let (p, projected) = state.project_unnormalized(first.projector(outcome));
        if p < TOLERANCES.zero_probability {
            continue;
        }
        let next = QuantumState::from_projected(p, projected);
        path.push(outcome);
        expand(&next, prob * p, tail, path, out);
        path.pop();
    }
}

/// Exact outcome distribution of a sequence.
pub fn exact_distribution<O: Observables + ?Sized>(
    state: &QuantumState,
    observables: &O,
    seq: &MeasurementSequence,
) -> Result<OutcomeDistribution> {
    Ok(branch_table(state, observables, seq)?.distribution())
}

/// `⟨A₁B₂…⟩`, the mean of the product of all outcomes.
pub fn sequence_mean<O: Observables + ?Sized>(state: &QuantumState, observables: &O, seq: &MeasurementSequence) -> Result<f64> {
    let table = branch_table(state, observables, seq)?;
    Ok(table.branches.iter().map(|b| b.probability * b.outcomes.iter().map(|o| o.sign()).product::<f64>()).sum())
}

/// `⟨X_k|S⟩` for the 1-based `position` k.
pub fn conditional_mean<O: Observables + ?Sized>(
    state: &QuantumState,
    observables: &O,
    seq: &MeasurementSequence,
    position: usize,
) -> Result<f64> {
    if position == 0 || position > seq.len() {
        return Err(Error::PositionOutOfRange { position, len: seq.len() });
    }
    let table = branch_table(state, observables, seq)?;
    Ok(table.branches.iter().map(|b| b.probability * b.outcomes[position - 1].sign()).sum())
}

/// Draws one outcome path with the branch-table distribution.
pub fn sample_sequence<O: Observables + ?Sized, R: Rng + ?Sized>(
    state: &QuantumState,
    observables: &O,
    seq: &MeasurementSequence,
    rng: &mut R,
) -> Result<OutcomeRecord> {
    let obs = observables.resolve(seq)?;
    check_dims(state, &obs)?;
    Ok(sample_resolved(state, &obs, seq, rng))
}

pub(crate) fn sample_resolved<R: Rng + ?Sized>(
    state: &QuantumState,
    obs: &[&Observable],
    seq: &MeasurementSequence,
    rng: &mut R,
) -> OutcomeRecord {
    OutcomeRecord { sequence: seq.clone(), values: sample_outcomes(state, obs, rng) }
}

pub(crate) fn sample_outcomes<R: Rng + ?Sized>(state: &QuantumState, obs: &[&Observable], rng: &mut R) -> Vec<Outcome> {
    let mut current = state.clone();
    let mut values = Vec::with_capacity(obs.len());
    for o in obs {
        let (p_plus, plus) = current.project_unnormalized(o.plus_projector());
        let u: f64 = rng.gen();
        // Pruned branches can never be drawn.
        let take_plus = p_plus >= 1.0 - TOLERANCES.zero_probability || (p_plus >= TOLERANCES.zero_probability && u < p_plus);
        if take_plus {
            current = QuantumState::from_projected(p_plus, plus);
            values.push(Outcome::Plus);
        } else {
            let (p_minus, minus) = current.project_unnormalized(o.minus_projector());
            current = QuantumState::from_projected(p_minus, minus);
            values.push(Outcome::Minus);
        }
    }
    values
}
