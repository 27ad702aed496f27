//! Hidden-variable models behind the same interface as the quantum engine.
//!
//! A model is a deterministic map `(hidden state, label) -> (±1, new hidden
//! state)`. All randomness lives in preparing the hidden state from a
//! distribution.

pub mod assignment;
pub mod counterexamples;
pub mod locking;
pub mod qmhv;
pub mod registry;

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::{outcomes_to_index, MeasurementSequence, Outcome, OutcomeDistribution, OutcomeRecord};
use crate::system::MeasurementSystem;
use crate::tolerances::TOLERANCES;

pub use assignment::{AssignmentModel, AssignmentState};
pub use counterexamples::{FirstMeasurementModel, FirstMeasurementState, ResamplerModel, ResamplerState};
pub use locking::{LockingModel, LockingState, Slot};
pub use qmhv::{QmComponent, QmEnsemble, QmHiddenState, QmReproducingModel, GRID_SIZE};

/// The hidden variable λ of any built-in model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum HiddenState {
    Locking(LockingState),
    QmReproducing(QmHiddenState),
    Assignment(AssignmentState),
    Resampler(ResamplerState),
    FirstMeasurement(FirstMeasurementState),
}

/// A distribution `p(λ)` over hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HvDistribution {
    pub id: String,
    pub kind: DistributionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DistributionKind {
    Finite { support: Vec<(HiddenState, f64)> },
    QmEnsemble(QmEnsemble),
}

impl HvDistribution {
    pub fn finite(id: impl Into<String>, support: Vec<(HiddenState, f64)>) -> Result<Self> {
        let total: f64 = support.iter().map(|(_, w)| w).sum();
        if support.is_empty() || (total - 1.0).abs() > TOLERANCES.normalization || support.iter().any(|(_, w)| *w < 0.0) {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
        }
        Ok(Self { id: id.into(), kind: DistributionKind::Finite { support } })
    }

    pub fn support(&self) -> Option<&[(HiddenState, f64)]> {
        match &self.kind {
            DistributionKind::Finite { support } => Some(support),
            DistributionKind::QmEnsemble(_) => None,
        }
    }

    /// Draws one support point of a finite distribution.
    pub(crate) fn draw_finite(&self, rng: &mut dyn RngCore) -> Result<&HiddenState> {
        let support = self.support().ok_or_else(|| Error::InvalidDistribution(format!("`{}` is not finite", self.id)))?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (h, w) in support {
            acc += w;
            if u < acc {
                return Ok(h);
            }
        }
        Ok(&support.last().expect("support is nonempty").0)
    }
}

/// The prepare/measure contract every model satisfies.
pub trait HvModel: Send + Sync + Debug {
    fn id(&self) -> &str;

    fn labels(&self) -> Vec<String>;

    fn supports(&self, label: &str) -> bool {
        self.labels().iter().any(|l| l == label)
    }

    /// Deterministic response of the hidden state to measuring `label`.
    fn measure(&self, hidden: &mut HiddenState, label: &str) -> Result<Outcome>;

    /// Draws a hidden state ready for sequences up to the enumeration limit.
    fn prepare(&self, dist: &HvDistribution, rng: &mut dyn RngCore) -> Result<HiddenState> {
        dist.draw_finite(rng).cloned()
    }

    /// A weighted finite list of hidden states that reproduces `dist` exactly
    /// for the sequence `steps`, if one exists.
    fn exact_support(&self, dist: &HvDistribution, steps: &[String]) -> Result<Option<Vec<(HiddenState, f64)>>> {
        let _ = steps;
        Ok(dist.support().map(<[_]>::to_vec))
    }

    /// Bayes update of `dist` on the event that `label`, measured first, gives `outcome`.
    fn condition_on_first(&self, dist: &HvDistribution, label: &str, outcome: Outcome) -> Result<HvDistribution> {
        let support = self.exact_support(dist, &[label.to_string()])?.ok_or_else(|| Error::ExactUnavailable(dist.id.clone()))?;
        let mut kept = Vec::new();
        for (h, w) in support {
            let mut probe = h.clone();
            if self.measure(&mut probe, label)? == outcome {
                kept.push((h, w));
            }
        }
        let mass: f64 = kept.iter().map(|(_, w)| w).sum();
        if mass <= TOLERANCES.zero_probability {
            return Err(Error::ZeroProbabilityCondition);
        }
        kept.iter_mut().for_each(|(_, w)| *w /= mass);
        Ok(HvDistribution { id: format!("{}|{label}1={outcome}", dist.id), kind: DistributionKind::Finite { support: kept } })
    }
}

fn check_supported(model: &dyn HvModel, steps: &[String]) -> Result<()> {
    for l in steps {
        if !model.supports(l) {
            return Err(Error::UnsupportedLabel { label: l.clone(), system: model.id().to_string() });
        }
    }
    Ok(())
}

/// Measures `steps` in order on a copy of `hidden`.
pub fn run_from(model: &dyn HvModel, hidden: &HiddenState, steps: &[String]) -> Result<Vec<Outcome>> {
    let mut h = hidden.clone();
    steps.iter().map(|l| model.measure(&mut h, l)).collect()
}

/// Prepares a hidden state and threads it through the sequence.
pub fn run_hv_sequence(
    model: &dyn HvModel,
    dist: &HvDistribution,
    seq: &MeasurementSequence,
    rng: &mut dyn RngCore,
) -> Result<OutcomeRecord> {
    check_supported(model, seq.steps())?;
    let hidden = model.prepare(dist, rng)?;
    OutcomeRecord::new(seq.clone(), run_from(model, &hidden, seq.steps())?)
}

pub fn condition_on_first(model: &dyn HvModel, dist: &HvDistribution, label: &str, outcome: Outcome) -> Result<HvDistribution> {
    check_supported(model, &[label.to_string()])?;
    model.condition_on_first(dist, label, outcome)
}

/// Monte Carlo estimate of the fraction of prepared hidden states for which
/// `target` measured alone differs from `target` measured after `disturbers`.
pub fn sampled_flip_fraction(
    model: &dyn HvModel,
    dist: &HvDistribution,
    disturbers: &[&str],
    target: &str,
    n: u64,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let alone = vec![target.to_string()];
    let mut after: Vec<String> = disturbers.iter().map(|s| s.to_string()).collect();
    after.push(target.to_string());
    check_supported(model, &after)?;
    let mut flips = 0u64;
    for _ in 0..n {
        let h = model.prepare(dist, rng)?;
        let a = run_from(model, &h, &alone)?[0];
        let b = *run_from(model, &h, &after)?.last().expect("nonempty");
        if a != b {
            flips += 1;
        }
    }
    Ok(flips as f64 / n as f64)
}

/// A model together with a distribution, usable wherever a quantum system is.
#[derive(Debug, Clone)]
pub struct HvSystem {
    model: Arc<dyn HvModel>,
    dist: HvDistribution,
}

impl HvSystem {
    pub fn new(model: Arc<dyn HvModel>, dist: HvDistribution) -> Self {
        Self { model, dist }
    }

    pub fn model(&self) -> &dyn HvModel {
        self.model.as_ref()
    }

    pub fn distribution(&self) -> &HvDistribution {
        &self.dist
    }

    /// The same model under the distribution conditioned on a first measurement.
    pub fn conditioned(&self, label: &str, outcome: Outcome) -> Result<Self> {
        Ok(Self { model: self.model.clone(), dist: condition_on_first(self.model.as_ref(), &self.dist, label, outcome)? })
    }
}

impl MeasurementSystem for HvSystem {
    fn name(&self) -> String {
        format!("hv:{}:{}", self.model.id(), self.dist.id)
    }

    fn labels(&self) -> Vec<String> {
        self.model.labels()
    }

    fn supports(&self, label: &str) -> bool {
        self.model.supports(label)
    }

    fn exact(&self, seq: &MeasurementSequence) -> Result<Option<OutcomeDistribution>> {
        check_supported(self.model.as_ref(), seq.steps())?;
        let Some(support) = self.model.exact_support(&self.dist, seq.steps())? else {
            return Ok(None);
        };
        let mut probs = vec![0.0; 1 << seq.len()];
        for (h, w) in &support {
            if *w == 0.0 {
                continue;
            }
            probs[outcomes_to_index(&run_from(self.model.as_ref(), h, seq.steps())?)] += w;
        }
        OutcomeDistribution::exact(seq.clone(), probs).map(Some)
    }

    fn sample(&self, seq: &MeasurementSequence, rng: &mut ChaCha8Rng) -> Result<Vec<Outcome>> {
        let h = self.model.prepare(&self.dist, rng)?;
        run_from(self.model.as_ref(), &h, seq.steps())
    }

    fn sample_counts(&self, seq: &MeasurementSequence, n: u64, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
        check_supported(self.model.as_ref(), seq.steps())?;
        let mut counts = vec![0u64; 1 << seq.len()];
        for _ in 0..n {
            let mut h = self.model.prepare(&self.dist, rng)?;
            let mut index = 0usize;
            for (i, l) in seq.steps().iter().enumerate() {
                if self.model.measure(&mut h, l)? == Outcome::Minus {
                    index |= 1 << i;
                }
            }
            counts[index] += 1;
        }
        Ok(counts)
    }

    fn flip_probability(&self, disturbers: &[&str], target: &str) -> Result<Option<f64>> {
        let alone = vec![target.to_string()];
        let mut after: Vec<String> = disturbers.iter().map(|s| s.to_string()).collect();
        after.push(target.to_string());
        check_supported(self.model.as_ref(), &after)?;
        let Some(support) = self.model.exact_support(&self.dist, &after)? else {
            return Ok(None);
        };
        let mut p = 0.0;
        for (h, w) in &support {
            let a = run_from(self.model.as_ref(), h, &alone)?[0];
            let b = *run_from(self.model.as_ref(), h, &after)?.last().expect("nonempty");
            if a != b {
                p += w;
            }
        }
        Ok(Some(p))
    }
}
