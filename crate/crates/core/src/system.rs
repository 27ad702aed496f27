//! A common interface over quantum, noisy and hidden-variable systems.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::ObservableSet;
use crate::engine::{self, Observables};
use crate::error::{Error, Result};
use crate::sequence::{outcomes_to_index, MeasurementSequence, Outcome, OutcomeDistribution, OutcomeRecord};
use crate::state::QuantumState;

/// Anything that can be asked for the statistics of a measurement sequence.
pub trait MeasurementSystem: Send + Sync {
    fn name(&self) -> String;

    fn labels(&self) -> Vec<String>;

    fn supports(&self, label: &str) -> bool {
        self.labels().iter().any(|l| l == label)
    }

    /// Exact outcome distribution, or `None` when the system can only be sampled.
    fn exact(&self, seq: &MeasurementSequence) -> Result<Option<OutcomeDistribution>>;

    /// One run of the sequence.
    fn sample(&self, seq: &MeasurementSequence, rng: &mut ChaCha8Rng) -> Result<Vec<Outcome>>;

    /// Outcome counts of `n` independent runs, indexed as in [`OutcomeDistribution`].
    fn sample_counts(&self, seq: &MeasurementSequence, n: u64, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
        let mut counts = vec![0u64; 1 << seq.len()];
        for _ in 0..n {
            counts[outcomes_to_index(&self.sample(seq, rng)?)] += 1;
        }
        Ok(counts)
    }

    /// `p^flip` of `target` caused by first measuring `disturbers`. Only
    /// hidden-variable systems with finite support can evaluate it.
    fn flip_probability(&self, disturbers: &[&str], target: &str) -> Result<Option<f64>> {
        let _ = (disturbers, target);
        Ok(None)
    }

    fn check_labels(&self, seq: &MeasurementSequence) -> Result<()> {
        for l in seq.steps() {
            if !self.supports(l) {
                return Err(Error::UnsupportedLabel { label: l.clone(), system: self.name() });
            }
        }
        Ok(())
    }
}

/// How sequence statistics are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Estimator {
    /// Exact enumeration; fails for systems that can only be sampled.
    Exact,
    /// Exact when available, otherwise Monte Carlo.
    Auto {
        n_trials: u64,
        seed: u64,
    },
    MonteCarlo {
        n_trials: u64,
        seed: u64,
    },
}

impl Estimator {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Estimator::Exact => None,
            Estimator::Auto { seed, .. } | Estimator::MonteCarlo { seed, .. } => Some(*seed),
        }
    }

    pub fn n_trials(&self) -> Option<u64> {
        match self {
            Estimator::Exact => None,
            Estimator::Auto { n_trials, .. } | Estimator::MonteCarlo { n_trials, .. } => Some(*n_trials),
        }
    }
}

fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Reproducible random stream for one (seed, key) pair, independent of
/// scheduling order.
pub fn stream_rng(seed: u64, key: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(key));
    rng
}

fn monte_carlo(system: &dyn MeasurementSystem, seq: &MeasurementSequence, n: u64, seed: u64) -> Result<OutcomeDistribution> {
    if n == 0 {
        return Err(Error::InvalidParameter("n_trials must be positive".into()));
    }
    system.check_labels(seq)?;
    let mut rng = stream_rng(seed, &format!("{}/{}", system.name(), seq));
    let counts = system.sample_counts(seq, n, &mut rng)?;
    OutcomeDistribution::from_counts(seq.clone(), &counts)
}

/// Distribution of one sequence under the chosen estimator.
pub fn estimate(system: &dyn MeasurementSystem, seq: &MeasurementSequence, est: Estimator) -> Result<OutcomeDistribution> {
    match est {
        Estimator::Exact => system.exact(seq)?.ok_or_else(|| Error::ExactUnavailable(system.name())),
        Estimator::Auto { n_trials, seed } => match system.exact(seq)? {
            Some(d) => Ok(d),
            None => monte_carlo(system, seq, n_trials, seed),
        },
        Estimator::MonteCarlo { n_trials, seed } => monte_carlo(system, seq, n_trials, seed),
    }
}

/// Estimates several sequences in parallel; results follow input order.
pub fn estimate_many(
    system: &dyn MeasurementSystem,
    seqs: &[MeasurementSequence],
    est: Estimator,
) -> Result<Vec<OutcomeDistribution>> {
    seqs.par_iter().map(|s| estimate(system, s, est)).collect()
}

/// Runs a sequence once and wraps the result.
pub fn sample_record(system: &dyn MeasurementSystem, seq: &MeasurementSequence, rng: &mut ChaCha8Rng) -> Result<OutcomeRecord> {
    system.check_labels(seq)?;
    OutcomeRecord::new(seq.clone(), system.sample(seq, rng)?)
}

/// Ideal projective measurements on a fixed state.
#[derive(Debug, Clone)]
pub struct QuantumSystem {
    state_name: String,
    state: QuantumState,
    set: ObservableSet,
}

impl QuantumSystem {
    pub fn new(state_name: impl Into<String>, state: QuantumState, set: ObservableSet) -> Result<Self> {
        if state.dim() != set.dim() {
            return Err(Error::DimensionMismatch { expected: set.dim(), found: state.dim() });
        }
        Ok(Self { state_name: state_name.into(), state, set })
    }

    /// Loads a catalog state and set by name.
    pub fn from_catalog(state: &str, set: &str) -> Result<Self> {
        let s = crate::catalog::load_state(state)?;
        Self::new(s.name, s.state, crate::catalog::load_set(set)?)
    }

    pub fn state(&self) -> &QuantumState {
        &self.state
    }

    pub fn set(&self) -> &ObservableSet {
        &self.set
    }
}

impl MeasurementSystem for QuantumSystem {
    fn name(&self) -> String {
        format!("quantum:{}:{}", self.set.name(), self.state_name)
    }

    fn labels(&self) -> Vec<String> {
        self.set.labels().into_iter().map(String::from).collect()
    }

    fn supports(&self, label: &str) -> bool {
        self.set.observable(label).is_some()
    }

    fn exact(&self, seq: &MeasurementSequence) -> Result<Option<OutcomeDistribution>> {
        engine::exact_distribution(&self.state, &self.set, seq).map(Some)
    }

    fn sample(&self, seq: &MeasurementSequence, rng: &mut ChaCha8Rng) -> Result<Vec<Outcome>> {
        let obs = self.set.resolve(seq)?;
        Ok(engine::sample_outcomes(&self.state, &obs, rng))
    }

    fn sample_counts(&self, seq: &MeasurementSequence, n: u64, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
        let obs = self.set.resolve(seq)?;
        let mut counts = vec![0u64; 1 << seq.len()];
        for _ in 0..n {
            counts[outcomes_to_index(&engine::sample_outcomes(&self.state, &obs, rng))] += 1;
        }
        Ok(counts)
    }
}

/// A preparation obtained by measuring a prefix and postselecting on its outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preparation {
    pub prefix: Vec<(String, Outcome)>,
}

impl Preparation {
    pub fn base() -> Self {
        Self { prefix: Vec::new() }
    }

    pub fn postselect(label: impl Into<String>, outcome: Outcome) -> Self {
        Self { prefix: vec![(label.into(), outcome)] }
    }

    pub fn name(&self) -> String {
        if self.prefix.is_empty() {
            return "base".to_string();
        }
        self.prefix.iter().enumerate().map(|(i, (l, o))| format!("{l}{}={o}", i + 1)).collect::<Vec<_>>().join(",")
    }

    /// The base preparation followed by every single-measurement postselection
    /// over `labels` with nonzero probability.
    pub fn depth_one(system: &dyn MeasurementSystem, labels: &[&str], est: Estimator) -> Result<Vec<Self>> {
        let mut preps = vec![Self::base()];
        for &l in labels {
            let dist = estimate(system, &MeasurementSequence::new([l])?, est)?;
            for o in Outcome::BOTH {
                if dist.probability(&[o]) > 0.0 {
                    preps.push(Self::postselect(l, o));
                }
            }
        }
        Ok(preps)
    }
}

/// `system` viewed through a postselected preparation.
pub struct Prepared<'a> {
    base: &'a dyn MeasurementSystem,
    prep: Preparation,
}

/// Rejection sampling gives up after this many consecutive misses.
const MAX_REJECTIONS: usize = 1_000_000;

impl<'a> Prepared<'a> {
    pub fn new(base: &'a dyn MeasurementSystem, prep: Preparation) -> Self {
        Self { base, prep }
    }

    fn full_sequence(&self, seq: &MeasurementSequence) -> Result<MeasurementSequence> {
        if self.prep.prefix.is_empty() {
            return Ok(seq.clone());
        }
        MeasurementSequence::new(self.prep.prefix.iter().map(|(l, _)| l.clone()))?.concat(seq)
    }

    fn prefix_outcomes(&self) -> Vec<Outcome> {
        self.prep.prefix.iter().map(|(_, o)| *o).collect()
    }
}

impl MeasurementSystem for Prepared<'_> {
    fn name(&self) -> String {
        format!("{}|{}", self.base.name(), self.prep.name())
    }

    fn labels(&self) -> Vec<String> {
        self.base.labels()
    }

    fn supports(&self, label: &str) -> bool {
        self.base.supports(label)
    }

    fn exact(&self, seq: &MeasurementSequence) -> Result<Option<OutcomeDistribution>> {
        if self.prep.prefix.is_empty() {
            return self.base.exact(seq);
        }
        match self.base.exact(&self.full_sequence(seq)?)? {
            Some(d) => Ok(Some(d.condition_on_prefix(&self.prefix_outcomes())?.1)),
            None => Ok(None),
        }
    }

    fn sample(&self, seq: &MeasurementSequence, rng: &mut ChaCha8Rng) -> Result<Vec<Outcome>> {
        if self.prep.prefix.is_empty() {
            return self.base.sample(seq, rng);
        }
        let full = self.full_sequence(seq)?;
        let want = self.prefix_outcomes();
        let m = want.len();
        for _ in 0..MAX_REJECTIONS {
            let v = self.base.sample(&full, rng)?;
            if v[..m] == want[..] {
                return Ok(v[m..].to_vec());
            }
        }
        Err(Error::ZeroProbabilityCondition)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> MeasurementSequence {
        MeasurementSequence::parse(s).unwrap()
    }

    #[test]
    fn estimator_modes_agree_on_quantum_system() {
        let sys = QuantumSystem::from_catalog("phi_plus", "chsh_entangled").unwrap();
        let s = seq("A,B");
        let exact = estimate(&sys, &s, Estimator::Exact).unwrap();
        let auto = estimate(&sys, &s, Estimator::Auto { n_trials: 10, seed: 1 }).unwrap();
        assert_eq!(exact, auto);
        let n = 100_000;
        let mc = estimate(&sys, &s, Estimator::MonteCarlo { n_trials: n, seed: 1 }).unwrap();
        let m = exact.sequence_mean();
        let sigma = ((1.0 - m * m) / n as f64).sqrt();
        assert!((mc.sequence_mean() - m).abs() < 4.0 * sigma);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        use rand::Rng;
        let a: u64 = stream_rng(7, "x").gen();
        let b: u64 = stream_rng(7, "x").gen();
        let c: u64 = stream_rng(7, "y").gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn parallel_estimates_are_deterministic() {
        let sys = QuantumSystem::from_catalog("fig2_psi", "mermin_peres").unwrap();
        let seqs = vec![seq("A,B,C"), seq("C,c,gamma"), seq("a,alpha")];
        let est = Estimator::MonteCarlo { n_trials: 2000, seed: 3 };
        assert_eq!(estimate_many(&sys, &seqs, est).unwrap(), estimate_many(&sys, &seqs, est).unwrap());
    }

    #[test]
    fn postselected_preparation_matches_collapsed_state() {
        let sys = QuantumSystem::from_catalog("phi_plus", "chsh_entangled").unwrap();
        let prep = Prepared::new(&sys, Preparation::postselect("C", Outcome::Plus));
        // After C = σz⊗1 gives +1 the state is |00⟩, so ⟨B⟩ = 1/√2.
        let d = prep.exact(&seq("B")).unwrap().unwrap();
        assert!((d.sequence_mean() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let mc = estimate(&prep, &seq("B"), Estimator::MonteCarlo { n_trials: 20_000, seed: 2 }).unwrap();
        assert!((mc.sequence_mean() - d.sequence_mean()).abs() < 0.03);
    }

    #[test]
    fn exact_mode_reports_unsupported_labels() {
        let sys = QuantumSystem::from_catalog("phi_plus", "chsh_entangled").unwrap();
        assert!(matches!(estimate(&sys, &seq("Q"), Estimator::Exact), Err(Error::UnknownLabel(_))));
        let mc = estimate(&sys, &seq("Q"), Estimator::MonteCarlo { n_trials: 5, seed: 0 });
        assert!(matches!(mc, Err(Error::UnsupportedLabel { .. })));
    }

    #[test]
    fn depth_one_skips_impossible_outcomes() {
        let sys = QuantumSystem::from_catalog("zero_zero", "chsh_entangled").unwrap();
        let preps = Preparation::depth_one(&sys, &["C"], Estimator::Exact).unwrap();
        assert_eq!(preps, vec![Preparation::base(), Preparation::postselect("C", Outcome::Plus)]);
    }
}
