//! Measurement sequences, outcome records and outcome distributions.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tolerances::TOLERANCES;

/// Result of a dichotomic measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn value(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn sign(self) -> f64 {
        f64::from(self.value())
    }

    pub fn flipped(self) -> Self {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }

    pub fn from_value(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            other => Err(Error::InvalidParameter(format!("outcome must be +1 or -1, got {other}"))),
        }
    }

    fn is_minus(self) -> bool {
        self == Outcome::Minus
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Plus => "+",
            Outcome::Minus => "-",
        })
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.value())
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Outcome::from_value(v).map_err(serde::de::Error::custom)
    }
}

/// Ordered list of observable labels, measured left to right.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct MeasurementSequence {
    steps: Vec<String>,
}

impl MeasurementSequence {
    pub fn new<S: Into<String>>(steps: impl IntoIterator<Item = S>) -> Result<Self> {
        let steps: Vec<String> = steps.into_iter().map(Into::into).collect();
        if steps.is_empty() {
            return Err(Error::EmptySequence);
        }
        if steps.len() > TOLERANCES.max_sequence_len {
            return Err(Error::SequenceTooLong { len: steps.len(), max: TOLERANCES.max_sequence_len });
        }
        Ok(Self { steps })
    }

    /// Parses a comma-separated list such as `"A,B,C"`.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.split(',').map(str::trim).filter(|s| !s.is_empty()))
    }

    pub fn steps(&self) -> &[String] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.steps[index]
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &MeasurementSequence) -> Result<Self> {
        Self::new(self.steps.iter().chain(other.steps.iter()).cloned())
    }

    /// 0-based positions at which `label` is measured.
    pub fn positions_of(&self, label: &str) -> Vec<usize> {
        self.steps.iter().enumerate().filter(|(_, l)| l.as_str() == label).map(|(i, _)| i).collect()
    }

    /// Labels that occur more than once, each with its positions.
    pub fn repeated_labels(&self) -> Vec<(String, Vec<usize>)> {
        let mut seen: Vec<String> = Vec::new();
        let mut out = Vec::new();
        for l in &self.steps {
            if seen.contains(l) {
                continue;
            }
            seen.push(l.clone());
            let pos = self.positions_of(l);
            if pos.len() > 1 {
                out.push((l.clone(), pos));
            }
        }
        out
    }

    /// All sequences of exactly `len` steps over `labels`, in lexicographic order of indices.
    pub fn all_over(labels: &[&str], len: usize) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        let n = labels.len();
        let total = n.pow(len as u32);
        for mut code in 0..total {
            let mut steps = vec![""; len];
            for slot in steps.iter_mut().rev() {
                *slot = labels[code % n];
                code /= n;
            }
            out.push(Self::new(steps)?);
        }
        Ok(out)
    }
}

impl TryFrom<Vec<String>> for MeasurementSequence {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MeasurementSequence> for Vec<String> {
    fn from(s: MeasurementSequence) -> Self {
        s.steps
    }
}

impl fmt::Display for MeasurementSequence {
    /// Positional notation, e.g. `A1B2C3`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.steps.iter().enumerate() {
            write!(f, "{}{}", l, i + 1)?;
        }
        Ok(())
    }
}

/// One realized run of a sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub sequence: MeasurementSequence,
    pub values: Vec<Outcome>,
}

impl OutcomeRecord {
    pub fn new(sequence: MeasurementSequence, values: Vec<Outcome>) -> Result<Self> {
        if values.len() != sequence.len() {
            return Err(Error::DimensionMismatch { expected: sequence.len(), found: values.len() });
        }
        Ok(Self { sequence, values })
    }

    /// `v(A₁B₂…)`, the product of all outcomes.
    pub fn product(&self) -> i8 {
        self.values.iter().map(|o| o.value()).product()
    }

    pub fn index(&self) -> usize {
        outcomes_to_index(&self.values)
    }
}

/// Whether a probability is exact or a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Exact,
    MonteCarlo,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Exact => "exact",
            Source::MonteCarlo => "monte_carlo",
        })
    }
}

/// Bit `i` of the index is set when position `i` gave −1.
pub fn outcomes_to_index(values: &[Outcome]) -> usize {
    values.iter().enumerate().filter(|(_, o)| o.is_minus()).fold(0, |acc, (i, _)| acc | (1 << i))
}

pub fn index_to_outcomes(index: usize, len: usize) -> Vec<Outcome> {
    (0..len).map(|i| if index >> i & 1 == 1 { Outcome::Minus } else { Outcome::Plus }).collect()
}

fn sign_at(index: usize, pos: usize) -> f64 {
    if index >> pos & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// Joint distribution of the outcomes of one sequence, dense over `2^k` tuples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeDistribution {
    pub sequence: MeasurementSequence,
    probs: Vec<f64>,
    pub source: Source,
    /// Number of samples behind a Monte Carlo estimate; zero for exact ones.
    pub n_trials: u64,
}

impl OutcomeDistribution {
    pub fn exact(sequence: MeasurementSequence, probs: Vec<f64>) -> Result<Self> {
        let expected = 1usize << sequence.len();
        if probs.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: probs.len() });
        }
        Ok(Self { sequence, probs, source: Source::Exact, n_trials: 0 })
    }

    pub fn from_counts(sequence: MeasurementSequence, counts: &[u64]) -> Result<Self> {
        let expected = 1usize << sequence.len();
        if counts.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: counts.len() });
        }
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::InvalidParameter("no samples".into()));
        }
        let probs = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok(Self { sequence, probs, source: Source::MonteCarlo, n_trials: n })
    }

    pub fn from_records(sequence: MeasurementSequence, records: &[OutcomeRecord]) -> Result<Self> {
        let mut counts = vec![0u64; 1 << sequence.len()];
        for r in records {
            counts[r.index()] += 1;
        }
        Self::from_counts(sequence, &counts)
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn probability(&self, outcomes: &[Outcome]) -> f64 {
        self.probs[outcomes_to_index(outcomes)]
    }

    /// Probability of the event selected by `pred` over outcome tuples.
    pub fn probability_where(&self, pred: impl Fn(&[Outcome]) -> bool) -> f64 {
        let k = self.len();
        self.probs.iter().enumerate().filter(|(i, _)| pred(&index_to_outcomes(*i, k))).map(|(_, p)| p).sum()
    }

    /// Mean of the product of outcomes at the given 0-based positions.
    pub fn mean_product(&self, positions: &[usize]) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| p * positions.iter().map(|&pos| sign_at(i, pos)).product::<f64>()).sum()
    }

    /// Mean of the product of all outcomes.
    pub fn sequence_mean(&self) -> f64 {
        let all: Vec<usize> = (0..self.len()).collect();
        self.mean_product(&all)
    }

    /// Mean of the outcome at a 0-based position.
    pub fn marginal_mean(&self, position: usize) -> f64 {
        self.mean_product(&[position])
    }

    /// Probability that the outcomes at `positions` are not all equal.
    pub fn disagreement(&self, positions: &[usize]) -> f64 {
        if positions.len() < 2 {
            return 0.0;
        }
        self.probs
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let first = sign_at(*i, positions[0]);
                positions[1..].iter().any(|&p| sign_at(*i, p) != first)
            })
            .map(|(_, p)| p)
            .sum()
    }

    /// Probability that some repeated label gives inconsistent values.
    pub fn repeated_label_error(&self) -> f64 {
        let groups: Vec<Vec<usize>> = self.sequence.repeated_labels().into_iter().map(|(_, p)| p).collect();
        self.probability_where(|o| groups.iter().any(|g| g[1..].iter().any(|&p| o[p] != o[g[0]])))
    }

    /// Standard error of a ±1-valued mean estimated from this distribution.
    pub fn mean_standard_error(&self, mean: f64) -> f64 {
        match self.source {
            Source::Exact => 0.0,
            Source::MonteCarlo => ((1.0 - mean * mean).max(0.0) / self.n_trials as f64).sqrt(),
        }
    }

    /// Distribution of the last `len - prefix.len()` outcomes given that the
    /// first positions produced `prefix`. Returns the prefix probability too.
    pub fn condition_on_prefix(&self, prefix: &[Outcome]) -> Result<(f64, OutcomeDistribution)> {
        let k = self.len();
        let m = prefix.len();
        if m >= k {
            return Err(Error::PositionOutOfRange { position: m, len: k });
        }
        let prefix_mask = (1usize << m) - 1;
        let prefix_index = outcomes_to_index(prefix);
        let mut tail = vec![0.0; 1 << (k - m)];
        for (i, p) in self.probs.iter().enumerate() {
            if i & prefix_mask == prefix_index {
                tail[i >> m] += p;
            }
        }
        let mass: f64 = tail.iter().sum();
        if mass <= 0.0 {
            return Err(Error::ZeroProbabilityCondition);
        }
        tail.iter_mut().for_each(|p| *p /= mass);
        let seq = MeasurementSequence::new(self.sequence.steps()[m..].iter().cloned())?;
        let n_trials = match self.source {
            Source::Exact => 0,
            Source::MonteCarlo => (mass * self.n_trials as f64).round() as u64,
        };
        Ok((mass, OutcomeDistribution { sequence: seq, probs: tail, source: self.source, n_trials }))
    }

    /// Total-variation distance to another distribution of the same sequence.
    pub fn total_variation(&self, other: &OutcomeDistribution) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> MeasurementSequence {
        MeasurementSequence::parse(s).unwrap()
    }

    #[test]
    fn sequence_limits() {
        assert_eq!(MeasurementSequence::new(Vec::<String>::new()), Err(Error::EmptySequence));
        let long = vec!["A"; 13];
        assert!(matches!(MeasurementSequence::new(long), Err(Error::SequenceTooLong { len: 13, .. })));
        assert_eq!(seq("A,B,C").to_string(), "A1B2C3");
    }

    #[test]
    fn enumerates_all_sequences() {
        let all = MeasurementSequence::all_over(&["A", "B"], 3).unwrap();
        assert_eq!(all.len(), 8);
        assert_eq!(all[0], seq("A,A,A"));
        assert_eq!(all[7], seq("B,B,B"));
    }

    #[test]
    fn repeated_labels_and_positions() {
        let s = seq("B,A,B,B");
        assert_eq!(s.repeated_labels(), vec![("B".to_string(), vec![0, 2, 3])]);
        assert_eq!(s.positions_of("A"), vec![1]);
    }

    #[test]
    fn index_round_trip() {
        let o = vec![Outcome::Plus, Outcome::Minus, Outcome::Minus];
        assert_eq!(outcomes_to_index(&o), 0b110);
        assert_eq!(index_to_outcomes(0b110, 3), o);
    }

    #[test]
    fn statistics_on_a_hand_built_distribution() {
        // p(++)=0.5, p(+-)=0.1, p(-+)=0.1, p(--)=0.3; index bit0 = first.
        let d = OutcomeDistribution::exact(seq("A,B"), vec![0.5, 0.1, 0.1, 0.3]).unwrap();
        assert!((d.sequence_mean() - (0.5 + 0.3 - 0.2)).abs() < 1e-15);
        assert!((d.marginal_mean(0) - (0.5 + 0.1 - 0.1 - 0.3)).abs() < 1e-15);
        assert!((d.disagreement(&[0, 1]) - 0.2).abs() < 1e-15);
        let (mass, tail) = d.condition_on_prefix(&[Outcome::Minus]).unwrap();
        assert!((mass - 0.4).abs() < 1e-15);
        assert!((tail.marginal_mean(0) - (0.1 - 0.3) / 0.4).abs() < 1e-15);
    }

    #[test]
    fn outcome_json_is_signed_integer() {
        assert_eq!(serde_json::to_string(&vec![Outcome::Plus, Outcome::Minus]).unwrap(), "[1,-1]");
        assert!(serde_json::from_str::<Outcome>("0").is_err());
        let s: MeasurementSequence = serde_json::from_str(r#"["A","B"]"#).unwrap();
        assert_eq!(s, seq("A,B"));
        assert!(serde_json::from_str::<MeasurementSequence>("[]").is_err());
    }
}
