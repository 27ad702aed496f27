//! Noncontextual baseline: a fixed ±1 table over all labels, with optional
//! independent flip noise on every reported outcome.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{HiddenState, HvDistribution, HvModel};
use crate::error::{Error, Result};
use crate::sequence::Outcome;
use crate::tolerances::TOLERANCES;

/// A value table plus the tape of flip events consumed one per measurement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentState {
    pub values: BTreeMap<String, Outcome>,
    #[serde(default)]
    pub flips: Vec<bool>,
    #[serde(default)]
    pub cursor: usize,
}

impl AssignmentState {
    pub fn new(values: BTreeMap<String, Outcome>) -> Self {
        Self { values, flips: Vec::new(), cursor: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct AssignmentModel {
    labels: Vec<String>,
    flip: f64,
}

impl AssignmentModel {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>, flip: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&flip) {
            return Err(Error::InvalidParameter(format!("flip probability {flip} outside [0, 0.5]")));
        }
        Ok(Self { labels: labels.into_iter().map(Into::into).collect(), flip })
    }

    pub fn flip(&self) -> f64 {
        self.flip
    }

    fn tables<'a>(&self, dist: &'a HvDistribution) -> Result<Vec<(&'a AssignmentState, f64)>> {
        let support =
            dist.support().ok_or_else(|| Error::InvalidDistribution("assignment model needs a finite distribution".into()))?;
        support
            .iter()
            .map(|(h, w)| match h {
                HiddenState::Assignment(s) => Ok((s, *w)),
                _ => Err(Error::InvalidDistribution("assignment model needs assignment states".into())),
            })
            .collect()
    }
}

/// Every deterministic ±1 assignment over `labels`, in binary order.
pub fn all_tables(labels: &[&str]) -> Vec<BTreeMap<String, Outcome>> {
    (0..1usize << labels.len())
        .map(|bits| {
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| (l.to_string(), if bits >> i & 1 == 1 { Outcome::Minus } else { Outcome::Plus }))
                .collect()
        })
        .collect()
}

/// Mixture of value tables with the given weights.
pub fn assignment_distribution(id: impl Into<String>, tables: Vec<(BTreeMap<String, Outcome>, f64)>) -> Result<HvDistribution> {
    HvDistribution::finite(id, tables.into_iter().map(|(t, w)| (HiddenState::Assignment(AssignmentState::new(t)), w)).collect())
}

impl HvModel for AssignmentModel {
    fn id(&self) -> &str {
        "noncontextual_assignment"
    }

    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn measure(&self, hidden: &mut HiddenState, label: &str) -> Result<Outcome> {
        let HiddenState::Assignment(s) = hidden else {
            return Err(Error::InvalidDistribution("assignment model needs an assignment state".into()));
        };
        let v = *s.values.get(label).ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        let flip = if self.flip == 0.0 {
            false
        } else {
            *s.flips.get(s.cursor).ok_or_else(|| Error::InvalidDistribution("flip tape exhausted".into()))?
        };
        s.cursor += 1;
        Ok(if flip { v.flipped() } else { v })
    }

    fn prepare(&self, dist: &HvDistribution, rng: &mut dyn RngCore) -> Result<HiddenState> {
        let mut h = dist.draw_finite(rng)?.clone();
        if let HiddenState::Assignment(s) = &mut h {
            if self.flip > 0.0 {
                while s.flips.len() < s.cursor + TOLERANCES.max_sequence_len {
                    s.flips.push(rng.gen::<f64>() < self.flip);
                }
            }
        }
        Ok(h)
    }

    fn exact_support(&self, dist: &HvDistribution, steps: &[String]) -> Result<Option<Vec<(HiddenState, f64)>>> {
        let mut out = Vec::new();
        for (s, w) in self.tables(dist)? {
            if self.flip == 0.0 {
                out.push((HiddenState::Assignment(s.clone()), w));
                continue;
            }
            let missing = (s.cursor + steps.len()).saturating_sub(s.flips.len());
            for bits in 0..1usize << missing {
                let mut t = s.clone();
                let mut p = w;
                for i in 0..missing {
                    let f = bits >> i & 1 == 1;
                    p *= if f { self.flip } else { 1.0 - self.flip };
                    t.flips.push(f);
                }
                if p > 0.0 {
                    out.push((HiddenState::Assignment(t), p));
                }
            }
        }
        Ok(Some(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hv::HvSystem;
    use crate::sequence::MeasurementSequence;
    use crate::system::MeasurementSystem;
    use std::sync::Arc;

    fn table(pairs: &[(&str, Outcome)]) -> BTreeMap<String, Outcome> {
        pairs.iter().map(|(l, o)| (l.to_string(), *o)).collect()
    }

    #[test]
    fn repetitions_agree_without_noise() {
        let m = AssignmentModel::new(["A", "B"], 0.0).unwrap();
        let d = assignment_distribution("t", vec![(table(&[("A", Outcome::Minus), ("B", Outcome::Plus)]), 1.0)]).unwrap();
        let sys = HvSystem::new(Arc::new(m), d);
        let dist = sys.exact(&MeasurementSequence::parse("A,B,A,A,B").unwrap()).unwrap().unwrap();
        assert_eq!(dist.repeated_label_error(), 0.0);
        assert_eq!(dist.sequence_mean(), -1.0);
    }

    #[test]
    fn sandwich_error_matches_flip_enumeration() {
        let e = 0.05;
        let m = AssignmentModel::new(["A", "B"], e).unwrap();
        let d = assignment_distribution("t", vec![(table(&[("A", Outcome::Plus), ("B", Outcome::Plus)]), 1.0)]).unwrap();
        let sys = HvSystem::new(Arc::new(m), d);
        let dist = sys.exact(&MeasurementSequence::parse("B,A,B").unwrap()).unwrap().unwrap();
        assert!((dist.repeated_label_error() - 2.0 * e * (1.0 - e)).abs() < 1e-15);
        assert!((dist.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_tables_enumerates_every_sign() {
        let t = all_tables(&["A", "B", "C"]);
        assert_eq!(t.len(), 8);
        assert_eq!(t[5]["A"], Outcome::Minus);
        assert_eq!(t[5]["B"], Outcome::Plus);
        assert_eq!(t[5]["C"], Outcome::Minus);
    }

    #[test]
    fn conditioning_extends_the_tape() {
        let m = AssignmentModel::new(["A", "B"], 0.1).unwrap();
        let d = assignment_distribution("t", vec![(table(&[("A", Outcome::Plus), ("B", Outcome::Plus)]), 1.0)]).unwrap();
        let c = m.condition_on_first(&d, "A", Outcome::Minus).unwrap();
        let s = c.support().unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].1, 1.0);
    }

    #[test]
    fn rejects_large_flip() {
        assert!(AssignmentModel::new(["A"], 0.7).is_err());
    }

    #[test]
    fn rejects_foreign_distribution() {
        let m = AssignmentModel::new(["A"], 0.0).unwrap();
        let d = crate::hv::locking::locking_initial_distribution();
        assert!(m.exact_support(&d, &["A".into()]).is_err());
    }
}
