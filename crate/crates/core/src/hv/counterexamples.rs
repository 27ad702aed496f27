//! Two toy models showing that repeatability and sequence-independent means
//! are independent requirements.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{HiddenState, HvDistribution, HvModel};
use crate::error::{Error, Result};
use crate::sequence::Outcome;
use crate::tolerances::TOLERANCES;

/// Per-label tapes of fresh outcomes; the n-th measurement of a label reads entry n.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ResamplerState {
    pub tapes: BTreeMap<String, Vec<Outcome>>,
    pub used: BTreeMap<String, usize>,
}

/// Memoryless model: every measurement of `X` draws a fresh ±1 with mean `⟨X⟩`,
/// so means never depend on earlier measurements but repetitions disagree.
#[derive(Debug, Clone)]
pub struct ResamplerModel {
    means: BTreeMap<String, f64>,
}

impl ResamplerModel {
    pub fn new(means: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((l, m)) = means.iter().find(|(_, m)| !(-1.0..=1.0).contains(*m)) {
            return Err(Error::InvalidParameter(format!("mean of `{l}` is {m}")));
        }
        Ok(Self { means })
    }

    pub fn distribution() -> HvDistribution {
        HvDistribution::finite("resampler", vec![(HiddenState::Resampler(ResamplerState::default()), 1.0)]).expect("single point")
    }

    fn plus_probability(&self, label: &str) -> Result<f64> {
        self.means.get(label).map(|m| (1.0 + m) / 2.0).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }
}

fn resampler_state(h: &HiddenState) -> Result<&ResamplerState> {
    match h {
        HiddenState::Resampler(s) => Ok(s),
        _ => Err(Error::InvalidDistribution("resampler model needs a resampler state".into())),
    }
}

impl HvModel for ResamplerModel {
    fn id(&self) -> &str {
        "memoryless_resampler"
    }

    fn labels(&self) -> Vec<String> {
        self.means.keys().cloned().collect()
    }

    fn measure(&self, hidden: &mut HiddenState, label: &str) -> Result<Outcome> {
        let HiddenState::Resampler(s) = hidden else {
            return Err(Error::InvalidDistribution("resampler model needs a resampler state".into()));
        };
        self.plus_probability(label)?;
        let n = s.used.entry(label.to_string()).or_insert(0);
        let v = s
            .tapes
            .get(label)
            .and_then(|t| t.get(*n))
            .copied()
            .ok_or_else(|| Error::InvalidDistribution(format!("tape for `{label}` exhausted")))?;
        *n += 1;
        Ok(v)
    }

    fn prepare(&self, dist: &HvDistribution, rng: &mut dyn RngCore) -> Result<HiddenState> {
        let mut s = resampler_state(dist.draw_finite(rng)?)?.clone();
        for l in self.means.keys() {
            let p = self.plus_probability(l)?;
            let need = s.used.get(l).copied().unwrap_or(0) + TOLERANCES.max_sequence_len;
            let tape = s.tapes.entry(l.clone()).or_default();
            while tape.len() < need {
                tape.push(if rng.gen::<f64>() < p { Outcome::Plus } else { Outcome::Minus });
            }
        }
        Ok(HiddenState::Resampler(s))
    }

    fn exact_support(&self, dist: &HvDistribution, steps: &[String]) -> Result<Option<Vec<(HiddenState, f64)>>> {
        let base = dist.support().ok_or_else(|| Error::InvalidDistribution("resampler needs a finite distribution".into()))?;
        let mut out: Vec<(ResamplerState, f64)> = Vec::new();
        for (h, w) in base {
            let mut partial = vec![(resampler_state(h)?.clone(), *w)];
            for l in self.means.keys() {
                let count = steps.iter().filter(|s| *s == l).count();
                let p = self.plus_probability(l)?;
                let mut next = Vec::new();
                for (s, w) in partial {
                    let have = s.tapes.get(l).map_or(0, Vec::len);
                    let need = s.used.get(l).copied().unwrap_or(0) + count;
                    let missing = need.saturating_sub(have);
                    for bits in 0..1usize << missing {
                        let mut t = s.clone();
                        let mut weight = w;
                        let tape = t.tapes.entry(l.clone()).or_default();
                        for i in 0..missing {
                            let minus = bits >> i & 1 == 1;
                            weight *= if minus { 1.0 - p } else { p };
                            tape.push(if minus { Outcome::Minus } else { Outcome::Plus });
                        }
                        if weight > 0.0 {
                            next.push((t, weight));
                        }
                    }
                }
                partial = next;
            }
            out.extend(partial);
        }
        Ok(Some(out.into_iter().map(|(s, w)| (HiddenState::Resampler(s), w)).collect()))
    }
}

/// Remembers which observable was measured first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct FirstMeasurementState {
    pub first: Option<String>,
}

/// `v(A) = +1` if the first measurement was `A` and −1 otherwise; `v(B) = +1`.
/// Repetitions always agree, yet `⟨A⟩` depends on whether `B` came first.
#[derive(Debug, Clone, Default)]
pub struct FirstMeasurementModel;

impl FirstMeasurementModel {
    pub fn distribution() -> HvDistribution {
        HvDistribution::finite("first_measurement", vec![(HiddenState::FirstMeasurement(FirstMeasurementState::default()), 1.0)])
            .expect("single point")
    }
}

impl HvModel for FirstMeasurementModel {
    fn id(&self) -> &str {
        "first_measurement_sign"
    }

    fn labels(&self) -> Vec<String> {
        vec!["A".into(), "B".into()]
    }

    fn measure(&self, hidden: &mut HiddenState, label: &str) -> Result<Outcome> {
        let HiddenState::FirstMeasurement(s) = hidden else {
            return Err(Error::InvalidDistribution("first-measurement model needs its own state".into()));
        };
        if label != "A" && label != "B" {
            return Err(Error::UnknownLabel(label.to_string()));
        }
        let first = s.first.get_or_insert_with(|| label.to_string());
        Ok(match (label, first.as_str()) {
            ("B", _) | ("A", "A") => Outcome::Plus,
            _ => Outcome::Minus,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hv::HvSystem;
    use crate::sequence::MeasurementSequence;
    use crate::system::MeasurementSystem;
    use std::sync::Arc;

    #[test]
    fn resampler_has_fixed_means_and_inconsistent_repeats() {
        let m = ResamplerModel::new(BTreeMap::from([("A".to_string(), 0.2), ("B".to_string(), -0.4)])).unwrap();
        let sys = HvSystem::new(Arc::new(m), ResamplerModel::distribution());
        let d = sys.exact(&MeasurementSequence::parse("B,A,A").unwrap()).unwrap().unwrap();
        assert!((d.marginal_mean(2) - 0.2).abs() < 1e-12);
        assert!((d.marginal_mean(0) + 0.4).abs() < 1e-12);
        // p(A⁺A⁻) + p(A⁻A⁺) = 2 · 0.6 · 0.4
        assert!((d.repeated_label_error() - 0.48).abs() < 1e-12);
    }

    #[test]
    fn first_measurement_sign_flips_a_after_b() {
        let sys = HvSystem::new(Arc::new(FirstMeasurementModel), FirstMeasurementModel::distribution());
        let ab = sys.exact(&MeasurementSequence::parse("A,B,A").unwrap()).unwrap().unwrap();
        assert_eq!(ab.marginal_mean(0), 1.0);
        let ba = sys.exact(&MeasurementSequence::parse("B,A,A").unwrap()).unwrap().unwrap();
        assert_eq!(ba.marginal_mean(1), -1.0);
        assert_eq!(ba.repeated_label_error(), 0.0);
    }

    #[test]
    fn resampler_sampling_is_deterministic_per_hidden_state() {
        use rand::SeedableRng;
        let m = ResamplerModel::new(BTreeMap::from([("A".to_string(), 0.0)])).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let h = m.prepare(&ResamplerModel::distribution(), &mut rng).unwrap();
        let steps: Vec<String> = vec!["A".into(); 5];
        assert_eq!(crate::hv::run_from(&m, &h, &steps).unwrap(), crate::hv::run_from(&m, &h, &steps).unwrap());
    }
}
