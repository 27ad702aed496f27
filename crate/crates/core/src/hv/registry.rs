//! Models addressable by string id with a JSON parameter block.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;

use super::assignment::{assignment_distribution, AssignmentModel};
use super::locking::{locking_initial_distribution, LockingModel, LockingState};
use super::qmhv::{qmhv_distribution_for, QmReproducingModel};
use super::{HiddenState, HvDistribution, HvSystem};
use crate::catalog::{load_set, load_state};
use crate::error::{Error, Result};
use crate::sequence::Outcome;

pub const MODEL_IDS: [&str; 3] = ["noncontextual_assignment", "locking", "qm_reproducing"];

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct LockingParams {
    #[serde(default)]
    support: Vec<LockingPoint>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LockingPoint {
    slots: String,
    weight: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QmParams {
    #[serde(default = "default_set")]
    set: String,
    #[serde(default = "default_state")]
    state: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignmentParams {
    #[serde(default = "default_set")]
    set: String,
    #[serde(default)]
    tables: Vec<TableParams>,
    #[serde(default)]
    flip: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableParams {
    values: BTreeMap<String, Outcome>,
    #[serde(default = "one")]
    weight: f64,
}

fn default_set() -> String {
    "chsh_entangled".into()
}

fn default_state() -> String {
    "phi_plus".into()
}

fn one() -> f64 {
    1.0
}

fn parse<T: for<'de> Deserialize<'de>>(id: &str, params: &Value) -> Result<T> {
    let v = if params.is_null() { Value::Object(Default::default()) } else { params.clone() };
    serde_json::from_value(v).map_err(|e| Error::InvalidParameter(format!("{id}: {e}")))
}

/// Builds a model and its default distribution from an id and parameters.
pub fn build_model(id: &str, params: &Value) -> Result<HvSystem> {
    match id {
        "locking" => {
            let p: LockingParams = parse(id, params)?;
            let dist = if p.support.is_empty() {
                locking_initial_distribution()
            } else {
                let support = p
                    .support
                    .iter()
                    .map(|pt| Ok((HiddenState::Locking(LockingState::parse(&pt.slots)?), pt.weight)))
                    .collect::<Result<Vec<_>>>()?;
                HvDistribution::finite("locking_custom", support)?
            };
            Ok(HvSystem::new(Arc::new(LockingModel), dist))
        }
        "qm_reproducing" => {
            let p: QmParams = parse(id, params)?;
            let set = load_set(&p.set)?;
            let state = load_state(&p.state)?.state;
            if state.dim() != set.dim() {
                return Err(Error::DimensionMismatch { expected: set.dim(), found: state.dim() });
            }
            let mut dist = qmhv_distribution_for(&state)?;
            dist.id = format!("{}_ensemble", p.state);
            Ok(HvSystem::new(Arc::new(QmReproducingModel::new(set)), dist))
        }
        "noncontextual_assignment" => {
            let p: AssignmentParams = parse(id, params)?;
            let set = load_set(&p.set)?;
            let labels: Vec<String> = set.labels().into_iter().map(String::from).collect();
            let tables = if p.tables.is_empty() {
                vec![(labels.iter().map(|l| (l.clone(), Outcome::Plus)).collect(), 1.0)]
            } else {
                p.tables.into_iter().map(|t| (t.values, t.weight)).collect::<Vec<_>>()
            };
            for (t, _) in &tables {
                if let Some(missing) = labels.iter().find(|l| !t.contains_key(*l)) {
                    return Err(Error::InvalidParameter(format!("table has no value for `{missing}`")));
                }
            }
            let dist = assignment_distribution("assignment_tables", tables)?;
            Ok(HvSystem::new(Arc::new(AssignmentModel::new(labels, p.flip)?), dist))
        }
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::MeasurementSequence;
    use crate::system::MeasurementSystem;
    use serde_json::json;

    #[test]
    fn every_id_builds_with_defaults() {
        for id in MODEL_IDS {
            let sys = build_model(id, &Value::Null).unwrap();
            assert_eq!(sys.model().id(), id);
        }
        assert_eq!(build_model("bohm", &Value::Null).unwrap_err(), Error::UnknownModel("bohm".into()));
    }

    #[test]
    fn custom_locking_support() {
        let sys = build_model("locking", &json!({"support": [{"slots": "+-+-", "weight": 1.0}]})).unwrap();
        let d = sys.exact(&MeasurementSequence::parse("B").unwrap()).unwrap().unwrap();
        assert_eq!(d.sequence_mean(), -1.0);
    }

    #[test]
    fn assignment_tables_and_unknown_fields() {
        let sys =
            build_model("noncontextual_assignment", &json!({"tables": [{"values": {"A": 1, "B": -1, "C": 1, "D": 1}}]})).unwrap();
        let d = sys.exact(&MeasurementSequence::parse("A,B").unwrap()).unwrap().unwrap();
        assert_eq!(d.sequence_mean(), -1.0);
        assert!(build_model("locking", &json!({"bogus": 1})).is_err());
        assert!(build_model("noncontextual_assignment", &json!({"tables": [{"values": {"A": 1}}]})).is_err());
    }

    #[test]
    fn qm_model_rejects_dimension_mismatch() {
        assert!(build_model("qm_reproducing", &json!({"set": "kcbs_pentagram", "state": "phi_plus"})).is_err());
    }
}
