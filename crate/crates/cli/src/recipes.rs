//! Named experiments and their JSON/CSV artifacts.

use std::collections::BTreeMap;

use contextlab::catalog::load_set;
use contextlab::compat::{
    condition_i_audit, epsilon_pair, length2_reduction_check, p_err_s3, p_err_sandwich, write_disturbance_csv, write_epsilon_csv,
    DisturbanceReport,
};
use contextlab::hv::registry::build_model;
use contextlab::inequalities::{
    chsh_epsilon, chsh_noise2, chsh_sequential, chsh_stoch, chsh_universal, kcbs_sequential, ks_sequential, write_summary_csv,
    InequalityResult, KcbsVariant, KsVariant,
};
use contextlab::noise::{replicate_headlines, replicate_tables, write_tables_csv, NoiseConfig, NoisyIonSystem};
use contextlab::sequence::{MeasurementSequence, Source};
use contextlab::system::{Estimator, MeasurementSystem, Preparation, QuantumSystem};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CliError, Resolved, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Chsh,
    Kcbs,
    Ks,
    /// Pairwise compatibility diagnostics over a set's declared pairs.
    Pairwise,
    /// Fixed ion preparations under a noise model.
    Ion,
}

impl Family {
    /// Default `(set, state)` when the flags leave them out.
    pub fn defaults(self) -> (&'static str, &'static str) {
        match self {
            Family::Chsh | Family::Pairwise | Family::Ion => ("chsh_entangled", "phi_plus"),
            Family::Kcbs => ("kcbs_pentagram", "kcbs_optimal"),
            Family::Ks => ("mermin_peres", "fig2_psi"),
        }
    }
}

#[derive(Debug)]
pub struct Recipe {
    pub id: &'static str,
    pub anchor: &'static str,
    pub family: Family,
    pub summary: &'static str,
}

pub const RECIPES: [Recipe; 14] = [
    Recipe {
        id: "chsh_sequential",
        anchor: "<A1B2> + <C1B2> + <C1D2> - <A1D2>, |chi| <= 2",
        family: Family::Chsh,
        summary: "CHSH functional from ordered two-step sequences",
    },
    Recipe {
        id: "chsh_noise2",
        anchor: "chi <= 2 + 2(p_err[B1A2B3] + p_err[B1C2B3] + p_err[D1C2D3] + p_err[D1A2D3])",
        family: Family::Chsh,
        summary: "CHSH with sandwich disturbance corrections",
    },
    Recipe {
        id: "chsh_stoch",
        anchor: "chi <= 2 + 2 sum over pairs of p_err[S3(A,B)]",
        family: Family::Chsh,
        summary: "CHSH with three-sequence stochastic corrections",
    },
    Recipe {
        id: "chsh_epsilon",
        anchor: "chi <= 2 + sum of eps_XY, eps_XY = max_prep |<Y1|Y1X2> - <Y2|X1Y2>|",
        family: Family::Chsh,
        summary: "CHSH with mean-shift corrections over depth-one preparations",
    },
    Recipe {
        id: "chsh_universal",
        anchor: "|chi| <= 2(1 + p_flip[AB] + p_flip[CB] + p_flip[CD] + p_flip[AD])",
        family: Family::Chsh,
        summary: "CHSH with counterfactual flip corrections (finite-support models only)",
    },
    Recipe {
        id: "kcbs_plain",
        anchor: "<A1B2> + <C1B2> + <C1D2> + <E1D2> + <E1A2> >= -3",
        family: Family::Kcbs,
        summary: "KCBS pentagram functional",
    },
    Recipe {
        id: "kcbs_epsilon",
        anchor: "chi_KCBS >= -3 - sum of eps over the five adjacent pairs",
        family: Family::Kcbs,
        summary: "KCBS with mean-shift corrections",
    },
    Recipe {
        id: "ks_plain",
        anchor: "sum over rows and columns of +-<X1Y2Z3> <= 4",
        family: Family::Ks,
        summary: "Mermin-Peres state-independent functional",
    },
    Recipe {
        id: "ks_extended",
        anchor: "chi_KS <= 4 + 4 sum over contexts of (p_err[Y1X2Y3] + p_err[Z1X2Y3Z4])",
        family: Family::Ks,
        summary: "Mermin-Peres functional with disturbance ledger and feasibility check",
    },
    Recipe {
        id: "disturbance",
        anchor: "p_err[B1A2B3], p_err[A1B2A3], p_err[S3(A,B)] for each compatible pair",
        family: Family::Pairwise,
        summary: "Disturbance probabilities for every declared compatible pair",
    },
    Recipe {
        id: "epsilon",
        anchor: "eps_AB = max_prep |<B1|B1A2> - <B2|A1B2>|",
        family: Family::Pairwise,
        summary: "Mean shifts for every declared compatible pair in both orders",
    },
    Recipe {
        id: "audit",
        anchor: "p(repeated values disagree) = 0 up to length 4; <X1> = <X2|X1X2> = <X2|Y1X2>",
        family: Family::Pairwise,
        summary: "Repeatability audit and length-two reduction for every compatible pair",
    },
    Recipe {
        id: "tables",
        anchor: "<A_iA_j|A1A2A3A4A5> for A = sz(x)1 and sx(x)sx; <X1X3|X1Y2X3>",
        family: Family::Ion,
        summary: "Repeated-measurement correlation tables of the ion noise model",
    },
    Recipe {
        id: "headlines",
        anchor: "chi_KS on the mapped product state; <chi> - 2 sum p_err on (|00> + |10>)/sqrt2",
        family: Family::Ion,
        summary: "KS value and corrected CHSH quantity of the ion noise model",
    },
];

pub fn find_recipe(id: &str) -> Option<&'static Recipe> {
    RECIPES.iter().find(|r| r.id == id)
}

/// What a recipe produced.
pub struct Artifact {
    pub result: Value,
    pub source: Source,
    pub ledger: BTreeMap<String, Value>,
    pub csv: Option<Vec<u8>>,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Runtime(e.to_string()))
}

fn combine(a: Source, b: Source) -> Source {
    if a == Source::MonteCarlo || b == Source::MonteCarlo {
        Source::MonteCarlo
    } else {
        Source::Exact
    }
}

fn inequality(r: InequalityResult) -> Result<Artifact, CliError> {
    let ledger = r.correction_terms.iter().map(|(k, t)| Ok((k.clone(), to_value(t)?))).collect::<Result<_, CliError>>()?;
    let mut csv = Vec::new();
    write_summary_csv(std::slice::from_ref(&r), &mut csv)?;
    Ok(Artifact { result: to_value(&r)?, source: r.source, ledger, csv: Some(csv) })
}

fn disturbance_entry(r: &DisturbanceReport) -> Value {
    json!({ "value": r.p_err, "standard_error": r.standard_error })
}

/// Builds the system a non-ion recipe runs on.
pub fn build_system(spec: &SystemSpec) -> Result<(Box<dyn MeasurementSystem>, Value), CliError> {
    Ok(match spec {
        SystemSpec::Quantum { set, state } => {
            let sys = QuantumSystem::from_catalog(state, set)?;
            let desc = json!({ "kind": "quantum", "name": sys.name(), "set": set, "state": state });
            (Box::new(sys), desc)
        }
        SystemSpec::Noisy { set, state, noise } => {
            let sys = NoisyIonSystem::from_catalog(state, set, *noise)?;
            let desc = json!({ "kind": "noisy_ion", "name": sys.name(), "set": set, "state": state });
            (Box::new(sys), desc)
        }
        SystemSpec::Model { id, params, set, state } => {
            let params = match (params, id.as_str()) {
                (Some(p), _) => p.clone(),
                (None, "qm_reproducing") => json!({ "set": set, "state": state }),
                (None, "noncontextual_assignment") => json!({ "set": set }),
                (None, _) => Value::Null,
            };
            let sys = build_model(id, &params)?;
            let desc = json!({ "kind": "hidden_variable", "name": sys.name(), "model": id, "model_params": params });
            (Box::new(sys), desc)
        }
        SystemSpec::Ion { .. } => return Err(CliError::Config("ion recipes build their own systems".into())),
    })
}

fn set_name(spec: &SystemSpec) -> Option<&str> {
    match spec {
        SystemSpec::Quantum { set, .. } | SystemSpec::Noisy { set, .. } | SystemSpec::Model { set, .. } => Some(set),
        SystemSpec::Ion { .. } => None,
    }
}

/// Source of results under `est`, decided on a one-step probe.
fn source_for(sys: &dyn MeasurementSystem, est: Estimator) -> Result<Source, CliError> {
    Ok(match est {
        Estimator::Exact => Source::Exact,
        Estimator::MonteCarlo { .. } => Source::MonteCarlo,
        Estimator::Auto { .. } => {
            let labels = sys.labels();
            let probe = MeasurementSequence::new([labels[0].as_str()])?;
            if sys.exact(&probe)?.is_some() {
                Source::Exact
            } else {
                Source::MonteCarlo
            }
        }
    })
}

fn pairs(spec: &SystemSpec) -> Result<Vec<(String, String)>, CliError> {
    let set = load_set(set_name(spec).expect("pairwise recipes have a set"))?;
    Ok(set.compatible_pairs())
}

fn preparations(sys: &dyn MeasurementSystem, labels: &[&str], est: Estimator) -> Result<Vec<Preparation>, CliError> {
    Ok(Preparation::depth_one(sys, labels, est)?)
}

fn run_on_system(id: &str, r: &Resolved, sys: &dyn MeasurementSystem) -> Result<Artifact, CliError> {
    let est = r.estimator;
    match id {
        "chsh_sequential" => inequality(chsh_sequential(sys, est)?),
        "chsh_noise2" => inequality(chsh_noise2(sys, est)?),
        "chsh_stoch" => inequality(chsh_stoch(sys, est)?),
        "chsh_universal" => inequality(chsh_universal(sys, est)?),
        "chsh_epsilon" => {
            let preps = preparations(sys, &["A", "B", "C", "D"], est)?;
            inequality(chsh_epsilon(sys, &preps, est)?)
        }
        "kcbs_plain" => inequality(kcbs_sequential(sys, &KcbsVariant::Plain, est)?),
        "kcbs_epsilon" => {
            let preps = preparations(sys, &["A", "B", "C", "D", "E"], est)?;
            inequality(kcbs_sequential(sys, &KcbsVariant::Epsilon(preps), est)?)
        }
        "ks_plain" => inequality(ks_sequential(sys, KsVariant::Plain, est)?),
        "ks_extended" => inequality(ks_sequential(sys, KsVariant::Extended, est)?),
        "disturbance" => {
            let mut reports = Vec::new();
            for (a, b) in pairs(&r.system)? {
                reports.push(p_err_sandwich(sys, &b, &a, est)?);
                reports.push(p_err_sandwich(sys, &a, &b, est)?);
                reports.push(p_err_s3(sys, &a, &b, est)?);
            }
            let source = reports.iter().fold(Source::Exact, |s, r| combine(s, r.source));
            let ledger = reports.iter().map(|r| (r.id.clone(), disturbance_entry(r))).collect();
            let mut csv = Vec::new();
            write_disturbance_csv(&reports, &mut csv)?;
            Ok(Artifact { result: to_value(&reports)?, source, ledger, csv: Some(csv) })
        }
        "epsilon" => {
            let set = load_set(set_name(&r.system).expect("pairwise recipes have a set"))?;
            let preps = preparations(sys, &set.labels(), est)?;
            let mut reports = Vec::new();
            for (a, b) in set.compatible_pairs() {
                reports.push(epsilon_pair(sys, &a, &b, &preps, est)?);
                reports.push(epsilon_pair(sys, &b, &a, &preps, est)?);
            }
            let source = reports.iter().fold(Source::Exact, |s, r| combine(s, r.source));
            let ledger = reports
                .iter()
                .map(|r| {
                    (
                        format!("eps[{}{}]", r.disturber, r.target),
                        json!({ "value": r.epsilon, "standard_error": r.standard_error }),
                    )
                })
                .collect();
            let mut csv = Vec::new();
            write_epsilon_csv(&reports, &mut csv)?;
            Ok(Artifact { result: to_value(&reports)?, source, ledger, csv: Some(csv) })
        }
        "audit" => {
            let source = source_for(sys, est)?;
            let mut entries = Vec::new();
            let mut ledger = BTreeMap::new();
            for (a, b) in pairs(&r.system)? {
                let found = condition_i_audit(sys, (&a, &b), 4, est)?;
                let reduction = length2_reduction_check(sys, (&a, &b), est)?;
                let worst = found.iter().map(|e| e.probability).fold(0.0, f64::max);
                ledger.insert(format!("audit[{a}{b}]"), json!({ "value": worst, "inconsistencies": found.len() }));
                entries.push(json!({ "pair": [a, b], "inconsistencies": to_value(&found)?, "reduction": to_value(&reduction)? }));
            }
            Ok(Artifact { result: Value::Array(entries), source, ledger, csv: None })
        }
        other => Err(CliError::Config(format!("`{other}` does not run on a single system"))),
    }
}

fn run_ion(id: &str, noise: &NoiseConfig, est: Estimator) -> Result<Artifact, CliError> {
    let source = if matches!(est, Estimator::MonteCarlo { .. }) { Source::MonteCarlo } else { Source::Exact };
    match id {
        "tables" => {
            let t = replicate_tables(noise, est)?;
            let mut csv = Vec::new();
            write_tables_csv(&t, &mut csv)?;
            Ok(Artifact { result: to_value(&t)?, source, ledger: BTreeMap::new(), csv: Some(csv) })
        }
        "headlines" => {
            let h = replicate_headlines(noise, est)?;
            let mut ledger = BTreeMap::new();
            for (prefix, r) in [("ks", &h.ks), ("chsh", &h.chsh)] {
                for (k, t) in &r.correction_terms {
                    ledger.insert(format!("{prefix}/{k}"), to_value(t)?);
                }
            }
            let mut csv = Vec::new();
            write_summary_csv(&[h.ks.clone(), h.chsh.clone()], &mut csv)?;
            Ok(Artifact { result: to_value(&h)?, source: combine(h.ks.source, h.chsh.source), ledger, csv: Some(csv) })
        }
        other => Err(CliError::Config(format!("`{other}` is not an ion recipe"))),
    }
}

/// Runs a resolved experiment and assembles the JSON report.
pub fn run(r: &Resolved) -> Result<(Value, Option<Vec<u8>>), CliError> {
    let (artifact, system, noise) = match &r.system {
        SystemSpec::Ion { noise } => {
            let desc = json!({ "kind": "noisy_ion", "name": "ion_noise_model" });
            (run_ion(r.recipe.id, noise, r.estimator)?, desc, Some(*noise))
        }
        spec => {
            let (sys, desc) = build_system(spec)?;
            let noise = match spec {
                SystemSpec::Noisy { noise, .. } => Some(*noise),
                _ => None,
            };
            (run_on_system(r.recipe.id, r, sys.as_ref())?, desc, noise)
        }
    };
    let n_trials = match artifact.source {
        Source::MonteCarlo => r.estimator.n_trials().map(Value::from).unwrap_or(Value::Null),
        Source::Exact => Value::Null,
    };
    let noise = match noise {
        Some(n) => json!({ "config": n, "effective_fields": n.effective_fields() }),
        None => Value::Null,
    };
    let report = json!({
        "experiment": r.recipe.id,
        "anchor": r.recipe.anchor,
        "system": system,
        "noise": noise,
        "provenance": { "source": artifact.source, "n_trials": n_trials, "seed": r.seed },
        "correction_terms": artifact.ledger,
        "result": artifact.result,
    });
    Ok((report, artifact.csv))
}
