//! Operational compatibility tests: disturbance probabilities, mean shifts,
//! repeatability audits and the length-two reduction.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::{MeasurementSequence, Outcome, OutcomeDistribution, Source};
use crate::stats::wilson_standard_error;
use crate::system::{estimate, estimate_many, Estimator, MeasurementSystem, Preparation, Prepared};
use crate::tolerances::TOLERANCES;

/// Probability that some repeated measurement in a sequence (or sequence family) disagrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceReport {
    pub id: String,
    pub p_err: f64,
    pub standard_error: f64,
    pub n_trials: u64,
    pub source: Source,
    /// Per-sequence contributions for families; empty for single sequences.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<DisturbanceReport>,
    /// Unclamped family sum, when it differs from `p_err`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_sum: Option<f64>,
}

/// Worst-case shift of a mean caused by measuring another observable first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    /// The observable measured first in `⟨B₂|A₁B₂⟩`.
    pub disturber: String,
    pub target: String,
    pub epsilon: f64,
    pub standard_error: f64,
    pub worst_preparation: String,
    pub per_preparation: Vec<PreparationShift>,
    /// `|p(B⁺|B₁A₂) − p(B⁺|A₁B₂)| ≤ ε/2` for every preparation.
    pub half_bound_holds: bool,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparationShift {
    pub preparation: String,
    pub shift: f64,
    pub standard_error: f64,
    pub plus_probability_shift: f64,
}

/// Counterfactual flip probability, available only for finite-support models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub id: String,
    pub p_flip: Option<f64>,
    pub computable: bool,
}

/// A repeated-label inconsistency found by [`condition_i_audit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub sequence: MeasurementSequence,
    pub probability: f64,
}

/// Outcome of [`length2_reduction_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub pair: (String, String),
    pub n_preparations: usize,
    pub length2_holds: bool,
    pub induction_holds: bool,
    pub max_deviation: f64,
}

impl ReductionReport {
    pub fn holds(&self) -> bool {
        self.length2_holds && self.induction_holds
    }
}

fn seq(labels: &[&str]) -> Result<MeasurementSequence> {
    MeasurementSequence::new(labels.iter().copied())
}

fn report_from(id: String, d: &OutcomeDistribution) -> DisturbanceReport {
    let p = d.repeated_label_error();
    let se = match d.source {
        Source::Exact => 0.0,
        Source::MonteCarlo => wilson_standard_error(p, d.n_trials),
    };
    DisturbanceReport {
        id,
        p_err: p,
        standard_error: se,
        n_trials: d.n_trials,
        source: d.source,
        terms: Vec::new(),
        raw_sum: None,
    }
}

/// `p^err[S]` for an arbitrary sequence.
pub fn sequence_error(system: &dyn MeasurementSystem, s: &MeasurementSequence, est: Estimator) -> Result<DisturbanceReport> {
    let d = estimate(system, s, est)?;
    Ok(report_from(s.to_string(), &d))
}

/// `p^err[B₁A₂B₃]`, the probability that `A` disturbs `B`.
pub fn p_err_sandwich(system: &dyn MeasurementSystem, b: &str, a: &str, est: Estimator) -> Result<DisturbanceReport> {
    sequence_error(system, &seq(&[b, a, b])?, est)
}

/// The eight length-3 sequences over `{A, B}`, in binary order starting at `A₁A₂A₃`.
pub fn s3_sequences(a: &str, b: &str) -> Result<Vec<MeasurementSequence>> {
    MeasurementSequence::all_over(&[a, b], 3)
}

/// `p^err[𝒮^(3)_AB]`: the eight length-3 disturbance terms minus the two
/// (`B₁B₂A₃`, `A₁A₂B₃`) whose events are already counted. Clamped to 1.
pub fn p_err_s3(system: &dyn MeasurementSystem, a: &str, b: &str, est: Estimator) -> Result<DisturbanceReport> {
    let seqs = s3_sequences(a, b)?;
    let dists = estimate_many(system, &seqs, est)?;
    let terms: Vec<DisturbanceReport> = seqs.iter().zip(&dists).map(|(s, d)| report_from(s.to_string(), d)).collect();
    let excluded = [seq(&[b, b, a])?.to_string(), seq(&[a, a, b])?.to_string()];
    let mut sum = 0.0;
    let mut var = 0.0;
    for t in &terms {
        let sign = if excluded.contains(&t.id) { -1.0 } else { 1.0 };
        sum += sign * t.p_err;
        var += t.standard_error * t.standard_error;
    }
    let source = dists[0].source;
    let n_trials = dists.iter().map(|d| d.n_trials).min().unwrap_or(0);
    let clamped = sum.clamp(0.0, 1.0);
    Ok(DisturbanceReport {
        id: format!("S3[{a}{b}]"),
        p_err: clamped,
        standard_error: var.sqrt(),
        n_trials,
        source,
        raw_sum: (clamped != sum).then_some(sum),
        terms,
    })
}

/// `ε_AB = max over preparations of |⟨B₁|B₁A₂⟩ − ⟨B₂|A₁B₂⟩|`, with `a` the disturber.
pub fn epsilon_pair(
    system: &dyn MeasurementSystem,
    a: &str,
    b: &str,
    preparations: &[Preparation],
    est: Estimator,
) -> Result<EpsilonReport> {
    if preparations.is_empty() {
        return Err(Error::EmptyPreparationList);
    }
    let ba = seq(&[b, a])?;
    let ab = seq(&[a, b])?;
    let mut per = Vec::with_capacity(preparations.len());
    let mut source = Source::Exact;
    for prep in preparations {
        let view = Prepared::new(system, prep.clone());
        let d1 = estimate(&view, &ba, est)?;
        let d2 = estimate(&view, &ab, est)?;
        if d1.source == Source::MonteCarlo || d2.source == Source::MonteCarlo {
            source = Source::MonteCarlo;
        }
        let m1 = d1.marginal_mean(0);
        let m2 = d2.marginal_mean(1);
        let se = (d1.mean_standard_error(m1).powi(2) + d2.mean_standard_error(m2).powi(2)).sqrt();
        let p1 = d1.probability_where(|o| o[0] == Outcome::Plus);
        let p2 = d2.probability_where(|o| o[1] == Outcome::Plus);
        per.push(PreparationShift {
            preparation: prep.name(),
            shift: (m1 - m2).abs(),
            standard_error: se,
            plus_probability_shift: (p1 - p2).abs(),
        });
    }
    let worst = per.iter().max_by(|x, y| x.shift.total_cmp(&y.shift)).expect("nonempty preparation list");
    let half_bound_holds = per.iter().all(|p| p.plus_probability_shift <= worst.shift / 2.0 + TOLERANCES.audit_floor);
    Ok(EpsilonReport {
        disturber: a.to_string(),
        target: b.to_string(),
        epsilon: worst.shift,
        standard_error: worst.standard_error,
        worst_preparation: worst.preparation.clone(),
        half_bound_holds,
        source,
        per_preparation: per,
    })
}

/// `p^flip` of `target` after `disturbers`, where computable.
pub fn flip_report(system: &dyn MeasurementSystem, disturbers: &[&str], target: &str) -> Result<FlipReport> {
    let p = system.flip_probability(disturbers, target)?;
    let id = if disturbers.len() == 1 {
        format!("flip[{}{target}]", disturbers[0])
    } else {
        format!("flip[({}){target}]", disturbers.concat())
    };
    Ok(FlipReport { id, p_flip: p, computable: p.is_some() })
}

/// Every sequence over the pair up to `max_len` whose repeated labels disagree
/// with probability above the audit floor.
pub fn condition_i_audit(
    system: &dyn MeasurementSystem,
    pair: (&str, &str),
    max_len: usize,
    est: Estimator,
) -> Result<Vec<AuditEntry>> {
    if max_len > 6 {
        return Err(Error::InvalidParameter(format!("audit length {max_len} exceeds 6")));
    }
    let mut seqs = Vec::new();
    for len in 2..=max_len {
        seqs.extend(MeasurementSequence::all_over(&[pair.0, pair.1], len)?);
    }
    let dists = estimate_many(system, &seqs, est)?;
    Ok(seqs
        .into_iter()
        .zip(dists)
        .filter_map(|(s, d)| {
            let p = d.repeated_label_error();
            (p > TOLERANCES.audit_floor).then_some(AuditEntry { sequence: s, probability: p })
        })
        .collect())
}

/// All measure-and-postselect preparations over the pair with prefixes up to
/// `depth`, keeping those with nonzero probability.
pub fn postselection_closure(
    system: &dyn MeasurementSystem,
    pair: (&str, &str),
    depth: usize,
    est: Estimator,
) -> Result<Vec<Preparation>> {
    let mut preps = vec![Preparation::base()];
    for len in 1..=depth {
        for s in MeasurementSequence::all_over(&[pair.0, pair.1], len)? {
            let d = estimate(system, &s, est)?;
            for (i, p) in d.probabilities().iter().enumerate() {
                if *p > TOLERANCES.zero_probability {
                    let outcomes = crate::sequence::index_to_outcomes(i, len);
                    preps.push(Preparation { prefix: s.steps().iter().cloned().zip(outcomes).collect() });
                }
            }
        }
    }
    Ok(preps)
}

/// Checks `⟨X₁⟩ = ⟨X₂|X₁X₂⟩ = ⟨X₂|Y₁X₂⟩` and `⟨X₁X₂⟩ = 1` on the closure of
/// preparations up to length three, then the consequence `⟨X_{k+1}|S X⟩ = ⟨X₁⟩`
/// for every prefix `S` over the pair up to length three.
pub fn length2_reduction_check(system: &dyn MeasurementSystem, pair: (&str, &str), est: Estimator) -> Result<ReductionReport> {
    let preps = postselection_closure(system, pair, 3, est)?;
    let mut length2 = true;
    let mut induction = true;
    let mut max_dev: f64 = 0.0;
    let mut check = |ok: &mut bool, a: f64, b: f64, se: f64| {
        let dev = (a - b).abs();
        max_dev = max_dev.max(dev);
        let tol = match est {
            Estimator::Exact => 1e-10,
            _ => 1e-10 + 5.0 * se,
        };
        if dev > tol {
            *ok = false;
        }
    };
    for prep in &preps {
        let view = Prepared::new(system, prep.clone());
        for (x, y) in [(pair.0, pair.1), (pair.1, pair.0)] {
            let d1 = estimate(&view, &seq(&[x])?, est)?;
            let dxx = estimate(&view, &seq(&[x, x])?, est)?;
            let dyx = estimate(&view, &seq(&[y, x])?, est)?;
            let m = d1.marginal_mean(0);
            let se = d1.mean_standard_error(m);
            let mxx = dxx.marginal_mean(1);
            let myx = dyx.marginal_mean(1);
            check(&mut length2, m, mxx, se + dxx.mean_standard_error(mxx));
            check(&mut length2, m, myx, se + dyx.mean_standard_error(myx));
            let corr = dxx.sequence_mean();
            check(&mut length2, corr, 1.0, dxx.mean_standard_error(corr));
            for len in 1..=3 {
                for s in MeasurementSequence::all_over(&[pair.0, pair.1], len)? {
                    let full = s.concat(&seq(&[x])?)?;
                    let d = estimate(&view, &full, est)?;
                    let mk = d.marginal_mean(len);
                    check(&mut induction, mk, m, se + d.mean_standard_error(mk));
                }
            }
        }
    }
    Ok(ReductionReport {
        pair: (pair.0.to_string(), pair.1.to_string()),
        n_preparations: preps.len(),
        length2_holds: length2,
        induction_holds: induction,
        max_deviation: max_dev,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    kind: &'a str,
    id: &'a str,
    value: String,
    standard_error: f64,
    n_trials: u64,
    source: Source,
}

/// Flat CSV, one row per disturbance term.
pub fn write_disturbance_csv<W: Write>(reports: &[DisturbanceReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    fn emit<W: Write>(w: &mut csv::Writer<W>, r: &DisturbanceReport) -> Result<()> {
        let kind = if r.terms.is_empty() { "p_err" } else { "p_err_family" };
        w.serialize(CsvRow {
            kind,
            id: &r.id,
            value: r.p_err.to_string(),
            standard_error: r.standard_error,
            n_trials: r.n_trials,
            source: r.source,
        })?;
        for t in &r.terms {
            emit(w, t)?;
        }
        Ok(())
    }
    for r in reports {
        emit(&mut w, r)?;
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))
}

/// Flat CSV of ε reports, one row per pair.
pub fn write_epsilon_csv<W: Write>(reports: &[EpsilonReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        let id = format!("eps[{}{}]", r.disturber, r.target);
        w.serialize(CsvRow {
            kind: "epsilon",
            id: &id,
            value: r.epsilon.to_string(),
            standard_error: r.standard_error,
            n_trials: 0,
            source: r.source,
        })?;
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hv::{counterexamples::*, locking::*, HvSystem};
    use crate::system::QuantumSystem;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    #[test]
    fn commuting_pair_has_no_disturbance() {
        let sys = QuantumSystem::from_catalog("fig2_psi", "mermin_peres").unwrap();
        assert_eq!(p_err_sandwich(&sys, "A", "B", Estimator::Exact).unwrap().p_err, 0.0);
        assert!(p_err_s3(&sys, "A", "B", Estimator::Exact).unwrap().p_err < 1e-12);
    }

    #[test]
    fn non_commuting_pair_matches_branch_table_oracle() {
        let sys = QuantumSystem::from_catalog("phi_plus", "chsh_entangled").unwrap();
        let r = p_err_s3(&sys, "A", "C", Estimator::Exact).unwrap();
        // Direct oracle over the eight sequences.
        let mut oracle = 0.0;
        for s in s3_sequences("A", "C").unwrap() {
            let t = crate::engine::branch_table(sys.state(), sys.set(), &s).unwrap();
            let groups = s.repeated_labels();
            let p: f64 = t
                .branches
                .iter()
                .filter(|b| groups.iter().any(|(_, pos)| pos.iter().any(|&i| b.outcomes[i] != b.outcomes[pos[0]])))
                .map(|b| b.probability)
                .sum();
            let excluded = s.to_string() == "C1C2A3" || s.to_string() == "A1A2C3";
            oracle += if excluded { -p } else { p };
        }
        assert!(r.raw_sum.unwrap_or(r.p_err) > 0.0);
        assert!((r.raw_sum.unwrap_or(r.p_err) - oracle).abs() < 1e-12);
        assert_eq!(r.terms.len(), 8);
    }

    #[test]
    fn epsilon_rejects_empty_list() {
        let sys = QuantumSystem::from_catalog("phi_plus", "chsh_entangled").unwrap();
        assert_eq!(epsilon_pair(&sys, "A", "B", &[], Estimator::Exact).unwrap_err(), Error::EmptyPreparationList);
    }

    #[test]
    fn locking_epsilon_depends_on_preparations() {
        let sys = HvSystem::new(Arc::new(LockingModel), locking_initial_distribution());
        let base = epsilon_pair(&sys, "A", "D", &[Preparation::base()], Estimator::Exact).unwrap();
        assert_eq!(base.epsilon, 0.0);
        let preps = Preparation::depth_one(&sys, &["A", "B", "C", "D"], Estimator::Exact).unwrap();
        let deep = epsilon_pair(&sys, "A", "D", &preps, Estimator::Exact).unwrap();
        assert_eq!(deep.epsilon, 2.0);
        assert!(deep.half_bound_holds);
    }

    #[test]
    fn counterexamples_are_flagged() {
        let resampler = HvSystem::new(
            Arc::new(ResamplerModel::new(BTreeMap::from([("A".into(), 0.0), ("B".into(), 0.0)])).unwrap()),
            ResamplerModel::distribution(),
        );
        let audit = condition_i_audit(&resampler, ("A", "B"), 3, Estimator::Exact).unwrap();
        assert!(audit.iter().any(|e| e.sequence.to_string() == "A1A2"));
        let eps = epsilon_pair(&resampler, "A", "B", &[Preparation::base()], Estimator::Exact).unwrap();
        assert!(eps.epsilon < 1e-12);

        let first = HvSystem::new(Arc::new(FirstMeasurementModel), FirstMeasurementModel::distribution());
        assert!(condition_i_audit(&first, ("A", "B"), 4, Estimator::Exact).unwrap().is_empty());
        assert_eq!(epsilon_pair(&first, "B", "A", &[Preparation::base()], Estimator::Exact).unwrap().epsilon, 2.0);
    }

    #[test]
    fn reduction_check_separates_pairs() {
        let sys = QuantumSystem::from_catalog("phi_plus", "chsh_entangled").unwrap();
        assert!(length2_reduction_check(&sys, ("A", "B"), Estimator::Exact).unwrap().holds());
        assert!(!length2_reduction_check(&sys, ("A", "C"), Estimator::Exact).unwrap().holds());
        let locking = HvSystem::new(Arc::new(LockingModel), locking_initial_distribution());
        assert!(length2_reduction_check(&locking, ("A", "B"), Estimator::Exact).unwrap().holds());
    }

    #[test]
    fn flip_report_for_quantum_is_unavailable() {
        let sys = QuantumSystem::from_catalog("phi_plus", "chsh_entangled").unwrap();
        let r = flip_report(&sys, &["A"], "B").unwrap();
        assert!(!r.computable && r.p_flip.is_none());
    }

    #[test]
    fn csv_has_one_row_per_term() {
        let sys = QuantumSystem::from_catalog("phi_plus", "chsh_entangled").unwrap();
        let r = p_err_s3(&sys, "A", "C", Estimator::Exact).unwrap();
        let mut buf = Vec::new();
        write_disturbance_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 1 + 8);
        assert!(text.starts_with("kind,id,value,standard_error,n_trials,source"));
    }
}
