//! Noncontextuality inequalities and their corrected bounds.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::catalog::{InequalityKind, MERMIN_PERES_CONTEXTS, MERMIN_PERES_SIGNS};
use crate::compat::{epsilon_pair, p_err_s3, p_err_sandwich, sequence_error, DisturbanceReport, EpsilonReport};
use crate::error::{Error, Result};
use crate::sequence::{MeasurementSequence, Source};
use crate::stats::Estimate;
use crate::system::{estimate_many, Estimator, MeasurementSystem, Preparation};
use crate::tolerances::TOLERANCES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Violates,
    Satisfies,
    Inconclusive,
}

/// Which side of the bound counts as a violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSense {
    /// `|χ| ≤ bound`
    Absolute,
    /// `χ ≤ bound`
    Upper,
    /// `χ ≥ bound`
    Lower,
}

/// `sign · ⟨S⟩` for one sequence in the functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanTerm {
    pub sequence: String,
    pub sign: f64,
    pub mean: f64,
    pub standard_error: f64,
}

/// One named contribution to a corrected bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTerm {
    pub value: f64,
    pub standard_error: f64,
    /// Factor with which the term enters the bound.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityResult {
    pub kind: InequalityKind,
    pub variant: String,
    pub chi: f64,
    pub chi_standard_error: f64,
    pub bound: f64,
    pub bound_standard_error: f64,
    pub sense: BoundSense,
    pub terms: Vec<MeanTerm>,
    pub correction_terms: BTreeMap<String, CorrectionTerm>,
    pub verdict: Verdict,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<KsFeasibility>,
}

impl InequalityResult {
    /// Signed distance by which χ exceeds the bound; positive means violation.
    pub fn margin(&self) -> f64 {
        margin(self.sense, self.chi, self.bound)
    }

    /// Combined one-sigma error of the margin.
    pub fn margin_standard_error(&self) -> f64 {
        self.chi_standard_error.hypot(self.bound_standard_error)
    }
}

fn margin(sense: BoundSense, chi: f64, bound: f64) -> f64 {
    match sense {
        BoundSense::Absolute => chi.abs() - bound,
        BoundSense::Upper => chi - bound,
        BoundSense::Lower => bound - chi,
    }
}

/// Exact: violation iff margin > 1e-9. Monte Carlo: violation iff margin > 3σ,
/// inconclusive iff 0 < margin ≤ 3σ.
pub fn verdict(source: Source, margin: f64, sigma: f64) -> Verdict {
    match source {
        Source::Exact => {
            if margin > TOLERANCES.exact_verdict {
                Verdict::Violates
            } else {
                Verdict::Satisfies
            }
        }
        Source::MonteCarlo => {
            if margin > TOLERANCES.monte_carlo_sigmas * sigma {
                Verdict::Violates
            } else if margin > 0.0 {
                Verdict::Inconclusive
            } else {
                Verdict::Satisfies
            }
        }
    }
}

fn combine(a: Source, b: Source) -> Source {
    if a == Source::MonteCarlo || b == Source::MonteCarlo {
        Source::MonteCarlo
    } else {
        Source::Exact
    }
}

struct Functional {
    chi: Estimate,
    terms: Vec<MeanTerm>,
    source: Source,
}

fn evaluate(system: &dyn MeasurementSystem, spec: &[(&[&str], f64)], est: Estimator) -> Result<Functional> {
    let seqs: Vec<MeasurementSequence> =
        spec.iter().map(|(labels, _)| MeasurementSequence::new(labels.iter().copied())).collect::<Result<_>>()?;
    let dists = estimate_many(system, &seqs, est)?;
    let mut terms = Vec::new();
    let mut source = Source::Exact;
    let mut parts = Vec::new();
    for ((s, (_, sign)), d) in seqs.iter().zip(spec).zip(&dists) {
        let m = d.sequence_mean();
        let se = d.mean_standard_error(m);
        source = combine(source, d.source);
        parts.push(Estimate::new(sign * m, se));
        terms.push(MeanTerm { sequence: s.to_string(), sign: *sign, mean: m, standard_error: se });
    }
    Ok(Functional { chi: Estimate::sum(parts), terms, source })
}

#[derive(Default)]
struct Ledger {
    terms: BTreeMap<String, CorrectionTerm>,
    source: Option<Source>,
}

impl Ledger {
    fn add(&mut self, name: String, e: Estimate, weight: f64, source: Source) {
        self.terms.insert(name, CorrectionTerm { value: e.value, standard_error: e.standard_error, weight });
        self.source = Some(combine(self.source.unwrap_or(Source::Exact), source));
    }

    fn disturbance(&mut self, r: &DisturbanceReport, weight: f64) {
        self.add(format!("p_err[{}]", r.id), Estimate::new(r.p_err, r.standard_error), weight, r.source);
    }

    fn epsilon(&mut self, r: &EpsilonReport, weight: f64) {
        self.add(format!("eps[{}{}]", r.disturber, r.target), Estimate::new(r.epsilon, r.standard_error), weight, r.source);
    }

    /// `base + Σ weight · term`.
    fn bound(&self, base: f64) -> Estimate {
        Estimate::sum(self.terms.values().map(|t| Estimate::new(t.weight * t.value, t.weight.abs() * t.standard_error)))
            .offset(base)
    }
}

fn finish(
    kind: InequalityKind,
    variant: &str,
    sense: BoundSense,
    f: Functional,
    base: f64,
    ledger: Ledger,
    feasibility: Option<KsFeasibility>,
) -> InequalityResult {
    let bound = ledger.bound(base);
    let source = combine(f.source, ledger.source.unwrap_or(Source::Exact));
    let m = margin(sense, f.chi.value, bound.value);
    let sigma = f.chi.standard_error.hypot(bound.standard_error);
    InequalityResult {
        kind,
        variant: variant.to_string(),
        chi: f.chi.value,
        chi_standard_error: f.chi.standard_error,
        bound: bound.value,
        bound_standard_error: bound.standard_error,
        sense,
        terms: f.terms,
        correction_terms: ledger.terms,
        verdict: verdict(source, m, sigma),
        source,
        feasibility,
    }
}

/// `⟨A₁B₂⟩ + ⟨C₁B₂⟩ + ⟨C₁D₂⟩ − ⟨A₁D₂⟩`
const CHSH_SPEC: [(&[&str], f64); 4] = [(&["A", "B"], 1.0), (&["C", "B"], 1.0), (&["C", "D"], 1.0), (&["A", "D"], -1.0)];

/// The (first, second) measured pairs of the CHSH functional.
pub const CHSH_PAIRS: [(&str, &str); 4] = [("A", "B"), ("C", "B"), ("C", "D"), ("A", "D")];

/// Plain bound `|𝒳| ≤ 2`.
pub fn chsh_sequential(system: &dyn MeasurementSystem, est: Estimator) -> Result<InequalityResult> {
    let f = evaluate(system, &CHSH_SPEC, est)?;
    Ok(finish(InequalityKind::Chsh, "plain", BoundSense::Absolute, f, 2.0, Ledger::default(), None))
}

/// `|𝒳| ≤ 2(1 + p^err[B₁A₂B₃] + p^err[B₁C₂B₃] + p^err[D₁C₂D₃] + p^err[D₁A₂D₃])`.
pub fn chsh_noise2(system: &dyn MeasurementSystem, est: Estimator) -> Result<InequalityResult> {
    let f = evaluate(system, &CHSH_SPEC, est)?;
    let mut ledger = Ledger::default();
    for (first, second) in CHSH_PAIRS {
        ledger.disturbance(&p_err_sandwich(system, second, first, est)?, 2.0);
    }
    Ok(finish(InequalityKind::Chsh, "noise2", BoundSense::Absolute, f, 2.0, ledger, None))
}

/// `|𝒳| ≤ 2(1 + Σ p^err[𝒮^(3)_XY])` over the four CHSH pairs.
pub fn chsh_stoch(system: &dyn MeasurementSystem, est: Estimator) -> Result<InequalityResult> {
    let f = evaluate(system, &CHSH_SPEC, est)?;
    let mut ledger = Ledger::default();
    for (first, second) in CHSH_PAIRS {
        ledger.disturbance(&p_err_s3(system, first, second, est)?, 2.0);
    }
    Ok(finish(InequalityKind::Chsh, "stoch", BoundSense::Absolute, f, 2.0, ledger, None))
}

/// `|𝒳| ≤ 2 + ε_AB + ε_CB + ε_CD + ε_AD` over the given preparations.
pub fn chsh_epsilon(system: &dyn MeasurementSystem, preparations: &[Preparation], est: Estimator) -> Result<InequalityResult> {
    let f = evaluate(system, &CHSH_SPEC, est)?;
    let mut ledger = Ledger::default();
    for (first, second) in CHSH_PAIRS {
        ledger.epsilon(&epsilon_pair(system, first, second, preparations, est)?, 1.0);
    }
    Ok(finish(InequalityKind::Chsh, "epsilon", BoundSense::Absolute, f, 2.0, ledger, None))
}

/// `|𝒳| ≤ 2(1 + Σ p^flip)`, evaluated directly on models with finite support.
pub fn chsh_universal(system: &dyn MeasurementSystem, est: Estimator) -> Result<InequalityResult> {
    let f = evaluate(system, &CHSH_SPEC, est)?;
    let mut ledger = Ledger::default();
    for (first, second) in CHSH_PAIRS {
        let p = system.flip_probability(&[first], second)?.ok_or_else(|| Error::CounterfactualUnavailable(system.name()))?;
        ledger.add(format!("p_flip[{first}{second}]"), Estimate::exact(p), 2.0, Source::Exact);
    }
    Ok(finish(InequalityKind::Chsh, "universal", BoundSense::Absolute, f, 2.0, ledger, None))
}

/// `⟨A₁B₂⟩ + ⟨C₁B₂⟩ + ⟨C₁D₂⟩ + ⟨E₁D₂⟩ + ⟨E₁A₂⟩`
pub const KCBS_PAIRS: [(&str, &str); 5] = [("A", "B"), ("C", "B"), ("C", "D"), ("E", "D"), ("E", "A")];

const KCBS_SPEC: [(&[&str], f64); 5] =
    [(&["A", "B"], 1.0), (&["C", "B"], 1.0), (&["C", "D"], 1.0), (&["E", "D"], 1.0), (&["E", "A"], 1.0)];

#[derive(Debug, Clone, PartialEq)]
pub enum KcbsVariant {
    Plain,
    Epsilon(Vec<Preparation>),
}

/// `𝒳_KCBS ≥ −3`, or `≥ −3 − Σε` for the ε variant.
pub fn kcbs_sequential(system: &dyn MeasurementSystem, variant: &KcbsVariant, est: Estimator) -> Result<InequalityResult> {
    let f = evaluate(system, &KCBS_SPEC, est)?;
    let mut ledger = Ledger::default();
    let name = match variant {
        KcbsVariant::Plain => "plain",
        KcbsVariant::Epsilon(preps) => {
            for (first, second) in KCBS_PAIRS {
                ledger.epsilon(&epsilon_pair(system, first, second, preps, est)?, -1.0);
            }
            "epsilon"
        }
    };
    Ok(finish(InequalityKind::Kcbs, name, BoundSense::Lower, f, -3.0, ledger, None))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsVariant {
    Plain,
    Extended,
}

/// Bookkeeping for the extended KS bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsFeasibility {
    pub n_terms: usize,
    pub length3_mean: f64,
    pub length4_mean: f64,
    pub mean_term: f64,
    /// A violation by the ideal quantum value 6 needs `mean_term` below this.
    pub threshold: f64,
    pub feasible: bool,
}

/// Mean correction needed for the quantum value 6 to exceed `4 + 4·Σ` over 12 terms.
pub const KS_FEASIBILITY_THRESHOLD: f64 = 2.0 / 48.0;

/// Feasibility from the two average error levels (length-3 and length-4 terms,
/// six of each).
pub fn ks_feasibility(length3_mean: f64, length4_mean: f64) -> KsFeasibility {
    let mean_term = (length3_mean + length4_mean) / 2.0;
    KsFeasibility {
        n_terms: 12,
        length3_mean,
        length4_mean,
        mean_term,
        threshold: KS_FEASIBILITY_THRESHOLD,
        feasible: mean_term < KS_FEASIBILITY_THRESHOLD,
    }
}

/// `χ_KS = Σ ±⟨X₁Y₂Z₃⟩ ≤ 4` over the rows and columns; the extended variant
/// adds `4·(p^err[Y₁X₂Y₃] + p^err[Z₁X₂Y₃Z₄])` for every context `XYZ`.
pub fn ks_sequential(system: &dyn MeasurementSystem, variant: KsVariant, est: Estimator) -> Result<InequalityResult> {
    let spec: Vec<(&[&str], f64)> = MERMIN_PERES_CONTEXTS.iter().zip(MERMIN_PERES_SIGNS).map(|(c, s)| (&c[..], s)).collect();
    let f = evaluate(system, &spec, est)?;
    let mut ledger = Ledger::default();
    let mut feasibility = None;
    if variant == KsVariant::Extended {
        let (mut l3, mut l4) = (0.0, 0.0);
        for [x, y, z] in MERMIN_PERES_CONTEXTS {
            let first = p_err_sandwich(system, y, x, est)?;
            let second = sequence_error(system, &MeasurementSequence::new([z, x, y, z])?, est)?;
            l3 += first.p_err;
            l4 += second.p_err;
            ledger.disturbance(&first, 4.0);
            ledger.disturbance(&second, 4.0);
        }
        let n = MERMIN_PERES_CONTEXTS.len() as f64;
        feasibility = Some(ks_feasibility(l3 / n, l4 / n));
    }
    let name = match variant {
        KsVariant::Plain => "plain",
        KsVariant::Extended => "extended",
    };
    Ok(finish(InequalityKind::Ks, name, BoundSense::Upper, f, 4.0, ledger, feasibility))
}

/// Interval for the counterfactual `⟨XY⟩` or `⟨XYZ⟩` from directly evaluated flips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipSandwich {
    pub id: String,
    pub measured_mean: f64,
    pub p_flips: BTreeMap<String, f64>,
    pub lower: f64,
    pub upper: f64,
}

/// `⟨A₁B₂⟩ ∓ 2p^flip[AB]` for a pair, `⟨A₁B₂C₃⟩ ∓ 4(p^flip[AB] + p^flip[(AB)C])` for a triple.
pub fn flip_sandwich_bounds(system: &dyn MeasurementSystem, labels: &[&str], est: Estimator) -> Result<FlipSandwich> {
    let unavailable = || Error::CounterfactualUnavailable(system.name());
    let seq = MeasurementSequence::new(labels.iter().copied())?;
    let d = crate::system::estimate(system, &seq, est)?;
    let mean = d.sequence_mean();
    let mut flips = BTreeMap::new();
    let width = match labels {
        [a, b] => {
            let p = system.flip_probability(&[a], b)?.ok_or_else(unavailable)?;
            flips.insert(format!("p_flip[{a}{b}]"), p);
            2.0 * p
        }
        [a, b, c] => {
            let p1 = system.flip_probability(&[a], b)?.ok_or_else(unavailable)?;
            let p2 = system.flip_probability(&[a, b], c)?.ok_or_else(unavailable)?;
            flips.insert(format!("p_flip[{a}{b}]"), p1);
            flips.insert(format!("p_flip[({a}{b}){c}]"), p2);
            4.0 * (p1 + p2)
        }
        _ => return Err(Error::InvalidParameter("flip sandwich needs a pair or a triple".into())),
    };
    Ok(FlipSandwich { id: seq.to_string(), measured_mean: mean, p_flips: flips, lower: mean - width, upper: mean + width })
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    kind: InequalityKind,
    variant: &'a str,
    chi: f64,
    se: f64,
    bound: f64,
    bound_se: f64,
    verdict: Verdict,
    source: Source,
}

/// One CSV row per result: kind, variant, chi, se, bound, bound_se, verdict, source.
pub fn write_summary_csv<W: Write>(results: &[InequalityResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(SummaryRow {
            kind: r.kind,
            variant: &r.variant,
            chi: r.chi,
            se: r.chi_standard_error,
            bound: r.bound,
            bound_se: r.bound_standard_error,
            verdict: r.verdict,
            source: r.source,
        })?;
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))
}
