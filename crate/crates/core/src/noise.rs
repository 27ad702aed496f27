//! Effective noise channels for sequential measurements on two trapped-ion qubits.
//!
//! Every measurement of an observable `A` is carried out as on the hardware:
//! a unitary maps the eigenspaces of `A` onto those of `σz⊗1`, the first ion is
//! read out, and the inverse unitary maps the projected state back. Noise
//! channels are inserted at the map points and around the detection window.

use std::io::Write;

use nalgebra::Matrix4;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{load_set, load_state, ObservableSet};
use crate::engine::{Observable, Observables};
use crate::error::{Error, Result};
use crate::inequalities::{chsh_noise2, ks_sequential, InequalityResult, KsVariant};
use crate::linalg::{basis_vector, norm_sqr, CVector, ComplexMatrix, C64, ONE};
use crate::sequence::{outcomes_to_index, MeasurementSequence, Outcome, OutcomeDistribution, OutcomeRecord};
use crate::state::QuantumState;
use crate::stats::Estimate;
use crate::system::{estimate, Estimator, MeasurementSystem};
use crate::tolerances::TOLERANCES;

type M4 = Matrix4<C64>;

/// Calibrated idle dephasing per detection window. Not stated by the
/// experiment; fitted to the gap between `⟨A₁A₃|A₁A₂A₃⟩` and
/// `⟨A₁A₃|A₁B₂A₃⟩` for `A = σx⊗σx`, `B = σz⊗σz` on the maximally mixed state.
pub const CALIBRATED_DEPHASING_IDLE: f64 = 0.031;

/// Per-mechanism error probabilities. Every field lies in `[0, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Wrong state assignment from the fluorescence signal.
    pub detection_flip: f64,
    /// Optical pumping fails and the measured ion is left maximally mixed.
    pub pumping_failure: f64,
    /// Phase flip of the idle ion during one detection window (effective).
    pub dephasing_idle: f64,
    /// Depolarizing strength `1 − F` of each entangling mapping gate.
    pub gate_depolarizing: f64,
    /// Decay of the metastable level during one measurement.
    pub spontaneous_decay: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            detection_flip: 0.003,
            pumping_failure: 0.005,
            dephasing_idle: CALIBRATED_DEPHASING_IDLE,
            gate_depolarizing: 0.02,
            spontaneous_decay: 0.001,
        }
    }
}

impl NoiseConfig {
    /// All channels switched off.
    pub fn ideal() -> Self {
        Self { detection_flip: 0.0, pumping_failure: 0.0, dephasing_idle: 0.0, gate_depolarizing: 0.0, spontaneous_decay: 0.0 }
    }

    /// Parses a JSON object; missing fields take their default values.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("noise config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fields(&self) -> [(&'static str, f64); 5] {
        [
            ("detection_flip", self.detection_flip),
            ("pumping_failure", self.pumping_failure),
            ("dephasing_idle", self.dephasing_idle),
            ("gate_depolarizing", self.gate_depolarizing),
            ("spontaneous_decay", self.spontaneous_decay),
        ]
    }

    /// Returns a copy with one named field replaced.
    pub fn with_field(mut self, name: &str, value: f64) -> Result<Self> {
        match name {
            "detection_flip" => self.detection_flip = value,
            "pumping_failure" => self.pumping_failure = value,
            "dephasing_idle" => self.dephasing_idle = value,
            "gate_depolarizing" => self.gate_depolarizing = value,
            "spontaneous_decay" => self.spontaneous_decay = value,
            other => return Err(Error::InvalidParameter(format!("unknown noise field `{other}`"))),
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.fields() {
            if !(0.0..=0.5).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} is outside [0, 0.5]")));
            }
        }
        Ok(())
    }

    /// Fields whose values are fitted rather than taken from the error budget.
    pub fn effective_fields(&self) -> Vec<&'static str> {
        vec!["dephasing_idle"]
    }

    pub fn is_ideal(&self) -> bool {
        self.fields().iter().all(|(_, v)| *v == 0.0)
    }
}

/// Where a channel acts during one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPoint {
    PreMap,
    Detection,
    PostMap,
}

/// How a single observable is measured.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisyMeasurementPlan {
    pub label: String,
    /// True for two-body correlations, which need an entangling gate at both map points.
    pub requires_entangling_map: bool,
    pub channel_points: Vec<ChannelPoint>,
    /// Columns: an orthonormal basis of the `+1` eigenspace followed by one of the `−1`
    /// eigenspace, so that `V† A V = σz⊗1`.
    #[serde(skip)]
    frame: M4,
}

impl NoisyMeasurementPlan {
    pub fn for_observable(obs: &Observable) -> Result<Self> {
        if obs.dim() != 4 {
            return Err(Error::UnsupportedDimension(obs.dim()));
        }
        let requires_entangling_map = !is_local(&obs.operator());
        let mut channel_points = vec![ChannelPoint::Detection];
        if requires_entangling_map {
            channel_points.insert(0, ChannelPoint::PreMap);
            channel_points.push(ChannelPoint::PostMap);
        }
        let mut cols: Vec<CVector> = Vec::with_capacity(4);
        for proj in [obs.plus_projector(), obs.minus_projector()] {
            let start = cols.len();
            for k in 0..4 {
                if cols.len() == start + 2 {
                    break;
                }
                let mut v = proj.apply(&basis_vector(4, k));
                for c in &cols[start..] {
                    let overlap = c.dotc(&v);
                    v -= c * overlap;
                }
                let n = norm_sqr(&v).sqrt();
                if n > 1e-8 {
                    cols.push(v.unscale(n));
                }
            }
            if cols.len() != start + 2 {
                return Err(Error::InvalidMatrix(format!("`{}` does not have doubly degenerate eigenvalues", obs.label())));
            }
        }
        let frame = M4::from_fn(|i, j| cols[j][i]);
        Ok(Self { label: obs.label().to_string(), requires_entangling_map, channel_points, frame })
    }
}

/// `A` acts on one ion only.
fn is_local(a: &ComplexMatrix) -> bool {
    let id = ComplexMatrix::identity(2);
    let first = a.partial_trace_second(2, 2).scale_real(0.5).kron(&id);
    let second = id.kron(&a.partial_trace_first(2, 2).scale_real(0.5));
    a.max_abs_diff(&first) < 1e-10 || a.max_abs_diff(&second) < 1e-10
}

fn to_m4(m: &ComplexMatrix) -> M4 {
    M4::from_fn(|i, j| m.entry(i, j))
}

fn from_m4(m: &M4) -> ComplexMatrix {
    ComplexMatrix::from_nalgebra(nalgebra::DMatrix::from_fn(4, 4, |i, j| m[(i, j)])).expect("4x4 matrix")
}

fn trace(m: &M4) -> f64 {
    m.trace().re
}

fn depolarize(rho: &M4, p: f64) -> M4 {
    if p == 0.0 {
        return *rho;
    }
    let t = C64::new(p * trace(rho) / 4.0, 0.0);
    rho.map(|z| z * (1.0 - p)) + M4::identity() * t
}

/// Phase flip of the second ion in the computational basis.
fn dephase_second(rho: &M4, d: f64) -> M4 {
    if d == 0.0 {
        return *rho;
    }
    M4::from_fn(|i, j| if (i & 1) != (j & 1) { rho[(i, j)] * (1.0 - 2.0 * d) } else { rho[(i, j)] })
}

/// With probability `r` the first ion is replaced by the maximally mixed state.
fn reset_first(rho: &M4, r: f64) -> M4 {
    if r == 0.0 {
        return *rho;
    }
    let mut out = rho.map(|z| z * (1.0 - r));
    for a in 0..2 {
        for b in 0..2 {
            let reduced = rho[(a, b)] + rho[(2 + a, 2 + b)];
            let w = reduced * (r / 2.0);
            out[(a, b)] += w;
            out[(2 + a, 2 + b)] += w;
        }
    }
    out
}

/// Amplitude damping of the first ion from `|0⟩` (metastable) to `|1⟩`.
fn decay_first(rho: &M4, g: f64) -> M4 {
    if g == 0.0 {
        return *rho;
    }
    let s = (1.0 - g).sqrt();
    let k0 = M4::from_diagonal(&nalgebra::Vector4::new(C64::new(s, 0.0), C64::new(s, 0.0), ONE, ONE));
    let mut out = k0 * rho * k0;
    for a in 0..2 {
        for b in 0..2 {
            out[(2 + a, 2 + b)] += rho[(a, b)] * g;
        }
    }
    out
}

/// One noisy measurement. Returns the unnormalized post-measurement states for the
/// true outcomes `+1` and `−1`; their traces are the outcome probabilities.
fn measure_step(rho: &M4, plan: &NoisyMeasurementPlan, noise: &NoiseConfig) -> [M4; 2] {
    let gate = if plan.requires_entangling_map { noise.gate_depolarizing } else { 0.0 };
    let v = &plan.frame;
    let vd = v.adjoint();
    let mapped = dephase_second(&(vd * depolarize(rho, gate) * v), noise.dephasing_idle);
    let mut halves = [M4::zeros(), M4::zeros()];
    for i in 0..4 {
        for j in 0..4 {
            if (i < 2) == (j < 2) {
                halves[usize::from(i >= 2)][(i, j)] = mapped[(i, j)];
            }
        }
    }
    halves.map(|h| {
        let h = decay_first(&reset_first(&h, noise.pumping_failure), noise.spontaneous_decay);
        depolarize(&(v * h * vd), gate)
    })
}

fn initial_matrix(state: &QuantumState) -> Result<M4> {
    if state.dim() != 4 {
        return Err(Error::UnsupportedDimension(state.dim()));
    }
    Ok(to_m4(&state.density_matrix()))
}

fn resolve_plans<O: Observables + ?Sized>(observables: &O, seq: &MeasurementSequence) -> Result<Vec<NoisyMeasurementPlan>> {
    observables.resolve(seq)?.into_iter().map(NoisyMeasurementPlan::for_observable).collect()
}

fn sample_with_plans<R: Rng + ?Sized>(
    rho0: &M4,
    plans: &[&NoisyMeasurementPlan],
    noise: &NoiseConfig,
    rng: &mut R,
) -> Vec<Outcome> {
    let mut rho = *rho0;
    let mut values = Vec::with_capacity(plans.len());
    for plan in plans {
        let [plus, minus] = measure_step(&rho, plan, noise);
        let p_plus = trace(&plus) / (trace(&plus) + trace(&minus));
        let u: f64 = rng.gen();
        let take_plus = p_plus >= 1.0 - TOLERANCES.zero_probability || (p_plus >= TOLERANCES.zero_probability && u < p_plus);
        let (chosen, outcome) = if take_plus { (plus, Outcome::Plus) } else { (minus, Outcome::Minus) };
        rho = chosen.map(|z| z / trace(&chosen));
        let recorded =
            if noise.detection_flip > 0.0 && rng.gen::<f64>() < noise.detection_flip { outcome.flipped() } else { outcome };
        values.push(recorded);
    }
    values
}

/// One run of `seq` under `noise`; the returned record holds the detected
/// (possibly misassigned) values.
pub fn noisy_sequence_sample<O: Observables + ?Sized, R: Rng + ?Sized>(
    state: &QuantumState,
    observables: &O,
    seq: &MeasurementSequence,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<OutcomeRecord> {
    noise.validate()?;
    let rho = initial_matrix(state)?;
    let plans = resolve_plans(observables, seq)?;
    let refs: Vec<&NoisyMeasurementPlan> = plans.iter().collect();
    OutcomeRecord::new(seq.clone(), sample_with_plans(&rho, &refs, noise, rng))
}

/// Exact distribution of detected values, by density-matrix branching.
pub fn noisy_exact_distribution<O: Observables + ?Sized>(
    state: &QuantumState,
    observables: &O,
    seq: &MeasurementSequence,
    noise: &NoiseConfig,
) -> Result<OutcomeDistribution> {
    noise.validate()?;
    let rho = initial_matrix(state)?;
    let plans = resolve_plans(observables, seq)?;
    let refs: Vec<&NoisyMeasurementPlan> = plans.iter().collect();
    exact_with_plans(&rho, &refs, noise, seq)
}

fn exact_with_plans(
    rho0: &M4,
    plans: &[&NoisyMeasurementPlan],
    noise: &NoiseConfig,
    seq: &MeasurementSequence,
) -> Result<OutcomeDistribution> {
    let k = plans.len();
    if k > TOLERANCES.max_sequence_len {
        return Err(Error::SequenceTooLong { len: k, max: TOLERANCES.max_sequence_len });
    }
    let mut probs = vec![0.0; 1 << k];
    let mut stack = vec![(*rho0, 0usize, 0usize)];
    while let Some((rho, depth, index)) = stack.pop() {
        if depth == k {
            probs[index] = trace(&rho);
            continue;
        }
        let [plus, minus] = measure_step(&rho, plans[depth], noise);
        for (bit, branch) in [(0usize, plus), (1, minus)] {
            if trace(&branch) >= TOLERANCES.zero_probability {
                stack.push((branch, depth + 1, index | (bit << depth)));
            }
        }
    }
    let f = noise.detection_flip;
    if f > 0.0 {
        for pos in 0..k {
            let bit = 1 << pos;
            for i in 0..probs.len() {
                if i & bit == 0 {
                    let (a, b) = (probs[i], probs[i | bit]);
                    probs[i] = (1.0 - f) * a + f * b;
                    probs[i | bit] = f * a + (1.0 - f) * b;
                }
            }
        }
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    OutcomeDistribution::exact(seq.clone(), probs)
}

/// Applies every channel of one measurement, summed over outcomes. Exposed for
/// channel sanity checks.
pub fn measurement_channel(rho: &ComplexMatrix, plan: &NoisyMeasurementPlan, noise: &NoiseConfig) -> Result<ComplexMatrix> {
    if rho.dim() != 4 {
        return Err(Error::UnsupportedDimension(rho.dim()));
    }
    let [plus, minus] = measure_step(&to_m4(rho), plan, noise);
    Ok(from_m4(&(plus + minus)))
}

/// A two-ion state measured with the noisy protocol.
#[derive(Debug, Clone)]
pub struct NoisyIonSystem {
    state_name: String,
    state: QuantumState,
    rho: M4,
    set: ObservableSet,
    plans: Vec<NoisyMeasurementPlan>,
    noise: NoiseConfig,
}

impl NoisyIonSystem {
    pub fn new(state_name: impl Into<String>, state: QuantumState, set: ObservableSet, noise: NoiseConfig) -> Result<Self> {
        noise.validate()?;
        if set.dim() != 4 {
            return Err(Error::UnsupportedDimension(set.dim()));
        }
        let rho = initial_matrix(&state)?;
        let plans = set.observables().iter().map(NoisyMeasurementPlan::for_observable).collect::<Result<_>>()?;
        Ok(Self { state_name: state_name.into(), state, rho, set, plans, noise })
    }

    pub fn from_catalog(state: &str, set: &str, noise: NoiseConfig) -> Result<Self> {
        let s = load_state(state)?;
        Self::new(s.name, s.state, load_set(set)?, noise)
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    pub fn state(&self) -> &QuantumState {
        &self.state
    }

    pub fn plans(&self) -> &[NoisyMeasurementPlan] {
        &self.plans
    }

    fn plans_for(&self, seq: &MeasurementSequence) -> Result<Vec<&NoisyMeasurementPlan>> {
        seq.steps()
            .iter()
            .map(|l| self.plans.iter().find(|p| &p.label == l).ok_or_else(|| Error::UnknownLabel(l.clone())))
            .collect()
    }
}

impl MeasurementSystem for NoisyIonSystem {
    fn name(&self) -> String {
        format!("noisy:{}:{}", self.set.name(), self.state_name)
    }

    fn labels(&self) -> Vec<String> {
        self.set.labels().into_iter().map(String::from).collect()
    }

    fn exact(&self, seq: &MeasurementSequence) -> Result<Option<OutcomeDistribution>> {
        let plans = self.plans_for(seq)?;
        exact_with_plans(&self.rho, &plans, &self.noise, seq).map(Some)
    }

    fn sample(&self, seq: &MeasurementSequence, rng: &mut ChaCha8Rng) -> Result<Vec<Outcome>> {
        let plans = self.plans_for(seq)?;
        Ok(sample_with_plans(&self.rho, &plans, &self.noise, rng))
    }

    fn sample_counts(&self, seq: &MeasurementSequence, n: u64, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
        let plans = self.plans_for(seq)?;
        let mut counts = vec![0u64; 1 << seq.len()];
        for _ in 0..n {
            counts[outcomes_to_index(&sample_with_plans(&self.rho, &plans, &self.noise, rng))] += 1;
        }
        Ok(counts)
    }
}

/// Number of repetitions in the correlation tables.
pub const TABLE_REPEATS: usize = 5;

/// Upper-triangular `⟨A_iA_j|A₁…A₅⟩` for one observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationTable {
    pub name: String,
    pub observable: String,
    pub state: String,
    /// `entries[i][j]` for `i < j`, 0-based; `None` on and below the diagonal.
    pub entries: Vec<Vec<Option<Estimate>>>,
}

impl CorrelationTable {
    /// 1-based access as printed: row `i`, column `j > i`.
    pub fn get(&self, i: usize, j: usize) -> Option<Estimate> {
        self.entries.get(i.checked_sub(1)?)?.get(j.checked_sub(1)?).copied().flatten()
    }

    /// Mean over all entries with `j − i = distance`.
    pub fn mean_at_distance(&self, distance: usize) -> f64 {
        let vals: Vec<f64> = (1..=TABLE_REPEATS - distance).filter_map(|i| self.get(i, i + distance)).map(|e| e.value).collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// `⟨X₁X₃|X₁Y₂X₃⟩` for one intermediate observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichCorrelation {
    pub state: String,
    pub sequence: String,
    pub correlation: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationTables {
    pub table_i: CorrelationTable,
    pub table_ii: CorrelationTable,
    pub sandwiches: Vec<SandwichCorrelation>,
}

fn correlation(d: &OutcomeDistribution, i: usize, j: usize) -> Estimate {
    let c = d.mean_product(&[i, j]);
    Estimate::new(c, d.mean_standard_error(c))
}

fn repeated_table(sys: &NoisyIonSystem, name: &str, label: &str, observable: &str, est: Estimator) -> Result<CorrelationTable> {
    let seq = MeasurementSequence::new(std::iter::repeat(label).take(TABLE_REPEATS))?;
    let d = estimate(sys, &seq, est)?;
    let entries =
        (0..TABLE_REPEATS).map(|i| (0..TABLE_REPEATS).map(|j| (j > i).then(|| correlation(&d, i, j))).collect()).collect();
    Ok(CorrelationTable { name: name.into(), observable: observable.into(), state: sys.state_name.clone(), entries })
}

/// Repeated-measurement tables for `σz⊗1` and `σx⊗σx` on the maximally mixed
/// state, plus the sandwich correlations with `σz⊗σz` in between.
pub fn replicate_tables(noise: &NoiseConfig, est: Estimator) -> Result<CorrelationTables> {
    let mixed = NoisyIonSystem::from_catalog("max_mixed_2q", "mermin_peres", *noise)?;
    let singlet = NoisyIonSystem::from_catalog("singlet", "mermin_peres", *noise)?;
    // In the Mermin-Peres set: A = σz⊗1, c = σx⊗σx, C = σz⊗σz.
    let table_i = repeated_table(&mixed, "table_i", "A", "sigma_z x 1", est)?;
    let table_ii = repeated_table(&mixed, "table_ii", "c", "sigma_x x sigma_x", est)?;
    let mut sandwiches = Vec::new();
    for sys in [&mixed, &singlet] {
        for s in ["c,c,c", "c,C,c", "C,C,C", "C,c,C"] {
            let seq = MeasurementSequence::parse(s)?;
            let d = estimate(sys, &seq, est)?;
            sandwiches.push(SandwichCorrelation {
                state: sys.state_name.clone(),
                sequence: seq.to_string(),
                correlation: correlation(&d, 0, 2),
            });
        }
    }
    Ok(CorrelationTables { table_i, table_ii, sandwiches })
}

/// CSV in the printed table layout: one `value` and one `se` row per measurement.
pub fn write_tables_csv<W: Write>(tables: &CorrelationTables, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["table".to_string(), "measurement".into(), "quantity".into()];
    header.extend((2..=TABLE_REPEATS).map(|j| j.to_string()));
    w.write_record(&header)?;
    for t in [&tables.table_i, &tables.table_ii] {
        for i in 1..TABLE_REPEATS {
            for (quantity, pick) in [("value", 0), ("se", 1)] {
                let mut row = vec![t.name.clone(), i.to_string(), quantity.to_string()];
                for j in 2..=TABLE_REPEATS {
                    row.push(match t.get(i, j) {
                        Some(e) => format!("{:.6}", if pick == 0 { e.value } else { e.standard_error }),
                        None => String::new(),
                    });
                }
                w.write_record(&row)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(())
}

/// Headline numbers under noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Headlines {
    pub chi_ks: f64,
    pub chi_ks_se: f64,
    /// `⟨𝒳⟩ − 2Σp^err` for the CHSH-type functional with disturbance terms.
    pub chsh_corrected: f64,
    pub chsh_corrected_se: f64,
    pub ks: InequalityResult,
    pub chsh: InequalityResult,
}

/// The KS sum on `fig2_psi` and the corrected CHSH quantity on
/// `(|00⟩+|10⟩)/√2` with the product-basis CHSH set.
pub fn replicate_headlines(noise: &NoiseConfig, est: Estimator) -> Result<Headlines> {
    let ks_sys = NoisyIonSystem::from_catalog("fig2_psi", "mermin_peres", *noise)?;
    let chsh_sys = NoisyIonSystem::from_catalog("x_plus_zero", "chsh_product", *noise)?;
    let ks = ks_sequential(&ks_sys, KsVariant::Plain, est)?;
    let chsh = chsh_noise2(&chsh_sys, est)?;
    // The bound is 2 + 2Σp^err, so ⟨𝒳⟩ − 2Σp^err = χ − bound + 2.
    let chsh_corrected = chsh.chi - chsh.bound + 2.0;
    Ok(Headlines {
        chi_ks: ks.chi,
        chi_ks_se: ks.chi_standard_error,
        chsh_corrected,
        chsh_corrected_se: chsh.margin_standard_error(),
        ks,
        chsh,
    })
}
