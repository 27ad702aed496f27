use std::collections::BTreeMap;
use std::sync::Arc;

use contextlab::catalog::{load_set, load_state, ObservableSet, SET_NAMES, TWO_QUBIT_STATES};
use contextlab::compat::{p_err_s3, p_err_sandwich, sequence_error};
use contextlab::engine::{branch_table, lueders_update, sequence_mean, Observables};
use contextlab::hv::assignment::{all_tables, assignment_distribution};
use contextlab::hv::{run_from, AssignmentModel, HvSystem};
use contextlab::inequalities::{chsh_noise2, chsh_sequential, chsh_stoch};
use contextlab::linalg::{CVector, C64};
use contextlab::noise::{measurement_channel, NoiseConfig, NoisyIonSystem, NoisyMeasurementPlan};
use contextlab::sequence::{MeasurementSequence, Outcome};
use contextlab::state::QuantumState;
use contextlab::system::{Estimator, MeasurementSystem, QuantumSystem};
use proptest::prelude::*;
use proptest::strategy::ValueTree;

fn set_for_dim(dim: usize) -> Vec<ObservableSet> {
    SET_NAMES.iter().map(|n| load_set(n).unwrap()).filter(|s| s.dim() == dim).collect()
}

fn pure_state(dim: usize) -> impl Strategy<Value = QuantumState> {
    prop::collection::vec(-1.0f64..1.0, 2 * dim).prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3).prop_map(
        move |v| {
            let c: Vec<C64> = v.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
            QuantumState::pure_normalized(CVector::from_vec(c)).unwrap()
        },
    )
}

fn any_state() -> impl Strategy<Value = QuantumState> {
    prop_oneof![pure_state(3), pure_state(4)]
}

fn sequence_over(labels: Vec<String>, max_len: usize) -> impl Strategy<Value = MeasurementSequence> {
    prop::collection::vec(prop::sample::select(labels), 1..=max_len).prop_map(|v| MeasurementSequence::new(v).unwrap())
}

fn noise_config() -> impl Strategy<Value = NoiseConfig> {
    (0.0f64..0.5, 0.0f64..0.5, 0.0f64..0.5, 0.0f64..0.5, 0.0f64..0.5).prop_map(|(a, b, c, d, e)| NoiseConfig {
        detection_flip: a,
        pumping_failure: b,
        dephasing_idle: c,
        gate_depolarizing: d,
        spontaneous_decay: e,
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn branch_tables_are_normalized(state in any_state(), picks in prop::collection::vec(0usize..9, 1..6)) {
        for set in set_for_dim(state.dim()) {
            let labels = set.labels();
            let seq = MeasurementSequence::new(picks.iter().map(|&i| labels[i % labels.len()])).unwrap();
            let t = branch_table(&state, &set, &seq).unwrap();
            prop_assert!((t.total_probability() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn projective_repeats_never_disagree(state in any_state()) {
        for set in set_for_dim(state.dim()) {
            for l in set.labels() {
                let seq = MeasurementSequence::new([l, l]).unwrap();
                let t = branch_table(&state, &set, &seq).unwrap();
                prop_assert_eq!(t.probability(&[Outcome::Plus, Outcome::Minus]), 0.0);
                prop_assert_eq!(t.probability(&[Outcome::Minus, Outcome::Plus]), 0.0);
            }
        }
    }

    #[test]
    fn compatible_pairs_are_order_independent(state in any_state()) {
        for set in set_for_dim(state.dim()) {
            for (a, b) in set.compatible_pairs() {
                let ab = sequence_mean(&state, &set, &MeasurementSequence::new([&a, &b]).unwrap()).unwrap();
                let ba = sequence_mean(&state, &set, &MeasurementSequence::new([&b, &a]).unwrap()).unwrap();
                prop_assert!((ab - ba).abs() < 1e-10, "{a}{b}: {ab} vs {ba}");
            }
        }
    }

    #[test]
    fn lueders_keeps_pure_states_pure(state in pure_state(4)) {
        let set = load_set("mermin_peres").unwrap();
        for o in set.observables() {
            for outcome in Outcome::BOTH {
                if let Ok((p, post)) = lueders_update(&state, o, outcome) {
                    prop_assert!(p > 0.0);
                    let v = post.vector().expect("pure");
                    prop_assert!((v.norm() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn noisy_channels_are_trace_preserving(state in pure_state(4), noise in noise_config()) {
        let rho = state.density_matrix();
        for o in load_set("chsh_product").unwrap().observables() {
            let plan = NoisyMeasurementPlan::for_observable(o).unwrap();
            let out = measurement_channel(&rho, &plan, &noise).unwrap();
            prop_assert!((out.trace().re - 1.0).abs() < 1e-10);
            prop_assert!(out.hermitian_eigen().0[0] > -1e-10);
        }
    }

    #[test]
    fn time_ordering_monotonicity_on_noisy_ions(noise in noise_config(), state_idx in 0usize..6) {
        let sys = NoisyIonSystem::from_catalog(TWO_QUBIT_STATES[state_idx], "mermin_peres", noise).unwrap();
        for (a, b) in [("A", "C"), ("c", "C"), ("alpha", "gamma")] {
            let bba = sequence_error(&sys, &MeasurementSequence::new([b, b, a]).unwrap(), Estimator::Exact).unwrap().p_err;
            let bbb = sequence_error(&sys, &MeasurementSequence::new([b, b, b]).unwrap(), Estimator::Exact).unwrap().p_err;
            let aab = sequence_error(&sys, &MeasurementSequence::new([a, a, b]).unwrap(), Estimator::Exact).unwrap().p_err;
            let aaa = sequence_error(&sys, &MeasurementSequence::new([a, a, a]).unwrap(), Estimator::Exact).unwrap().p_err;
            prop_assert!(bba <= bbb + 1e-12);
            prop_assert!(aab <= aaa + 1e-12);
        }
    }

    #[test]
    fn stoch_bound_dominates_noise2_bound(noise in noise_config()) {
        let sys = NoisyIonSystem::from_catalog("x_plus_zero", "chsh_product", noise).unwrap();
        let n2 = chsh_noise2(&sys, Estimator::Exact).unwrap();
        let st = chsh_stoch(&sys, Estimator::Exact).unwrap();
        prop_assert!(st.bound >= n2.bound - 1e-12);
        prop_assert!((st.chi - n2.chi).abs() < 1e-12);
    }

    #[test]
    fn error_reports_are_probabilities(noise in noise_config()) {
        let sys = NoisyIonSystem::from_catalog("fig2_psi", "chsh_product", noise).unwrap();
        let r = p_err_sandwich(&sys, "B", "A", Estimator::Exact).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.p_err) && r.standard_error == 0.0);
        let s = p_err_s3(&sys, "A", "B", Estimator::Exact).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.p_err));
    }

    #[test]
    fn universal_bound_holds_for_noisy_assignments(
        weights in prop::collection::vec(0.0f64..1.0, 16),
        flip in 0.0f64..0.5,
    ) {
        prop_assume!(weights.iter().sum::<f64>() > 1e-3);
        let total: f64 = weights.iter().sum();
        let labels = ["A", "B", "C", "D"];
        let tables: Vec<_> = all_tables(&labels).into_iter().zip(weights.iter().map(|w| w / total)).collect();
        let dist = assignment_distribution("random", tables).unwrap();
        let sys = HvSystem::new(Arc::new(AssignmentModel::new(labels, flip).unwrap()), dist);
        let chi = chsh_sequential(&sys, Estimator::Exact).unwrap().chi;
        let flips: f64 = [("A", "B"), ("C", "B"), ("C", "D"), ("A", "D")]
            .iter()
            .map(|(a, b)| sys.flip_probability(&[a], b).unwrap().unwrap())
            .sum();
        prop_assert!(chi.abs() <= 2.0 * (1.0 + flips) + 1e-12);
    }

    #[test]
    fn hv_runs_are_deterministic_given_the_hidden_state(seed in 0u64..1000, picks in prop::collection::vec(0usize..4, 1..8)) {
        use rand::SeedableRng;
        use contextlab::hv::HvModel;
        let labels = ["A", "B", "C", "D"];
        let model = AssignmentModel::new(labels, 0.2).unwrap();
        let table: BTreeMap<String, Outcome> = labels.iter().map(|l| (l.to_string(), Outcome::Plus)).collect();
        let dist = assignment_distribution("one", vec![(table, 1.0)]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let h = model.prepare(&dist, &mut rng).unwrap();
        let steps: Vec<String> = picks.iter().map(|&i| labels[i].to_string()).collect();
        prop_assert_eq!(run_from(&model, &h, &steps).unwrap(), run_from(&model, &h, &steps).unwrap());
    }
}

#[test]
fn ideal_noise_reproduces_engine_on_catalog_experiments() {
    for set in ["chsh_entangled", "chsh_product", "mermin_peres"] {
        let labels: Vec<String> = load_set(set).unwrap().labels().into_iter().map(String::from).collect();
        for state in TWO_QUBIT_STATES {
            let q = QuantumSystem::from_catalog(state, set).unwrap();
            let n = NoisyIonSystem::from_catalog(state, set, NoiseConfig::ideal()).unwrap();
            let mut runner = proptest::test_runner::TestRunner::deterministic();
            for _ in 0..20 {
                let seq = sequence_over(labels.clone(), 4).new_tree(&mut runner).unwrap().current();

                let a = q.exact(&seq).unwrap().unwrap();
                let b = n.exact(&seq).unwrap().unwrap();
                for (x, y) in a.probabilities().iter().zip(b.probabilities()) {
                    assert!((x - y).abs() < 1e-12, "{set} {state} {seq}");
                }
            }
        }
    }
}

#[test]
fn catalog_states_resolve_every_label() {
    for set in SET_NAMES {
        let s = load_set(set).unwrap();
        for l in s.labels() {
            assert!(s.observable(l).is_some());
        }
    }
    assert_eq!(load_state("max_mixed_2q").unwrap().state.dim(), 4);
}
