//! Randomized invariants.

use effham::chain::{averaged_drift, detailed_balance_report, generator_at, stationary_measure};
use effham::eigen::{assemble, collatz_wielandt_bounds, principal_eigenpair, Discretization, EigenParams};
use effham::hamiltonian::{convexity_report, hamiltonian_at, sweep, SolverParams};
use effham::model::{ContinuousModel, DiscreteModel, Model, PeriodicScalarField, Regime, SwitchingRateMatrix};
use effham::presets;
use effham::simulate::{simulate_continuous, simulate_discrete, ContinuousSimParams, DiscreteSimParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn field(coeffs: &[(f64, f64)]) -> PeriodicScalarField {
    let terms: Vec<(i32, f64, f64)> = coeffs.iter().enumerate().map(|(k, &(a, b))| (k as i32 + 1, a, b)).collect();
    PeriodicScalarField::fourier_1d(&terms)
}

fn coeffs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-0.5..0.5f64, -0.5..0.5f64), 1..4)
}

/// Permutes the chemical states of a discrete model.
fn permute(model: &DiscreteModel, perm: &[usize]) -> DiscreteModel {
    let j = model.states();
    let mut inv = vec![0; j];
    for (a, &b) in perm.iter().enumerate() {
        inv[b] = a;
    }
    DiscreteModel::new(
        (0..j).map(|i| model.hop_plus[inv[i]].clone()).collect(),
        (0..j).map(|i| model.hop_minus[inv[i]].clone()).collect(),
        (0..j).map(|a| (0..j).map(|b| model.switching[inv[a]][inv[b]].clone()).collect()).collect(),
        model.regime,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sigma_construction_satisfies_detailed_balance(
        c1 in coeffs(), c2 in coeffs(), c3 in coeffs(),
        s12 in 0.0..3.0f64, s13 in 0.0..3.0f64, s23 in 0.1..3.0f64,
    ) {
        let sigma = vec![vec![0.0, s12, s13], vec![s12, 0.0, s23], vec![s13, s23, 0.0]];
        let model = presets::detailed_balance_family(vec![field(&c1), field(&c2), field(&c3)], &sigma);
        prop_assert!(detailed_balance_report(&model, 64).holds);
    }

    #[test]
    fn averaged_drift_is_linear_in_the_potentials(c1 in coeffs(), c2 in coeffs(), scale in -3.0..3.0f64, y in 0.0..1.0f64) {
        let rates = SwitchingRateMatrix::constant(1, &[vec![0.0, 0.7], vec![1.9, 0.0]]);
        let base = ContinuousModel::new(vec![field(&c1), field(&c2)], rates.clone(), Regime::Averaged);
        let scaled = ContinuousModel::new(vec![field(&c1).scaled(scale), field(&c2).scaled(scale)], rates, Regime::Averaged);
        let a = averaged_drift(&base, &[y]).unwrap()[0];
        let b = averaged_drift(&scaled, &[y]).unwrap()[0];
        prop_assert!((b - scale * a).abs() <= 1e-12 * (1.0 + a.abs() * scale.abs()));
    }

    #[test]
    fn state_labels_do_not_matter(seed in any::<u64>(), p in -2.0..2.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = presets::random_discrete(&mut rng, 4, 3, Regime::Comparable);
        let params = SolverParams::default();
        let a = hamiltonian_at(&model.clone().into(), &[p], &params).unwrap().0;
        let b = hamiltonian_at(&permute(&model, &[2, 0, 1]).into(), &[p], &params).unwrap().0;
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn discrete_hamiltonian_vanishes_at_zero_and_is_convex(seed in any::<u64>(), sites in 2usize..8, states in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model: Model = presets::random_discrete(&mut rng, sites, states, Regime::Comparable).into();
        let table = sweep(&model, -2.0, 2.0, 21, &SolverParams::default()).unwrap();
        let zero = table.value_at(&[0.0]).unwrap();
        prop_assert!(zero.abs() <= 1e-9);
        prop_assert!(convexity_report(&table).max_violation <= 1e-8);
    }

    #[test]
    fn collatz_wielandt_brackets_the_eigenvalue(seed in any::<u64>(), p in -2.0..2.0f64, g in prop::collection::vec(0.1..10.0f64, 24)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model: Model = presets::random_discrete(&mut rng, 8, 3, Regime::Comparable).into();
        let op = assemble(&model, &[p], 0, Discretization::default()).unwrap();
        let lambda = principal_eigenpair(&op, &EigenParams::default()).unwrap().eigenvalue;
        let (lo, hi) = collatz_wielandt_bounds(&op, &g).unwrap();
        let slack = 1e-9 * (1.0 + lambda.abs());
        prop_assert!(lo <= lambda + slack && lambda <= hi + slack);
    }

    #[test]
    fn generators_have_zero_row_sums_and_positive_measures(rates in prop::collection::vec(0.01..5.0f64, 9), y in 0.0..1.0f64) {
        let table: Vec<Vec<f64>> = (0..3).map(|a| (0..3).map(|b| if a == b { 0.0 } else { rates[3 * a + b] }).collect()).collect();
        let q = generator_at(&SwitchingRateMatrix::constant(1, &table), &[y]).unwrap();
        prop_assert!(q.row_sums().iter().all(|&s| s == 0.0));
        let mu = stationary_measure(&q).unwrap();
        prop_assert!(mu.weights.iter().all(|&w| w > 0.0));
        prop_assert!((mu.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn operator_rows_sum_to_the_tilt(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model: Model = presets::random_continuous(&mut rng, 2, Regime::Comparable).into();
        let op = assemble(&model, &[0.0], 32, Discretization::ExponentialTilt).unwrap();
        prop_assert!(op.row_sums().iter().all(|&s| s == 0.0));
        let naive: Vec<f64> = op.to_dense().iter().map(|r| r.iter().sum()).collect();
        let scale = op.max_abs_diagonal();
        prop_assert!(naive.iter().all(|s| s.abs() <= 1e-12 * scale));
    }
}

#[test]
fn simulations_are_reproducible() {
    let flashing = presets::two_state_flashing();
    let params = ContinuousSimParams::new(0.05, 0.5, 1);
    let a = simulate_continuous(&flashing, &params, 42, 0).unwrap();
    let b = simulate_continuous(&flashing, &params, 42, 0).unwrap();
    assert_eq!(a, b);
    let walk = presets::discrete_asymmetric(2.0, 1.0);
    let params = DiscreteSimParams::new(50, 1.0);
    assert_eq!(simulate_discrete(&walk, &params, 1, 5).unwrap(), simulate_discrete(&walk, &params, 1, 5).unwrap());
}

#[test]
fn frozen_position_switching_matches_the_chain() {
    // with the position frozen at y, the state occupation approaches the
    // stationary measure of the switching generator at y
    let model = presets::two_state_flashing();
    let mut params = ContinuousSimParams::new(0.1, 200.0, 1).with_dt(0.01);
    params.start = vec![0.1 * 0.3];
    params.freeze_position = true;
    let t = simulate_continuous(&model, &params, 3, 0).unwrap();
    let mut time_in_first = 0.0;
    for w in 0..t.times.len() - 1 {
        if t.states[w] == 0 {
            time_in_first += t.times[w + 1] - t.times[w];
        }
    }
    let q = generator_at(&model.rates, &[0.3]).unwrap();
    let mu = stationary_measure(&q).unwrap();
    assert!((time_in_first / t.duration() - mu.weights[0]).abs() < 0.02);
    assert_eq!(t.positions.last().unwrap(), &params.start);
}
