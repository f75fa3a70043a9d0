use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermolab::c64;
use thermolab::equilibration::*;
use thermolab::lattice::models::{chain_graph, ising_chain, random_hermitian};
use thermolab::lattice::{informationally_complete, neel_state, normalise, sigma_z_on, Boundary, Operator, Povm, PovmSet, State};
use thermolab::spectral::{diagonalize, SpectralDecomposition, DEFAULT_DEGENERACY_TOL};

fn tfim8() -> SpectralDecomposition {
    let g = chain_graph(8, Boundary::Open, true).unwrap();
    let h = ising_chain(&g, Boundary::Open, 1.0, 0.9, 0.4).unwrap();
    diagonalize(&h.assemble().unwrap(), DEFAULT_DEGENERACY_TOL).unwrap()
}

#[test]
fn occupation_factor_examples() {
    let one = g_occupations(&[1.0]);
    assert_eq!(one.value, 1.0);
    assert!(one.three_second_largest.is_none());
    let cold = g_occupations(&[1.0 - 1e-6, 1e-6]);
    assert!((cold.value - 3e-6).abs() < 1e-18);
    let flat = g_occupations(&[0.125; 8]);
    assert!((flat.value - 0.125).abs() < 1e-15);
}

#[test]
fn effective_dimension_examples() {
    assert_eq!(effective_dimension(&[1.0, 0.0, 0.0]), 1.0);
    assert!((effective_dimension(&[0.2; 5]) - 5.0).abs() < 1e-12);
    let s = diagonalize(&Operator::diagonal(&[0.0, 1.0, 2.5, 4.0]), 1e-10).unwrap();
    let p = s.populations(&State::Mixed(Operator::identity(4).scale_real(0.25))).unwrap();
    assert!((effective_dimension(&p) - 4.0).abs() < 1e-12);
}

#[test]
fn measurement_factor_examples() {
    let z = Povm::binary(&Operator::diagonal(&[1.0, 0.0])).unwrap();
    assert_eq!(h_povm(&PovmSet::single(z)).value, 0.5);
    let ic = informationally_complete(&[2, 5]);
    assert!(h_povm(&ic).value <= 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut povms = Vec::new();
    for _ in 0..50 {
        let v = random_hermitian(8, false, &mut rng);
        let col: Vec<c64> = (0..8).map(|i| v.get(i, 0)).collect();
        let mut col = col;
        normalise(&mut col);
        povms.push(Povm::binary(&Operator::projector(&col)).unwrap());
    }
    let m = PovmSet::new(povms, None).unwrap();
    let h = h_povm(&m);
    assert_eq!(h.distinct_elements, 100);
    assert_eq!(h.value, 4.0);
}

#[test]
fn low_rank_constant_value() {
    // 5 pi / (4 * 0.7950600...) + 1
    assert!((low_rank_constant() - 5.939_237_711).abs() < 1e-8);
}

#[test]
fn eigenstate_has_zero_lhs() {
    let s = tfim8();
    let psi = s.vector(17);
    let r = equilibration_bound_observable(&sigma_z_on(8, 4), &State::Pure(psi), &s, Some(0.1), 100.0).unwrap();
    assert!(r.lhs < 1e-20);
    assert!(r.satisfied);
    assert!(r.lhs_infinite_time.unwrap() < 1e-20);
}

#[test]
fn finite_time_factor_tends_to_one() {
    assert!((finite_time_factor(0.1, 1e15, 256) - 1.0).abs() < 1e-12);
    assert_eq!(finite_time_factor(1.0, 8.0, 2), 2.0);
}

#[test]
fn tfim_neel_observable_bound_holds() {
    let s = tfim8();
    let d = s.n_levels() as f64;
    let eps = s.range() / (d * d);
    let psi = neel_state(8, true);
    let r = equilibration_bound_observable(&sigma_z_on(8, 4), &State::Pure(psi), &s, Some(eps), 1e3).unwrap();
    assert!(r.satisfied, "lhs {} rhs {}", r.lhs, r.rhs);
    assert!(r.lhs > 0.0);
    let best = equilibration_bound_observable(&sigma_z_on(8, 4), &State::Pure(neel_state(8, true)), &s, None, 1e3).unwrap();
    assert!(best.satisfied);
}

#[test]
fn povm_bounds_hold() {
    let s = tfim8();
    let dims = vec![2; 8];
    let psi = State::Pure(neel_state(8, false));
    let trivial = PovmSet::single(Povm::new(vec![Operator::identity(256)]).unwrap());
    let r = equilibration_bound_povm(&trivial, &psi, &s, &dims, None, 200.0).unwrap();
    assert!(r.lhs < 1e-12);
    let z = Povm::binary(&Operator::diagonal(&[1.0, 0.0])).unwrap();
    let local = PovmSet::new(vec![z], Some(vec![3])).unwrap();
    let r = equilibration_bound_povm(&local, &psi, &s, &dims, None, 500.0).unwrap();
    assert!(r.satisfied, "lhs {} rhs {}", r.lhs, r.rhs);
    assert!(r.lhs > 0.0);
}

#[test]
fn informationally_complete_measurement_is_dominated_by_trace_distance() {
    let s = tfim8();
    let dims = vec![2; 8];
    let psi = State::Pure(neel_state(8, true));
    let ic = informationally_complete(&[4]);
    let r = equilibration_bound_povm(&ic, &psi, &s, &dims, None, 300.0).unwrap();
    let times = averaging_grid(&s, 300.0);
    let scan = subsystem_equilibration_scan(&psi, &s, &dims, &[4], &times).unwrap();
    assert!(r.satisfied);
    assert!(r.lhs <= scan.average + 1e-9);
}

#[test]
fn low_rank_survival_measurement() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = random_hermitian(10, false, &mut rng);
    let s = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let mut psi: Vec<c64> = (0..10).map(|i| c64::new(1.0, 0.3 * i as f64)).collect();
    normalise(&mut psi);
    let p = Operator::projector(&psi);
    let r = low_rank_equilibration(&p, &State::Pure(psi), &s, 50.0).unwrap();
    assert_eq!(r.rank, 1);
    assert!(r.satisfied, "lhs {} rhs {}", r.lhs, r.rhs);
}

#[test]
fn low_rank_rejects_degenerate_spectrum() {
    let s = diagonalize(&Operator::diagonal(&[0.0, 0.0, 1.0]), 1e-10).unwrap();
    let p = Operator::diagonal(&[1.0, 0.0, 0.0]);
    let psi = State::Mixed(Operator::identity(3).scale_real(1.0 / 3.0));
    assert!(matches!(low_rank_equilibration(&p, &psi, &s, 10.0), Err(EquilibrationError::DegenerateSpectrum { .. })));
}

#[test]
fn subsystem_scan_zero_for_stationary_inputs() {
    let s = tfim8();
    let dims = vec![2; 8];
    let times: Vec<f64> = (0..50).map(|i| i as f64).collect();
    let eig = State::Pure(s.vector(3));
    assert!(subsystem_equilibration_scan(&eig, &s, &dims, &[0], &times).unwrap().average < 1e-12);
    let omega = thermolab::dynamics::dephase(&State::Pure(neel_state(8, true)), &s).unwrap();
    assert!(subsystem_equilibration_scan(&State::Mixed(omega), &s, &dims, &[2, 3], &times).unwrap().average < 1e-10);
}

#[test]
fn single_qubit_scan_below_subsystem_bound() {
    let s = tfim8();
    let dims = vec![2; 8];
    let psi = State::Pure(neel_state(8, true));
    let times: Vec<f64> = (0..4096).map(|i| 2000.0 * i as f64 / 4095.0).collect();
    let scan = subsystem_equilibration_scan(&psi, &s, &dims, &[4], &times).unwrap();
    let occ = g_occupations(&s.populations(&psi).unwrap());
    assert!(scan.average <= 0.5 * (4.0 * occ.value).sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn window_population_properties(raw in proptest::collection::vec((0.0f64..10.0, 0.0f64..1.0), 1..30), a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let mut pairs = raw;
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        pairs.dedup_by(|x, y| x.0 == y.0);
        let total: f64 = pairs.iter().map(|x| x.1).sum::<f64>().max(1e-12);
        let levels: Vec<f64> = pairs.iter().map(|x| x.0).collect();
        let p: Vec<f64> = pairs.iter().map(|x| x.1 / total).collect();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let pmax = p.iter().cloned().fold(0.0, f64::max);
        prop_assert!(window_population(&levels, &p, lo) >= pmax - 1e-12);
        prop_assert!(window_population(&levels, &p, lo) <= window_population(&levels, &p, hi) + 1e-12);
        let range = levels.last().unwrap() - levels[0];
        prop_assert!((window_population(&levels, &p, range) - p.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn effective_dimension_exceeds_inverse_max(raw in proptest::collection::vec(0.001f64..1.0, 1..40)) {
        let t: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / t).collect();
        let pmax = p.iter().cloned().fold(0.0, f64::max);
        prop_assert!(effective_dimension(&p) >= 1.0 / pmax - 1e-9);
        prop_assert!(effective_dimension(&p) >= 1.0);
    }
}
