use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermolab::c64;
use thermolab::dynamics::*;
use thermolab::lattice::models::{chain_graph, ising_chain, random_hermitian, random_local_chain};
use thermolab::lattice::*;
use thermolab::spectral::{diagonalize, DEFAULT_DEGENERACY_TOL};

fn random_product(n: usize, rng: &mut ChaCha8Rng) -> Vec<c64> {
    use rand::Rng;
    let f: Vec<Vec<c64>> = (0..n).map(|_| bloch_state(rng.random::<f64>() * 3.0, rng.random::<f64>() * 6.0)).collect();
    product_state(&f)
}

#[test]
fn rabi_oscillation() {
    // H = X from |0>: <Z>(t) = cos 2t in either time direction
    let spec = diagonalize(&pauli::x(), 1e-10).unwrap();
    let times = uniform_grid(0.0, 3.0, 31);
    let tr = expectation_trajectory(&pauli::z(), &State::Pure(basis_state(&[2], &[0])), &spec, &times).unwrap();
    for (t, v) in tr.times.iter().zip(&tr.values) {
        assert!((v - (2.0 * t).cos()).abs() < 1e-13);
    }
}

#[test]
fn pure_and_mixed_evolution_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = random_hermitian(8, false, &mut rng);
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let psi = random_product(3, &mut rng);
    let a = evolve_state(&State::Pure(psi.clone()), &spec, 1.7).unwrap().density();
    let b = evolve_state(&State::Mixed(Operator::projector(&psi)), &spec, 1.7).unwrap().density();
    assert!((&a - &b).max_abs() < 1e-12);
    // exp(iHt) convention: psi(t) = V exp(iEt) V^dagger psi
    let u = spec.function(|_| 0.0);
    assert!(u.max_abs() < 1e-12);
    let e = spec.eigenvalues().to_vec();
    let v = spec.vectors();
    let forward = Operator::from_mat(v * faer::Mat::from_fn(8, 8, |i, j| if i == j { c64::from_polar(1.0, e[i] * 1.7) } else { c64::new(0.0, 0.0) }) * v.adjoint());
    let want = Operator::projector(&forward.apply(&psi));
    assert!((&a - &want).max_abs() < 1e-12);
}

#[test]
fn batched_states_match_single_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = chain_graph(4, Boundary::Open, true).unwrap();
    let h = ising_chain(&g, Boundary::Open, 1.0, 0.8, 0.3).unwrap().assemble().unwrap();
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    assert!(spec.real_vectors().is_some());
    let psi = random_product(4, &mut rng);
    let ev = PureEvolution::new(&spec, &psi).unwrap();
    let times = uniform_grid(0.0, 40.0, 300);
    ev.for_each(&times, |i, v| {
        let w = ev.state_at(times[i]);
        let diff: f64 = v.iter().zip(&w).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    });
}

#[test]
fn dephased_state_is_long_time_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = chain_graph(3, Boundary::Open, true).unwrap();
    let h = random_local_chain(&g, Boundary::Open, 0.7, &mut rng).unwrap().assemble().unwrap();
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let psi = random_product(3, &mut rng);
    let omega = dephase(&State::Pure(psi.clone()), &spec).unwrap();
    let lv = spec.levels();
    let min_gap = lv.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let t_end = 1e4 / min_gap;
    // resolve the fastest oscillation
    let n = ((4.0 * t_end * spec.range() / std::f64::consts::PI) as usize).max(4096);
    let times = uniform_grid(0.0, t_end, n);
    let w = trapezoid_weights(&times);
    let mut avg = Operator::zeros(8);
    PureEvolution::new(&spec, &psi).unwrap().for_each(&times, |i, v| {
        avg += &Operator::projector(v).scale_real(w[i]);
    });
    assert!(trace_distance(&avg, &omega).unwrap() < 1e-3);
    // dephasing keeps the populations and is idempotent
    let again = dephase(&State::Mixed(omega.clone()), &spec).unwrap();
    assert!((&again - &omega).max_abs() < 1e-12);
}

#[test]
fn reduced_dephased_state_matches_full_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let g = chain_graph(4, Boundary::Open, true).unwrap();
    let h = ising_chain(&g, Boundary::Open, 1.0, 0.5, 0.0).unwrap().assemble().unwrap();
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    assert!(!spec.is_nondegenerate() || spec.dim() == 16);
    let psi = random_product(4, &mut rng);
    let a = dephased_reduced(&State::Pure(psi.clone()), &spec, &[2; 4], &[1, 2]).unwrap();
    let b = partial_trace_dims(&[2; 4], &State::Mixed(dephase(&State::Pure(psi), &spec).unwrap()), &[1, 2]);
    assert!((&a - &b).max_abs() < 1e-12);
}

#[test]
fn eigenstate_is_stationary() {
    let g = chain_graph(3, Boundary::Open, true).unwrap();
    let h = ising_chain(&g, Boundary::Open, 1.0, 0.9, 0.2).unwrap().assemble().unwrap();
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let v = spec.vector(3);
    let a = sigma_z_on(3, 1);
    let st = State::Pure(v.clone());
    assert!(infinite_time_avg_sq_deviation(&a, &st, &spec).unwrap() < 1e-24);
    let sp = survival_probability(&v, &spec, &uniform_grid(0.0, 10.0, 11)).unwrap();
    assert!(sp.values.iter().all(|x| (x - 1.0).abs() < 1e-12));
}

#[test]
fn degenerate_gaps_add_coherently() {
    // levels 0, 1, 2 with equal weights; A couples all pairs equally.
    // deviation = (2/3) Re[2 e^{it} + e^{2it}]... computed from the
    // trigonometric sum: W_{+-1} = 2/3, W_{+-2} = 1/3 -> 2*(4/9 + 1/9) = 10/9
    let spec = diagonalize(&Operator::diagonal(&[0.0, 1.0, 2.0]), 1e-10).unwrap();
    let s = 1.0 / 3f64.sqrt();
    let psi = vec![c64::new(s, 0.0); 3];
    let a = Operator::from_real_fn(3, |_, _| 1.0);
    let exact = infinite_time_avg_sq_deviation(&a, &State::Pure(psi.clone()), &spec).unwrap();
    assert!((exact - 10.0 / 9.0).abs() < 1e-14);
    // periodic signal: quadrature over whole periods is exact
    let times = uniform_grid(0.0, 2.0 * std::f64::consts::PI * 10.0, 4001);
    let tr = expectation_trajectory(&a, &State::Pure(psi.clone()), &spec, &times).unwrap();
    let mean = finite_time_average(&tr);
    let sq = Trajectory::new(times, tr.values.iter().map(|v| (v - mean).powi(2)).collect()).unwrap();
    assert!((finite_time_average(&sq) - exact).abs() < 1e-10);
}

#[test]
fn exact_average_matches_long_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = chain_graph(4, Boundary::Open, true).unwrap();
    let h = random_local_chain(&g, Boundary::Open, 0.6, &mut rng).unwrap().assemble().unwrap();
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let psi = random_product(4, &mut rng);
    let st = State::Pure(psi);
    let a = sigma_z_on(4, 1);
    let exact = infinite_time_avg_sq_deviation(&a, &st, &spec).unwrap();
    let omega = dephase(&st, &spec).unwrap();
    let mean = omega.trace_product(&a).re;
    let times = uniform_grid(0.0, 3000.0, 60_001);
    let tr = expectation_trajectory(&a, &st, &spec, &times).unwrap();
    let sq = Trajectory::new(times, tr.values.iter().map(|v| (v - mean).powi(2)).collect()).unwrap();
    let q = finite_time_average(&sq);
    assert!((q - exact).abs() / exact < 0.05, "quadrature {q} exact {exact}");
}

#[test]
fn ramp_segments_compose() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h1 = random_hermitian(4, false, &mut rng);
    let h2 = random_hermitian(4, true, &mut rng);
    let psi = random_product(2, &mut rng);
    let st = State::Pure(psi);
    let once = ramp_evolve(&[(h1.clone(), 0.9), (h2.clone(), 0.4)], &st).unwrap();
    let split = ramp_evolve(&[(h1.clone(), 0.5), (h1, 0.4), (h2, 0.4)], &st).unwrap();
    assert!((&once.density() - &split.density()).max_abs() < 1e-12);
    assert!(ramp_evolve(&[(Operator::identity(4), -1.0)], &st).is_err());
}

#[test]
fn light_cone_in_ising_chain() {
    let n = 7;
    let g = chain_graph(n, Boundary::Open, true).unwrap();
    let h = ising_chain(&g, Boundary::Open, 1.0, 1.0, 0.0).unwrap().assemble().unwrap();
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let a = embed_local_operator(&[2; 7], SiteKind::Spin, &[0], &pauli::z()).unwrap();
    let times = uniform_grid(0.0, 4.0, 81);
    let mut profiles = Vec::new();
    for site in 2..n {
        let b = embed_local_operator(&[2; 7], SiteKind::Spin, &[site], &pauli::z()).unwrap();
        let p = lieb_robinson_profile(&spec, &a, &b, &times).unwrap();
        assert!(p.values[0] < 1e-12);
        profiles.push((site as f64, p));
    }
    let fit = front_velocity(&profiles, ARRIVAL_THRESHOLD).unwrap();
    // later arrival further away
    assert!(fit.arrival_times.windows(2).all(|w| w[1] > w[0]));
    assert!(fit.velocity > 0.5 && fit.velocity < 10.0, "{}", fit.velocity);
}

#[test]
fn entanglement_growth_needs_a_product_state() {
    let g = chain_graph(4, Boundary::Open, true).unwrap();
    let h = ising_chain(&g, Boundary::Open, 1.0, 0.9, 0.4).unwrap().assemble().unwrap();
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let times = uniform_grid(0.0, 5.0, 11);
    let neel = neel_state(4, true);
    let tr = entanglement_growth(&neel, &spec, &[2; 4], &[0, 1], &times).unwrap();
    assert!(tr.values[0] < 1e-10);
    assert!(tr.values[10] > 0.1);
    let bell_like = spec.vector(0);
    assert!(matches!(entanglement_growth(&bell_like, &spec, &[2; 4], &[0, 1], &times), Err(DynamicsError::NotProduct { .. })));
}

#[test]
fn grids_are_validated() {
    assert!(Trajectory::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    assert!(Trajectory::new(vec![0.0, 1.0], vec![1.0]).is_err());
    let spec = diagonalize(&Operator::diagonal(&[0.0, 1.0, 3.0]), 1e-10).unwrap();
    let g = default_grid(&spec);
    assert_eq!(g.len(), 512);
    assert!((g[511] - 20.0 * std::f64::consts::PI / 1.5).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trapezoid_is_exact_for_affine(a in -3.0f64..3.0, b in -3.0f64..3.0, n in 2usize..50, t1 in 0.5f64..20.0) {
        let times = uniform_grid(0.0, t1, n);
        let tr = Trajectory::new(times.clone(), times.iter().map(|t| a * t + b).collect()).unwrap();
        prop_assert!((finite_time_average(&tr) - (a * t1 / 2.0 + b)).abs() < 1e-10);
    }

    #[test]
    fn survival_starts_at_one_and_stays_bounded(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(8, false, &mut rng);
        let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
        let psi = random_product(3, &mut rng);
        let sp = survival_probability(&psi, &spec, &uniform_grid(0.0, 5.0, 21)).unwrap();
        prop_assert!((sp.values[0] - 1.0).abs() < 1e-12);
        prop_assert!(sp.values.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
        // survival equals the overlap computed from evolved vectors
        let v = evolve_state(&State::Pure(psi.clone()), &spec, 2.5).unwrap();
        if let State::Pure(v) = v {
            let direct = inner(&psi, &v).norm_sqr();
            let sp2 = survival_probability(&psi, &spec, &[2.5]).unwrap();
            prop_assert!((direct - sp2.values[0]).abs() < 1e-12);
        }
    }
}

#[test]
fn sampled_average_matches_gap_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = chain_graph(6, Boundary::Open, true).unwrap();
    let h = random_local_chain(&g, Boundary::Open, 0.7, &mut rng).unwrap().assemble().unwrap();
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let lv = spec.levels();
    let min_gap = lv.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let psi = random_product(6, &mut rng);
    let a = sigma_z_on(6, 2);
    let st = State::Pure(psi);
    let exact = infinite_time_avg_sq_deviation(&a, &st, &spec).unwrap();
    let sampled = sampled_time_avg_sq_deviation(&a, &st, &spec, 1e4 / min_gap, 100_000, 3).unwrap();
    assert!((sampled - exact).abs() <= 0.05 * exact, "sampled {sampled} exact {exact}");
    assert!(sampled_time_avg_sq_deviation(&a, &st, &spec, 0.0, 10, 3).is_err());
}
