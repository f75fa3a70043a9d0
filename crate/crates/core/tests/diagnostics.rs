use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermolab::c64;
use thermolab::diagnostics::*;
use thermolab::lattice::models::{chain_graph, ising_chain, random_hermitian};
use thermolab::lattice::*;
use thermolab::spectral::{diagonalize, DEFAULT_DEGENERACY_TOL};

fn sx_at(n: usize, site: usize) -> Operator {
    embed_local_operator(&vec![2; n], SiteKind::Spin, &[site], &pauli::x()).unwrap()
}

fn random_qubit(rng: &mut ChaCha8Rng) -> Vec<c64> {
    use rand::Rng;
    bloch_state(rng.random::<f64>() * 3.0, rng.random::<f64>() * 6.0)
}

#[test]
fn eth_chaotic_chain_has_narrower_windows_than_free_chain() {
    let n = 10;
    let g = chain_graph(n, Boundary::Open, true).unwrap();
    let a = sx_at(n, n / 2);
    let chaotic = diagonalize(&ising_chain(&g, Boundary::Open, 1.0, 0.9045, 0.809).unwrap().assemble().unwrap(), DEFAULT_DEGENERACY_TOL).unwrap();
    let free = diagonalize(&ising_chain(&g, Boundary::Open, 1.0, 0.9045, 0.0).unwrap().assemble().unwrap(), DEFAULT_DEGENERACY_TOL).unwrap();
    let sc = eth_scan(&a, &chaotic, 0.5).unwrap();
    let sf = eth_scan(&a, &free, 0.5).unwrap();
    assert_eq!(sc.diagonal.len(), 1 << n);
    assert_eq!(sc.off_diagonal.len(), (1 << n) - 1);
    let (c, f) = (sc.mid_spectrum_spread(), sf.mid_spectrum_spread());
    assert!(c < f, "chaotic {c} free {f}");
    // window means track the thermal value in the chaotic chain
    for w in sc.windows.iter().filter(|w| w.count > 20) {
        if let Some(t) = w.thermal_value {
            assert!((w.mean - t).abs() < 0.15, "window at {}: mean {} thermal {t}", w.lo, w.mean);
        }
    }
}

#[test]
fn eth_identity_and_hamiltonian() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = random_hermitian(24, false, &mut rng);
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let s = eth_scan(&Operator::identity(24), &spec, 0.4).unwrap();
    assert!(s.diagonal.iter().all(|d| (d - 1.0).abs() < 1e-12));
    assert!(s.max_window_spread < 1e-12);
    let s = eth_scan(&h, &spec, 0.4).unwrap();
    for (d, e) in s.diagonal.iter().zip(&s.energies) {
        assert!((d - e).abs() < 1e-10);
    }
    for w in &s.windows {
        assert!(w.spread <= 0.4 + 1e-10);
    }
}

#[test]
fn eth_counts_cover_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = random_hermitian(32, false, &mut rng);
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let a = random_hermitian(32, false, &mut rng);
    let s = eth_scan(&a, &spec, 0.3).unwrap();
    assert_eq!(s.windows.iter().map(|w| w.count).sum::<usize>(), 32);
    // diagonal sums to the trace
    let tr: f64 = s.diagonal.iter().sum();
    assert!((tr - a.trace().re).abs() < 1e-10);
    assert!(eth_scan(&a, &spec, 0.0).is_err());
    assert!(eth_scan(&Operator::identity(4), &spec, 0.3).is_err());
}

#[test]
fn eth_degenerate_level_spread() {
    // H = Z on a qubit tensored with the identity: two doubly degenerate levels
    let h = pauli::z().kron(&Operator::identity(2));
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let a = Operator::identity(2).kron(&pauli::x());
    let s = eth_scan(&a, &spec, 1.0).unwrap();
    assert_eq!(s.level_spread.len(), 2);
    for v in s.level_spread {
        assert!((v - 2.0).abs() < 1e-12);
    }
}

#[test]
fn effective_entanglement_vanishes_for_eigenstates_and_trivial_h() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dims = vec![2; 4];
    let h = random_hermitian(16, false, &mut rng);
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let r = effective_eigenbasis_entanglement(&spec.vector(3), &spec, &dims, &[0]).unwrap();
    assert!(r < 1e-12);
    // a single level: Pi psi = psi
    let zero = diagonalize(&Operator::zeros(16), DEFAULT_DEGENERACY_TOL).unwrap();
    let psi: Vec<c64> = product_state(&(0..4).map(|_| random_qubit(&mut rng)).collect::<Vec<_>>());
    assert!(effective_eigenbasis_entanglement(&psi, &zero, &dims, &[0, 1]).unwrap() < 1e-12);
}

#[test]
fn effective_entanglement_two_qubit_oracle() {
    // H = Z x Z: levels +1 {00, 11} and -1 {01, 10}. Start |+>|+>.
    let h = pauli::z().kron(&pauli::z());
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let plus = bloch_state(std::f64::consts::FRAC_PI_2, 0.0);
    let psi = product_state(&[plus.clone(), plus]);
    // each level component (|00>+|11>)/2 reduces to I/2 on either qubit;
    // psi^S = |+><+| sits at trace distance 1/2 from I/2.
    let r = effective_eigenbasis_entanglement(&psi, &spec, &[2, 2], &[0]).unwrap();
    assert!((r - 0.5).abs() < 1e-12, "{r}");
}

#[test]
fn memory_bound_holds_on_random_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 5;
    let dims = vec![2; n];
    let g = chain_graph(n, Boundary::Open, true).unwrap();
    let spec = diagonalize(&ising_chain(&g, Boundary::Open, 1.0, 0.7, 0.3).unwrap().assemble().unwrap(), DEFAULT_DEGENERACY_TOL).unwrap();
    let bath: Vec<Vec<c64>> = (1..n).map(|_| random_qubit(&mut rng)).collect();
    for _ in 0..10 {
        let mk = |s: Vec<c64>| {
            let mut f = vec![s];
            f.extend(bath.iter().cloned());
            product_state(&f)
        };
        let p1 = mk(random_qubit(&mut rng));
        let p2 = mk(random_qubit(&mut rng));
        let rep = initial_state_memory_bound(&p1, &p2, &spec, &dims, &[0]).unwrap();
        assert!(rep.satisfied, "{rep:?}");
        assert!(rep.r1 >= 0.0 && rep.r2 >= 0.0);
        assert!((rep.rhs - (rep.initial_distance - rep.r1 - rep.r2)).abs() < 1e-15);
    }
}

#[test]
fn memory_bound_is_tight_for_trivial_dynamics() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let spec = diagonalize(&Operator::zeros(8), DEFAULT_DEGENERACY_TOL).unwrap();
    let b = product_state(&[random_qubit(&mut rng), random_qubit(&mut rng)]);
    let p1 = product_state(&[random_qubit(&mut rng), b.clone()]);
    let p2 = product_state(&[random_qubit(&mut rng), b]);
    let rep = initial_state_memory_bound(&p1, &p2, &spec, &[2, 2, 2], &[0]).unwrap();
    assert!((rep.lhs - rep.initial_distance).abs() < 1e-12);
    assert!((rep.lhs - rep.rhs).abs() < 1e-12);
}

#[test]
fn memory_bound_rejects_bad_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = diagonalize(&random_hermitian(4, false, &mut rng), DEFAULT_DEGENERACY_TOL).unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let bell = vec![c64::new(s, 0.0), c64::new(0.0, 0.0), c64::new(0.0, 0.0), c64::new(s, 0.0)];
    let prod = basis_state(&[2, 2], &[0, 0]);
    assert!(matches!(initial_state_memory_bound(&bell, &prod, &spec, &[2, 2], &[0]), Err(DiagnosticsError::NotProduct { .. })));
    let other_bath = basis_state(&[2, 2], &[0, 1]);
    assert!(matches!(initial_state_memory_bound(&prod, &other_bath, &spec, &[2, 2], &[0]), Err(DiagnosticsError::DifferentBath { .. })));
}

#[test]
fn anderson_construction() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(anderson_hamiltonian(1, 1.0, 1.0, &mut rng).is_err());
    let h = anderson_hamiltonian(6, 2.0, 3.0, &mut rng).unwrap();
    assert!(h.is_hermitian(0.0));
    for i in 0..6 {
        assert!(h.get(i, i).re.abs() <= 3.0 + 1e-15);
        for j in 0..6 {
            if i.abs_diff(j) == 1 {
                assert_eq!(h.get(i, j).re, 1.0);
            } else if i != j {
                assert_eq!(h.get(i, j).re, 0.0);
            }
        }
    }
}

#[test]
fn clean_chain_spreads_ballistically() {
    // <x^2>(t) = sum_m m^2 J_m(2t)^2 = 2 t^2 on the infinite chain
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h = anderson_hamiltonian(200, 0.0, 1.0, &mut rng).unwrap();
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let times: Vec<f64> = (0..=20).map(|k| 0.5 * k as f64).collect();
    let rep = transport_moments(100, &spec, &times, 2.0).unwrap();
    for (t, v) in rep.moments.times.iter().zip(&rep.moments.values) {
        assert!((v - 2.0 * t * t).abs() < 1e-8 * (1.0 + v), "t={t}: {v}");
    }
    assert!((rep.supremum - 200.0).abs() < 1e-6);
}

#[test]
fn strong_disorder_halts_spreading() {
    let times: Vec<f64> = (0..=200).map(|k| k as f64).collect();
    let clean = diagonalize(&anderson_hamiltonian(200, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), DEFAULT_DEGENERACY_TOL).unwrap();
    assert!(transport_moments(100, &clean, &times, 2.0).unwrap().supremum > 400.0);
    for seed in 0..5 {
        let h = anderson_hamiltonian(200, 1.0, 4.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
        let sup = transport_moments(100, &spec, &times, 2.0).unwrap().supremum;
        assert!(sup < 400.0, "seed {seed}: {sup}");
    }
}

#[test]
fn disorder_raises_participation_ratio() {
    let l = 200;
    let clean = diagonalize(&anderson_hamiltonian(l, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), DEFAULT_DEGENERACY_TOL).unwrap();
    let clean_ipr = eigenfunction_localization(&clean).median_ipr;
    // standing waves: sum_x (2/(L+1))^2 sin^4 = 3/(2(L+1))
    assert!((clean_ipr - 1.5 / (l as f64 + 1.0)).abs() < 1e-10);
    let medians: Vec<f64> = (0..100)
        .map(|s| {
            let h = anderson_hamiltonian(l, 2.0, 1.0, &mut thermolab::rng::stream_rng(4, s)).unwrap();
            eigenfunction_localization(&diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap()).median_ipr
        })
        .collect();
    let mut m = medians.clone();
    m.sort_by(f64::total_cmp);
    let med = 0.5 * (m[49] + m[50]);
    assert!(med >= 10.0 * clean_ipr, "median {med} clean {clean_ipr}");
}

#[test]
fn localization_length_of_exponential_state() {
    // A single site with a strong potential binds an exponentially decaying state
    let l = 41;
    let mut h = anderson_hamiltonian(l, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    h.set(20, 20, c64::new(10.0, 0.0));
    let spec = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    let rep = eigenfunction_localization(&spec);
    // bound state at E with E = V sqrt(1 + 4/V^2), psi ~ q^|x|, E = q + 1/q
    let e = 10.0 * (1.0f64 + 4.0 / 100.0).sqrt();
    let q = (e - (e * e - 4.0).sqrt()) / 2.0;
    let top = l - 1;
    let xi = rep.decay_length[top].unwrap();
    assert!((xi - (-1.0 / q.ln())).abs() < 1e-3, "{xi}");
}

#[test]
fn half_filling_ratio_reflects_disorder() {
    let (weak, _) = disorder_averaged_ratio(10, 0.5, Boundary::Periodic, 20, 7, 0).unwrap();
    let (strong, _) = disorder_averaged_ratio(10, 8.0, Boundary::Periodic, 20, 7, 1000).unwrap();
    assert!((weak - R_GOE).abs() < 0.04, "weak {weak}");
    assert!((strong - R_POISSON).abs() < 0.04, "strong {strong}");
}

#[test]
fn imbalance_decays_only_without_disorder() {
    let n = 10;
    let sector = SectorBasis::half_filling(n);
    let times: Vec<f64> = (0..=40).map(|k| 2.5 * k as f64).collect();
    let run = |w: f64, seed: u64| {
        let h = disordered_heisenberg(n, w, Boundary::Periodic, &mut thermolab::rng::stream_rng(seed, 0)).unwrap();
        let spec = diagonalize(&h.assemble_in_basis(sector.states()).unwrap(), DEFAULT_DEGENERACY_TOL).unwrap();
        imbalance_trajectory(&spec, n, sector.states(), &times).unwrap()
    };
    let weak: f64 = (0..5).map(|s| run(0.5, s).long_time).sum::<f64>() / 5.0;
    let strong: f64 = (0..5).map(|s| run(8.0, s).long_time).sum::<f64>() / 5.0;
    assert!(weak.abs() < 0.1, "weak {weak}");
    assert!(strong > 0.4, "strong {strong}");
    let r = run(8.0, 0);
    assert!((r.trajectory.values[0] - 1.0).abs() < 1e-12);
}

#[test]
fn imbalance_on_full_space_matches_sector() {
    let n = 6;
    let h = disordered_heisenberg(n, 1.0, Boundary::Open, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let sector = SectorBasis::half_filling(n);
    let full: Vec<usize> = (0..1 << n).collect();
    let times = [0.0, 0.7, 3.1];
    let a = imbalance_trajectory(&diagonalize(&h.assemble().unwrap(), DEFAULT_DEGENERACY_TOL).unwrap(), n, &full, &times).unwrap();
    let b = imbalance_trajectory(&diagonalize(&h.assemble_in_basis(sector.states()).unwrap(), DEFAULT_DEGENERACY_TOL).unwrap(), n, sector.states(), &times).unwrap();
    for (x, y) in a.trajectory.values.iter().zip(&b.trajectory.values) {
        assert!((x - y).abs() < 1e-10);
    }
    assert!((a.long_time - b.long_time).abs() < 1e-10);
}

#[test]
fn mbl_report_table() {
    let params = MblParams {
        n: 8,
        disorder: vec![0.5, 8.0],
        realizations: 20,
        seed: 3,
        times: (0..12).map(|k| 0.5 * 2f64.powi(k)).collect(),
        boundary: Boundary::Periodic,
    };
    let rep = mbl_report(&params).unwrap();
    assert_eq!(rep.rows.len(), 2);
    let (weak, strong) = (&rep.rows[0], &rep.rows[1]);
    assert!(weak.mean_r > strong.mean_r);
    assert!(weak.imbalance_infty < strong.imbalance_infty);
    assert!(weak.eigenstate_entropy_mean > strong.eigenstate_entropy_mean);
    let c = rep.crossover.unwrap();
    assert!(c > 0.5 && c < 8.0);
    let mut buf = Vec::new();
    write_mbl_csv(&mut buf, &rep).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().nth(1).unwrap().starts_with("W,mean_r"));

    let mut few = params.clone();
    few.realizations = 19;
    assert!(mbl_report(&few).is_err());
    let mut odd = params;
    odd.n = 7;
    assert!(mbl_report(&odd).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn effective_entanglement_bounded(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = diagonalize(&random_hermitian(8, false, &mut rng), DEFAULT_DEGENERACY_TOL).unwrap();
        let psi = product_state(&(0..3).map(|_| random_qubit(&mut rng)).collect::<Vec<_>>());
        let r = effective_eigenbasis_entanglement(&psi, &spec, &[2, 2, 2], &[1]).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&r));
    }

    #[test]
    fn spacing_ratio_in_unit_interval(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_hermitian(30, true, &mut rng).eigvalsh().unwrap();
        let r = mid_spectrum_ratio(&e);
        prop_assert!((0.0..=1.0).contains(&r));
    }
}
