use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermolab::c64;
use thermolab::lattice::models::random_hermitian;
use thermolab::lattice::{Operator, State};
use thermolab::spectral::*;

#[test]
fn ladder_has_degenerate_gaps() {
    let h = Operator::diagonal(&[0.0, 1.0, 2.0, 3.0, 4.0]);
    let s = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    // the gap 1 appears for the four neighbouring pairs
    assert_eq!(gap_count(&s, 0.0), 4);
    assert!(!has_nondegenerate_gaps(&s));
}

#[test]
fn generic_levels_have_single_gaps() {
    let h = Operator::diagonal(&[0.0, 1.0, 3.0, 7.5]);
    let s = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    assert_eq!(gap_count(&s, 0.0), 1);
    assert!(has_nondegenerate_gaps(&s));
    // window of width 1 around gap values 1, 2: {1, 2} -> 2
    assert_eq!(gap_count(&s, 1.0), 2);
}

#[test]
fn degenerate_levels_are_grouped() {
    let h = Operator::diagonal(&[1.0, 0.0, 0.0]);
    let s = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    assert_eq!(s.levels(), &[0.0, 1.0]);
    assert_eq!(s.multiplicities(), vec![2, 1]);
    let p = s.projector(0);
    assert!((&p - &Operator::diagonal(&[0.0, 1.0, 1.0])).max_abs() < 1e-14);
}

#[test]
fn non_hermitian_input_rejected() {
    let mut h = Operator::diagonal(&[1.0, 2.0]);
    h.set(0, 1, c64::new(1.0, 0.0));
    assert!(matches!(diagonalize(&h, 1e-10), Err(SpectralError::NotHermitian { .. })));
}

#[test]
fn spacing_ratios_of_small_sequence() {
    let r = level_spacing_ratios(&[0.0, 1.0, 3.0, 3.5]);
    assert_eq!(r, vec![0.5, 0.25]);
}

#[test]
fn state_counting_window_is_closed() {
    let h = Operator::diagonal(&[0.0, 1.0, 1.0, 2.0]);
    let s = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    assert_eq!(number_of_states(&s, 1.0, 1.0), 3);
    assert_eq!(number_of_states(&s, 0.5, 0.4), 0);
}

#[test]
fn fourier_spectrum_at_zero_and_for_two_levels() {
    assert!((fourier_spectrum(&[0.3, -2.0, 5.0], 0.0) - c64::new(1.0, 0.0)).norm() < 1e-15);
    // two levels +-1: f(t) = cos t
    let f = fourier_spectrum(&[-1.0, 1.0], 0.9);
    assert!((f - c64::new(0.9f64.cos(), 0.0)).norm() < 1e-15);
}

#[test]
fn spectrum_csv_has_header_and_rows() {
    let s = diagonalize(&Operator::diagonal(&[0.0, 0.0, 1.0]), 1e-10).unwrap();
    let mut buf = Vec::new();
    write_spectrum_csv(&mut buf, &s, &[("model", "toy".to_string())]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# model: toy");
    assert!(lines.contains(&"index,energy,multiplicity"));
    assert!(lines.last().unwrap().ends_with(",1"));
}

#[test]
fn large_complex_matrix_passes_sampled_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = random_hermitian(1100, false, &mut rng);
    let s = diagonalize(&h, 1e-10).unwrap();
    assert_eq!(s.dim(), 1100);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projectors_resolve_the_hamiltonian(seed in 0u64..10_000, d in 2usize..12, real in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(d, real, &mut rng);
        let s = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
        let mut sum = Operator::zeros(d);
        let mut recon = Operator::zeros(d);
        for k in 0..s.n_levels() {
            let p = s.projector(k);
            sum += &p;
            recon += &p.scale_real(s.levels()[k]);
            for l in 0..s.n_levels() {
                let pp = p.matmul(&s.projector(l));
                let want = if k == l { p.clone() } else { Operator::zeros(d) };
                prop_assert!((&pp - &want).max_abs() < 1e-12);
            }
        }
        prop_assert!((&sum - &Operator::identity(d)).max_abs() < 1e-12);
        prop_assert!((&recon - &h).max_abs() < 1e-12);
        let f = s.function(|e| e);
        prop_assert!((&f - &h).max_abs() < 1e-12);
    }

    #[test]
    fn populations_sum_to_one(seed in 0u64..10_000, d in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(d, false, &mut rng);
        let s = diagonalize(&h, DEFAULT_DEGENERACY_TOL).unwrap();
        let mut psi: Vec<c64> = (0..d).map(|i| c64::new(1.0 + i as f64, 0.5)).collect();
        thermolab::lattice::normalise(&mut psi);
        let p = level_populations(&s, &State::Pure(psi.clone())).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let pm = level_populations(&s, &State::Mixed(Operator::projector(&psi))).unwrap();
        for (a, b) in p.iter().zip(&pm) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spacing_ratios_lie_in_unit_interval(v in proptest::collection::vec(-10.0f64..10.0, 3..40)) {
        let mut v = v;
        v.sort_by(f64::total_cmp);
        for r in level_spacing_ratios(&v) {
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn gap_count_is_monotone_in_width(v in proptest::collection::vec(-5.0f64..5.0, 2..15), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let mut v = v;
        v.sort_by(f64::total_cmp);
        let g = sorted_gaps(&v);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(max_in_window(&g, lo) <= max_in_window(&g, hi));
        prop_assert!(max_in_window(&g, 0.0) >= 1);
    }
}
