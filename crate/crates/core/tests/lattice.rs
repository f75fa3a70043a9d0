use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermolab::c64;
use thermolab::lattice::fermions::{embed_fermionic, hopping_pair, jordan_wigner, ModeOp};
use thermolab::lattice::models::{chain_graph, ising_chain, random_hermitian, ModelSpec};
use thermolab::lattice::*;

fn close(a: &Operator, b: &Operator, tol: f64) -> bool {
    a.dim() == b.dim() && (a - b).max_abs() <= tol
}

/// Brute-force embedding: explicit loop over all basis pairs.
fn embed_oracle(dims: &[usize], sites: &[usize], op: &Operator) -> Operator {
    let d: usize = dims.iter().product();
    let st = strides(dims);
    let digit = |x: usize, s: usize| (x / st[s]) % dims[s];
    let local = |x: usize| sites.iter().fold(0, |acc, &s| acc * dims[s] + digit(x, s));
    Operator::from_fn(d, |y, x| {
        let same_outside = (0..dims.len()).filter(|s| !sites.contains(s)).all(|s| digit(x, s) == digit(y, s));
        if same_outside {
            op.get(local(y), local(x))
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

#[test]
fn field_on_first_of_two_sites_is_left_kron() {
    let g = SiteGraph::new(vec![2, 2], SiteKind::Spin, vec![vec![0, 1]]).unwrap();
    let h = LocalHamiltonian::new(g, vec![LocalOperator::new(vec![0], pauli::x())]).unwrap();
    let want = pauli::x().kron(&Operator::identity(2));
    assert!(close(&h.assemble().unwrap(), &want, 0.0));
}

#[test]
fn two_site_ising_spectrum() {
    // symmetric/antisymmetric block reduction gives -r, -1, 1, r with r = sqrt(1 + 4h^2)
    let hx = 0.7;
    let g = chain_graph(2, Boundary::Open, true).unwrap();
    let h = ising_chain(&g, Boundary::Open, 1.0, hx, 0.0).unwrap().assemble().unwrap();
    let r = (1.0f64 + 4.0 * hx * hx).sqrt();
    let ev = h.eigvalsh().unwrap();
    for (a, b) in ev.iter().zip([-r, -1.0, 1.0, r]) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn non_hermitian_term_rejected() {
    let g = chain_graph(2, Boundary::Open, true).unwrap();
    let bad = pauli::annihilation();
    let err = LocalHamiltonian::new(g, vec![LocalOperator::new(vec![0], bad)]).unwrap_err();
    assert!(matches!(err, LatticeError::NotHermitian { .. }));
}

#[test]
fn wrong_local_dimension_rejected() {
    let g = chain_graph(3, Boundary::Open, true).unwrap();
    let err = LocalHamiltonian::new(g, vec![LocalOperator::new(vec![0, 1], pauli::x())]).unwrap_err();
    assert!(matches!(err, LatticeError::DimensionMismatch { .. }));
}

#[test]
fn term_must_sit_inside_an_edge() {
    let g = chain_graph(3, Boundary::Open, false).unwrap();
    let zz = pauli::z().kron(&pauli::z());
    let err = LocalHamiltonian::new(g, vec![LocalOperator::new(vec![0, 2], zz)]).unwrap_err();
    assert!(matches!(err, LatticeError::TermOutsideEdges { .. }));
}

#[test]
fn number_operator_on_middle_mode() {
    let n2 = embed_fermionic(3, &[1], &pauli::number()).unwrap();
    for x in 0..8usize {
        let occ = ((x >> 1) & 1) as f64;
        assert_eq!(n2.get(x, x).re, occ);
    }
    assert!((&n2 - &Operator::diagonal(&(0..8).map(|x| ((x >> 1) & 1) as f64).collect::<Vec<_>>())).max_abs() == 0.0);
}

#[test]
fn jordan_wigner_anticommutation() {
    let n = 4;
    for x in 0..n {
        for y in 0..n {
            let fx = jordan_wigner(x, n, ModeOp::Annihilate).unwrap();
            let fy_d = jordan_wigner(y, n, ModeOp::Create).unwrap();
            let fy = jordan_wigner(y, n, ModeOp::Annihilate).unwrap();
            let anti = &fx.matmul(&fy_d) + &fy_d.matmul(&fx);
            let want = if x == y { Operator::identity(16) } else { Operator::zeros(16) };
            assert!(close(&anti, &want, 1e-14));
            let anti2 = &fx.matmul(&fy) + &fy.matmul(&fx);
            assert!(anti2.max_abs() < 1e-14);
        }
    }
}

#[test]
fn hopping_across_a_mode_carries_the_string() {
    // f0^dag f2 + h.c. on 3 modes, built from full-space mode operators
    let n = 3;
    let f0 = jordan_wigner(0, n, ModeOp::Annihilate).unwrap();
    let f2 = jordan_wigner(2, n, ModeOp::Annihilate).unwrap();
    let want = &f0.adjoint().matmul(&f2) + &f2.adjoint().matmul(&f0);
    let got = embed_fermionic(n, &[0, 2], &hopping_pair()).unwrap();
    assert!(close(&got, &want, 1e-14));
    // adjacent modes need no string
    let f1 = jordan_wigner(1, n, ModeOp::Annihilate).unwrap();
    let want = &f1.adjoint().matmul(&f2) + &f2.adjoint().matmul(&f1);
    assert!(close(&embed_fermionic(n, &[1, 2], &hopping_pair()).unwrap(), &want, 1e-14));
}

#[test]
fn odd_fermionic_term_rejected() {
    let err = embed_fermionic(3, &[1], &pauli::annihilation()).unwrap_err();
    assert_eq!(err, LatticeError::OddFermionOperator);
}

#[test]
fn bell_state_reductions() {
    let s = 1.0 / 2f64.sqrt();
    let bell = vec![c64::new(s, 0.0), c64::new(0.0, 0.0), c64::new(0.0, 0.0), c64::new(s, 0.0)];
    let g = chain_graph(2, Boundary::Open, true).unwrap();
    let st = State::Pure(bell);
    let r = partial_trace(&g, &st, &[0]).unwrap();
    assert!(close(&r, &Operator::identity(2).scale_real(0.5), 1e-15));
    let e = entanglement_entropy(&g, &st, &[1], EntropyKind::VonNeumann).unwrap();
    assert!((e - 1.0).abs() < 1e-12);
    let r2 = entanglement_entropy(&g, &st, &[1], EntropyKind::Renyi(2.0)).unwrap();
    assert!((r2 - 1.0).abs() < 1e-12);
}

#[test]
fn partial_trace_of_mixed_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_density(2, &mut rng);
    let b = random_density(4, &mut rng);
    let g = chain_graph(3, Boundary::Open, true).unwrap();
    let st = State::Mixed(a.kron(&b));
    assert!(close(&partial_trace(&g, &st, &[0]).unwrap(), &a, 1e-14));
    assert!(close(&partial_trace(&g, &st, &[1, 2]).unwrap(), &b, 1e-14));
}

#[test]
fn fermionic_partial_trace_needs_contiguity() {
    let g = SiteGraph::new(vec![2; 3], SiteKind::Fermion, vec![vec![0, 1, 2]]).unwrap();
    let st = State::Pure(basis_state(&[2, 2, 2], &[1, 0, 1]));
    assert_eq!(partial_trace(&g, &st, &[0, 2]).unwrap_err(), LatticeError::NonContiguousFermionRegion);
    assert!(partial_trace(&g, &st, &[1, 2]).is_ok());
}

#[test]
fn trace_distance_and_fidelity_of_pure_states() {
    let up = bloch_state(0.0, 0.0);
    let plus = bloch_state(std::f64::consts::FRAC_PI_2, 0.0);
    let (p, q) = (Operator::projector(&up), Operator::projector(&plus));
    let ov = inner(&up, &plus).norm_sqr();
    assert!((fidelity(&p, &q).unwrap() - ov).abs() < 1e-12);
    // pure states: D = sqrt(1 - F)
    assert!((trace_distance(&p, &q).unwrap() - (1.0 - ov).sqrt()).abs() < 1e-12);
    let down = bloch_state(std::f64::consts::PI, 0.0);
    assert!((trace_distance(&p, &Operator::projector(&down)).unwrap() - 1.0).abs() < 1e-12);
    assert!(trace_distance(&p, &p).unwrap() < 1e-15);
}

#[test]
fn graph_distance_on_chain() {
    let g = chain_graph(5, Boundary::Open, false).unwrap();
    assert_eq!(graph_distance(&g, &[0], &[4]), Some(4));
    assert_eq!(graph_distance(&g, &[0], &[1]), Some(1));
    assert_eq!(graph_distance(&g, &[2, 3], &[3]), Some(0));
    let split = SiteGraph::new(vec![2; 4], SiteKind::Spin, vec![vec![0, 1], vec![2, 3]]).unwrap();
    assert_eq!(graph_distance(&split, &[0], &[3]), None);
    let ring = chain_graph(6, Boundary::Periodic, false).unwrap();
    assert_eq!(graph_distance(&ring, &[0], &[5]), Some(1));
    assert_eq!(graph_distance(&ring, &[0], &[3]), Some(3));
}

#[test]
fn model_file_matches_builder() {
    let text = r#"{"n_sites": 4, "boundary": "periodic",
        "terms": [{"template": "ising_zz", "coefficient": -1.0},
                  {"template": "field_x", "coefficient": 0.9},
                  {"template": "field_z", "coefficients": [0.1, 0.2, 0.3, 0.4]}]}"#;
    let h = ModelSpec::from_json(text).unwrap().build().unwrap().assemble().unwrap();
    let g = chain_graph(4, Boundary::Periodic, true).unwrap();
    let mut want = ising_chain(&g, Boundary::Periodic, -1.0, 0.9, 0.0).unwrap().assemble().unwrap();
    for (i, hz) in [0.1, 0.2, 0.3, 0.4].iter().enumerate() {
        want += &embed_local_operator(&[2; 4], SiteKind::Spin, &[i], &pauli::z().scale_real(*hz)).unwrap();
    }
    assert!(close(&h, &want, 1e-14));
}

#[test]
fn model_file_rejects_unknown_keys() {
    let text = r#"{"n_sites": 2, "terms": [], "colour": "red"}"#;
    assert!(matches!(ModelSpec::from_json(text), Err(LatticeError::ModelParse(_))));
}

#[test]
fn spinful_hubbard_dimer() {
    // two sites, one up and one down electron: the on-site pair energy U
    // splits the singlet; check against Jordan-Wigner matrices
    let text = r#"{"n_sites": 2, "kind": "fermion", "spinful": true,
        "terms": [{"template": "hopping", "coefficient": -1.0},
                  {"template": "hubbard_u", "coefficient": 4.0}]}"#;
    let h = ModelSpec::from_json(text).unwrap().build().unwrap().assemble().unwrap();
    let f = |m| jordan_wigner(m, 4, ModeOp::Annihilate).unwrap();
    let num = |m| f(m).adjoint().matmul(&f(m));
    let mut want = Operator::zeros(16);
    for s in 0..2 {
        let (a, b) = (f(s), f(2 + s));
        want -= &(&a.adjoint().matmul(&b) + &b.adjoint().matmul(&a));
    }
    for i in 0..2 {
        want += &num(2 * i).matmul(&num(2 * i + 1)).scale_real(4.0);
    }
    assert!(close(&h, &want, 1e-14));
}

#[test]
fn restricted_and_truncated_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = chain_graph(5, Boundary::Open, true).unwrap();
    let h = models::random_local_chain(&g, Boundary::Open, 0.5, &mut rng).unwrap();
    let region = [1, 2, 3];
    let full = h.restricted(&region).unwrap().assemble().unwrap();
    let trunc = h.truncated(&region).unwrap().assemble().unwrap();
    let want = Operator::identity(2).kron(&trunc).kron(&Operator::identity(2));
    assert!(close(&full, &want, 1e-13));
    // edge terms add back up to H
    let mut sum = Operator::zeros(32);
    for t in h.edge_terms().unwrap() {
        sum += &t.embed(&g).unwrap();
    }
    assert!(close(&sum, &h.assemble().unwrap(), 1e-13));
}

#[test]
fn sic_measurement_is_complete_and_bounded_by_trace_distance() {
    let m = informationally_complete(&[0, 1]);
    assert_eq!(m.distinct_elements(), 16);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_density(4, &mut rng);
    let b = random_density(4, &mut rng);
    let dm = restricted_distinguishability(&m, &a, &b).unwrap();
    assert!(dm <= trace_distance(&a, &b).unwrap() + 1e-14);
    assert!(dm > 0.0);
}

#[test]
fn half_filling_sector_dimension() {
    assert_eq!(SectorBasis::half_filling(12).dim(), 924);
    assert_eq!(SectorBasis::half_filling(10).dim(), 252);
}

#[test]
fn covariance_at_tau_one_is_plain_connected_correlator() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rho = random_density(4, &mut rng);
    let a = random_hermitian(4, false, &mut rng);
    let b = random_hermitian(4, false, &mut rng);
    let (cv, _) = covariance(&rho, &a, &b, 1.0, 1e-14).unwrap();
    let want = rho.matmul(&a).matmul(&b).trace() - rho.trace_product(&a) * rho.trace_product(&b);
    assert!((cv - want).norm() < 1e-12);
}

fn random_density(d: usize, rng: &mut ChaCha8Rng) -> Operator {
    let h = random_hermitian(d, false, rng);
    let p = h.matmul(&h.adjoint());
    let p = &p + &Operator::identity(d).scale_real(0.1);
    let tr = p.trace().re;
    p.scale_real(1.0 / tr)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn embedding_matches_brute_force(seed in 0u64..1000, n in 2usize..5, k in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = k.min(n);
        let mut sites: Vec<usize> = rand::seq::index::sample(&mut rng, n, k).into_vec();
        sites.sort_unstable();
        let dims: Vec<usize> = (0..n).map(|i| 2 + (i + seed as usize) % 2).collect();
        let ld: usize = sites.iter().map(|&s| dims[s]).product();
        let op = random_hermitian(ld, false, &mut rng);
        let got = embed_local_operator(&dims, SiteKind::Spin, &sites, &op).unwrap();
        prop_assert!(close(&got, &embed_oracle(&dims, &sites, &op), 1e-14));
    }

    #[test]
    fn reduced_states_are_normalised_and_positive(seed in 0u64..1000, keep_mask in 1u32..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut psi: Vec<c64> = (0..16).map(|_| {
            use rand_distr::{Distribution, StandardNormal};
            c64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        }).collect();
        normalise(&mut psi);
        let keep: Vec<usize> = (0..4).filter(|b| keep_mask & (1 << b) != 0).collect();
        let r = partial_trace_dims(&[2; 4], &State::Pure(psi.clone()), &keep);
        prop_assert!((r.trace().re - 1.0).abs() < 1e-12);
        prop_assert!(r.eigvalsh().unwrap()[0] > -1e-12);
        // pure and mixed routes agree
        let r2 = partial_trace_dims(&[2; 4], &State::Mixed(Operator::projector(&psi)), &keep);
        prop_assert!(close(&r, &r2, 1e-13));
    }

    #[test]
    fn fuchs_van_de_graaf(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_density(3, &mut rng);
        let b = random_density(3, &mut rng);
        let f = fidelity(&a, &b).unwrap();
        let d = trace_distance(&a, &b).unwrap();
        prop_assert!(1.0 - f.sqrt() <= d + 1e-10);
        prop_assert!(d <= (1.0 - f).max(0.0).sqrt() + 1e-10);
    }
}
