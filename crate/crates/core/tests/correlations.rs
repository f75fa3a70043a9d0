use proptest::prelude::*;
use thermolab::correlations::*;
use thermolab::lattice::models::{chain_graph, ising_chain, random_hermitian};
use thermolab::lattice::{pauli, reconstruct, Boundary, LocalHamiltonian, LocalOperator, Operator, SiteGraph, SiteKind};
use thermolab::rng::seeded;
use thermolab::spectral::{diagonalize, DEFAULT_DEGENERACY_TOL};

/// `rho^s` straight from an eigendecomposition.
fn power(rho: &Operator, s: f64) -> Operator {
    let e = rho.eigh().unwrap();
    let w: Vec<f64> = e.values.iter().map(|x| x.powf(s)).collect();
    reconstruct(&e, &w)
}

fn random_state(dim: usize, seed: u64) -> Operator {
    let g = random_hermitian(dim, false, &mut seeded(seed));
    let e = g.matmul(&g);
    let shifted = &e + &Operator::identity(dim).scale_real(0.05);
    let tr = shifted.trace().re;
    shifted.scale_real(1.0 / tr)
}

fn tfim(n: usize, boundary: Boundary, j: f64, hx: f64, hz: f64) -> LocalHamiltonian {
    let g = chain_graph(n, boundary, false).unwrap();
    ising_chain(&g, boundary, j, hx, hz).unwrap()
}

fn z_at(site: usize) -> LocalOperator {
    LocalOperator::new(vec![site], pauli::z())
}

#[test]
fn unit_tau_is_the_ordinary_covariance() {
    let rho = random_state(8, 1);
    let a = random_hermitian(8, false, &mut seeded(2));
    let b = random_hermitian(8, false, &mut seeded(3));
    let g = generalized_covariance(&rho, &a, &b, 1.0).unwrap();
    assert!((g.value - covariance(&rho, &a, &b)).norm() < 1e-10);
    assert_eq!(g.regularization, 0.0);
}

#[test]
fn generalized_covariance_matches_direct_powers() {
    let rho = random_state(6, 4);
    let a = random_hermitian(6, false, &mut seeded(5));
    let b = random_hermitian(6, false, &mut seeded(6));
    for tau in [0.0, 0.25, 0.5, 0.8] {
        let direct = power(&rho, tau).matmul(&a).matmul(&power(&rho, 1.0 - tau)).matmul(&b).trace()
            - rho.trace_product(&a) * rho.trace_product(&b);
        let got = generalized_covariance(&rho, &a, &b, tau).unwrap().value;
        assert!((got - direct).norm() < 1e-10, "tau {tau}");
    }
}

#[test]
fn product_states_have_no_correlations() {
    let rho = random_state(2, 7).kron(&random_state(4, 8));
    let a = random_hermitian(2, false, &mut seeded(9)).kron(&Operator::identity(4));
    let b = Operator::identity(2).kron(&random_hermitian(4, false, &mut seeded(10)));
    for tau in [0.0, 0.3, 0.5, 1.0] {
        assert!(generalized_covariance(&rho, &a, &b, tau).unwrap().value.norm() < 1e-12);
        assert!(generalized_covariance(&rho, &Operator::identity(8), &b, tau).unwrap().value.norm() < 1e-12);
    }
}

#[test]
fn rank_deficient_state_is_regularised() {
    let rho = Operator::diagonal(&[1.0, 0.0]);
    let g = generalized_covariance(&rho, &pauli::x(), &pauli::x(), 0.5).unwrap();
    assert!((g.regularization - 1e-14).abs() < 1e-20);
    assert!(matches!(generalized_covariance(&rho, &pauli::x(), &pauli::x(), 1.5), Err(CorrelationError::BadTau(_))));
}

#[test]
fn thermal_state_covariance_matches_dense_route() {
    let h = tfim(5, Boundary::Open, 1.0, 0.7, 0.3);
    let spec = diagonalize(&h.assemble().unwrap(), DEFAULT_DEGENERACY_TOL).unwrap();
    let th = ThermalState::new(&spec, 0.6);
    let rho = th.density();
    assert!((rho.trace().re - 1.0).abs() < 1e-12);
    let g = h.graph();
    let a = LocalOperator::new(vec![0, 1], pauli::x().kron(&pauli::y()));
    let b = z_at(3);
    for tau in [0.0, 0.4, 0.5, 1.0] {
        let sparse = th.covariance(&a.embed_sparse(g).unwrap(), &b.embed_sparse(g).unwrap(), tau).unwrap();
        let dense = generalized_covariance(&rho, &a.embed(g).unwrap(), &b.embed(g).unwrap(), tau).unwrap().value;
        assert!((sparse - dense).norm() < 1e-10, "tau {tau}");
    }
    let reduced = th.reduced(g.local_dims(), &[2]);
    let zexp = th.expectation(&z_at(2).embed_sparse(g).unwrap());
    assert!((reduced.trace_product(&pauli::z()) - zexp).norm() < 1e-12);
}

#[test]
fn truncation_formula_holds_on_tfim() {
    let h = tfim(8, Boundary::Open, 1.0, 0.9, 0.4);
    let r = truncation_check(&h, &[1, 2, 3, 4, 5], &z_at(3), 0.3, 24).unwrap();
    // independent lhs from the two Gibbs states
    let gibbs = |m: &Operator| {
        let e = m.eigh().unwrap();
        let lo = e.values[0];
        let w: Vec<f64> = e.values.iter().map(|x| (-0.3 * (x - lo)).exp()).collect();
        let z: f64 = w.iter().sum();
        reconstruct(&e, &w.iter().map(|x| x / z).collect::<Vec<_>>())
    };
    let a = z_at(3).embed(h.graph()).unwrap();
    let oracle = gibbs(&h.restricted(&[1, 2, 3, 4, 5]).unwrap().assemble().unwrap()).trace_product(&a).re
        - gibbs(&h.assemble().unwrap()).trace_product(&a).re;
    assert!((r.lhs - oracle).abs() < 1e-12);
    assert!(r.residual <= 1e-6, "residual {}", r.residual);
    assert_eq!(r.boundary_edges, 2);
}

#[test]
fn truncation_residual_shrinks_with_order() {
    let h = tfim(6, Boundary::Open, 1.0, 0.9, 0.4);
    let res: Vec<f64> = [12, 24, 48].iter().map(|&q| truncation_check(&h, &[1, 2, 3, 4], &z_at(2), 0.7, q).unwrap().residual).collect();
    assert!(res[1] <= res[0] + 1e-13 && res[2] <= res[1] + 1e-13, "{res:?}");
}

#[test]
fn truncation_trivial_cases() {
    let h = tfim(6, Boundary::Open, 1.0, 0.9, 0.4);
    let r = truncation_check(&h, &[1, 2, 3], &z_at(2), 0.0, 8).unwrap();
    assert!(r.lhs.abs() < 1e-14 && r.rhs.abs() < 1e-14);
    // no edge leaves the whole system
    let r = truncation_check(&h, &[0, 1, 2, 3, 4, 5], &z_at(2), 0.5, 8).unwrap();
    assert_eq!(r.boundary_edges, 0);
    assert!(r.lhs.abs() < 1e-12 && r.rhs.abs() < 1e-12);
    assert!(matches!(truncation_check(&h, &[1, 2], &z_at(4), 0.5, 8), Err(CorrelationError::SupportOutsideRegion { .. })));
}

#[test]
fn growth_constants() {
    let e = std::f64::consts::E;
    assert!((growth_constant_bound(LatticeFamily::Chain).unwrap() - 2.0 * e).abs() < 1e-15);
    assert!((growth_constant_bound(LatticeFamily::Cubic(2)).unwrap() - 4.0 * e).abs() < 1e-15);
    assert_eq!(growth_constant_bound(LatticeFamily::Declared(3.5)).unwrap(), 3.5);
    assert!(growth_constant_bound(LatticeFamily::Declared(0.5)).is_err());
    assert_eq!(LatticeFamily::detect(&chain_graph(6, Boundary::Periodic, false).unwrap()).unwrap(), LatticeFamily::Chain);
    let star = SiteGraph::new(vec![2; 4], SiteKind::Spin, vec![vec![0, 1], vec![0, 2], vec![0, 3]]).unwrap();
    assert!(matches!(LatticeFamily::detect(&star), Err(CorrelationError::UnsupportedLattice)));
}

#[test]
fn critical_temperature_of_the_square_lattice() {
    let alpha = growth_constant_bound(LatticeFamily::Cubic(2)).unwrap();
    let inv = 1.0 / critical_beta(1.0, alpha);
    assert!((inv - 24.58).abs() < 0.005, "{inv}");
    assert!(critical_beta(1.0, 1e12) < 1e-5);
}

#[test]
fn correlation_length_examples() {
    let alpha = 2.0 * std::f64::consts::E;
    let bs = critical_beta(1.0, alpha);
    assert!((bs - 0.073_667_040_516_855_94).abs() < 1e-14);
    assert!((correlation_length(bs / 2.0, 1.0, alpha).unwrap() - 1.243_277_069_214_988_6).abs() < 1e-12);
    assert!(correlation_length(1e-9, 1.0, alpha).unwrap() < 0.06);
    assert_eq!(correlation_length(0.0, 1.0, alpha).unwrap(), 0.0);
    assert!(matches!(correlation_length(bs, 1.0, alpha), Err(CorrelationError::AboveCritical { .. })));
}

#[test]
fn clustering_and_locality_on_a_ring() {
    let h = tfim(12, Boundary::Periodic, 0.4, 0.3, 0.0);
    let alpha = growth_constant_bound(LatticeFamily::detect(h.graph()).unwrap()).unwrap();
    let j = h.interaction_strength().unwrap();
    assert!(0.1 < critical_beta(j, alpha));
    let spec = diagonalize(&h.assemble().unwrap(), DEFAULT_DEGENERACY_TOL).unwrap();
    let pairs: Vec<(LocalOperator, LocalOperator)> = (1..=6).map(|d| (z_at(0), z_at(d))).collect();
    let r = clustering_check(&h, &spec, 0.1, 0.5, &pairs, alpha).unwrap();
    assert!(r.passed);
    assert_eq!(r.rows.len(), 6);
    assert_eq!(r.rows.iter().map(|x| x.distance.unwrap()).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
    assert!(r.rows.iter().all(|x| x.covariance <= x.bound));
    let zero = clustering_check(&h, &spec, 0.0, 0.3, &pairs, alpha).unwrap();
    assert!(zero.passed && zero.rows.iter().all(|x| x.covariance < 1e-12));

    let loc = universal_locality_check(&h, &spec, 0.1, &[6], &[3, 4, 5, 6, 7, 8, 9], alpha).unwrap();
    assert!(loc.satisfied, "{} > {}", loc.lhs, loc.rhs);
    assert_eq!(loc.b_boundary, 2);
    assert_eq!(loc.distance, Some(3));
    let all: Vec<usize> = (0..12).collect();
    assert!(universal_locality_check(&h, &spec, 0.1, &[6], &all, alpha).unwrap().lhs < 1e-10);
    assert!(universal_locality_check(&h, &spec, 0.0, &[6], &[5, 6, 7], alpha).unwrap().lhs < 1e-12);

    let mut buf = Vec::new();
    write_pair_sweep_csv(&mut buf, &r).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().nth(1), Some("dist,cov,bound,satisfied"));
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn above_critical_rejected() {
    let h = tfim(4, Boundary::Open, 1.0, 1.0, 0.0);
    let spec = diagonalize(&h.assemble().unwrap(), DEFAULT_DEGENERACY_TOL).unwrap();
    let r = clustering_check(&h, &spec, 1.0, 0.5, &[(z_at(0), z_at(3))], 2.0 * std::f64::consts::E);
    assert!(matches!(r, Err(CorrelationError::AboveCritical { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn covariance_symmetry(seed in any::<u64>(), tau in 0.0f64..1.0) {
        let rho = random_state(5, seed);
        let a = random_hermitian(5, false, &mut seeded(seed.wrapping_add(1)));
        let b = random_hermitian(5, false, &mut seeded(seed.wrapping_add(2)));
        let x = generalized_covariance(&rho, &a, &b, tau).unwrap().value;
        let y = generalized_covariance(&rho, &b, &a, 1.0 - tau).unwrap().value;
        prop_assert!((x - y).norm() < 1e-10);
    }

    #[test]
    fn correlation_length_argument_is_one_at_criticality(j in 0.1f64..5.0, alpha in 1.0f64..50.0) {
        let bs = critical_beta(j, alpha);
        prop_assert!((correlation_length_argument(bs, j, alpha) - 1.0).abs() < 1e-12);
        prop_assert!((correlation_length_argument(-bs, j, alpha) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_of_identity_vanishes(seed in any::<u64>(), tau in 0.0f64..=1.0) {
        let rho = random_state(4, seed);
        let b = random_hermitian(4, false, &mut seeded(seed ^ 7));
        let v = generalized_covariance(&rho, &Operator::identity(4), &b, tau).unwrap().value;
        prop_assert!(v.norm() < 1e-12);
    }
}
