//! Haar and random-circuit sampling, measure concentration and equilibration
//! under random Hamiltonians.

use faer::{c64, Mat};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{dephased_reduced, reduced_trajectory, DynamicsError};
use crate::equilibration::h_povm;
use crate::lattice::{normalise, partial_trace_dims, restricted_distinguishability, trace_distance, LatticeError, Operator, PovmSet, SparseOperator, State};
use crate::rng::{complex_gaussian, complex_gaussian_vec, stream_rng};
use crate::spectral::{fourier_spectrum, from_eigenpairs, level_spacing_ratios, mean, SpectralError, DEFAULT_DEGENERACY_TOL};

/// `C = 1 / (36 pi^3)`
pub const CONCENTRATION_CONSTANT: f64 = 1.0 / (36.0 * std::f64::consts::PI * std::f64::consts::PI * std::f64::consts::PI);

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TypicalityError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("subspace basis is not orthonormal (Gram residual {residual:e})")]
    NotOrthonormal { residual: f64 },
    #[error("two-qubit gates need at least two qubits, got {0}")]
    TooFewQubits(usize),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

/// Subspace to sample from: the whole space or the span of orthonormal
/// columns.
#[derive(Clone, Debug)]
pub enum Subspace {
    Full(usize),
    Basis(Mat<c64>),
}

impl Subspace {
    pub fn from_basis(basis: Mat<c64>) -> Result<Self, TypicalityError> {
        let gram = basis.adjoint() * &basis;
        let mut residual: f64 = 0.0;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let want = if i == j { 1.0 } else { 0.0 };
                residual = residual.max((gram[(i, j)] - c64::new(want, 0.0)).norm());
            }
        }
        if residual > 1e-10 || basis.ncols() == 0 {
            return Err(TypicalityError::NotOrthonormal { residual });
        }
        Ok(Subspace::Basis(basis))
    }

    /// Span of the listed eigenvector columns.
    pub fn spectral(spec: &crate::spectral::SpectralDecomposition, columns: &[usize]) -> Result<Self, TypicalityError> {
        let v = spec.vectors();
        Self::from_basis(Mat::from_fn(spec.dim(), columns.len(), |i, c| v[(i, columns[c])]))
    }

    /// Dimension of the ambient space.
    pub fn ambient_dim(&self) -> usize {
        match self {
            Subspace::Full(d) => *d,
            Subspace::Basis(b) => b.nrows(),
        }
    }

    /// `d_R`
    pub fn dim(&self) -> usize {
        match self {
            Subspace::Full(d) => *d,
            Subspace::Basis(b) => b.ncols(),
        }
    }

    /// Normalised projector onto the subspace.
    pub fn uniform_state(&self) -> Operator {
        match self {
            Subspace::Full(d) => Operator::identity(*d).scale_real(1.0 / *d as f64),
            Subspace::Basis(b) => Operator::from_mat(b * b.adjoint()).scale_real(1.0 / b.ncols() as f64),
        }
    }
}

/// Normalised vector with i.i.d. complex Gaussian coefficients in the
/// subspace basis.
pub fn haar_state<R: Rng + ?Sized>(sub: &Subspace, rng: &mut R) -> Vec<c64> {
    let mut psi = match sub {
        Subspace::Full(d) => complex_gaussian_vec(*d, rng),
        Subspace::Basis(b) => {
            let c = complex_gaussian_vec(b.ncols(), rng);
            (0..b.nrows()).map(|i| (0..b.ncols()).map(|k| b[(i, k)] * c[k]).sum()).collect()
        }
    };
    normalise(&mut psi);
    psi
}

/// QR decomposition of a complex Gaussian matrix with the phases of the
/// diagonal of `R` moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Operator {
    let z = Mat::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    let qr = z.qr();
    let mut q = qr.compute_Q();
    let r = qr.R();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        let phase = if n > 0.0 { rjj / n } else { c64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    Operator::from_mat(q)
}

/// `||U^dagger U - 1||_max`
pub fn unitarity_defect(u: &Operator) -> f64 {
    (&u.adjoint().matmul(u) - &Operator::identity(u.dim())).max_abs()
}

/// The fixed universal gate set used by random circuits.
pub mod gates {
    use crate::lattice::{c, Operator};

    pub fn hadamard() -> Operator {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Operator::from_real_rows(&[&[s, s], &[s, -s]])
    }

    /// `diag(1, e^{i pi/4})`
    pub fn phase_eighth() -> Operator {
        let mut t = Operator::identity(2);
        let a = std::f64::consts::FRAC_PI_4;
        t.set(1, 1, c(a.cos(), a.sin()));
        t
    }

    /// Controlled NOT, control on the first of the two qubits.
    pub fn controlled_not() -> Operator {
        Operator::from_real_rows(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 1.0], &[0.0, 0.0, 1.0, 0.0]])
    }
}

/// Left-multiplies `u` by `gate` acting on `sites` of an `n`-qubit register.
pub fn apply_gate(u: &mut Mat<c64>, n: usize, sites: &[usize], gate: &Operator) {
    let k = sites.len();
    let strides: Vec<usize> = sites.iter().map(|&s| 1usize << (n - 1 - s)).collect();
    let mask: usize = strides.iter().sum();
    let offsets: Vec<usize> = (0..1usize << k)
        .map(|a| (0..k).map(|b| if a >> (k - 1 - b) & 1 == 1 { strides[b] } else { 0 }).sum())
        .collect();
    let g = gate.mat();
    let mut buf = vec![c64::new(0.0, 0.0); offsets.len()];
    for col in 0..u.ncols() {
        for base in 0..1usize << n {
            if base & mask != 0 {
                continue;
            }
            for (a, slot) in buf.iter_mut().enumerate() {
                *slot = offsets.iter().enumerate().map(|(b, &p)| g[(a, b)] * u[(base + p, col)]).sum();
            }
            for (a, &o) in offsets.iter().enumerate() {
                u[(base + o, col)] = buf[a];
            }
        }
    }
}

/// Product of `depth` gates, each drawn uniformly from the gate set and
/// placed on a uniformly random qubit or adjacent pair (with random
/// orientation).
pub fn random_circuit_unitary<R: Rng + ?Sized>(n_qubits: usize, depth: usize, rng: &mut R) -> Result<Operator, TypicalityError> {
    if n_qubits == 0 || n_qubits > 16 {
        return Err(TypicalityError::BadParameter(format!("{n_qubits} qubits")));
    }
    if n_qubits < 2 && depth > 0 {
        return Err(TypicalityError::TooFewQubits(n_qubits));
    }
    let d = 1usize << n_qubits;
    let mut u = Mat::<c64>::identity(d, d);
    let set = [gates::hadamard(), gates::phase_eighth(), gates::controlled_not()];
    for _ in 0..depth {
        let which = rng.random_range(0..set.len());
        if set[which].dim() == 2 {
            let q = rng.random_range(0..n_qubits);
            apply_gate(&mut u, n_qubits, &[q], &set[which]);
        } else {
            let a = rng.random_range(0..n_qubits - 1);
            let gate = if rng.random::<bool>() { set[which].clone() } else { swap_conjugate(&set[which]) };
            apply_gate(&mut u, n_qubits, &[a, a + 1], &gate);
        }
    }
    Ok(Operator::from_mat(u))
}

/// Two-qubit gate with the roles of its qubits exchanged.
fn swap_conjugate(g: &Operator) -> Operator {
    let p = [0usize, 2, 1, 3];
    Operator::from_fn(4, |i, j| g.get(p[i], p[j]))
}

/// `U G U^dagger`
pub fn random_hamiltonian(g: &Operator, u: &Operator) -> Operator {
    u.matmul(g).matmul(&u.adjoint()).hermitian_part()
}

/// Mean spacing ratio of the sorted eigenphases of a unitary.
pub fn eigenphase_spacing_ratio(u: &Operator) -> Result<f64, TypicalityError> {
    let ev = u.mat().eigenvalues().map_err(|_| SpectralError::NoConvergence { dim: u.dim(), norm: u.frobenius_norm() })?;
    let mut phases: Vec<f64> = ev.iter().map(|z| z.arg()).collect();
    phases.sort_by(f64::total_cmp);
    Ok(mean(&level_spacing_ratios(&phases)))
}

/// What a concentration experiment measures on each sample.
#[derive(Clone, Debug)]
pub enum ConcentrationTarget {
    Observable(Operator),
    /// Measurement set with the local dimensions of the full lattice.
    Measurement { povms: PovmSet, dims: Vec<usize> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub epsilon: f64,
    pub n_samples: usize,
    pub subspace_dim: usize,
    pub exceedances: usize,
    pub frequency: f64,
    pub bound: f64,
    /// Binomial standard error at the bound.
    pub sigma: f64,
    pub passed: bool,
    /// `||A||` or `h(M)`, whichever enters the exponent.
    pub scale: f64,
    pub constant: f64,
    pub deviations: Vec<f64>,
}

/// Frequency of `deviation >= eps` over Haar samples against
/// `2 exp(-C d_R eps^2 / ||A||^2)` (or `2 h^2 exp(-C d_R eps^2 / h^2)` for
/// measurements), accepted one-sidedly within three binomial standard errors.
pub fn concentration_experiment(
    target: &ConcentrationTarget,
    sub: &Subspace,
    n_samples: usize,
    epsilon: f64,
    seed: u64,
) -> Result<ConcentrationReport, TypicalityError> {
    if !(epsilon > 0.0) || n_samples == 0 {
        return Err(TypicalityError::BadParameter(format!("epsilon {epsilon}, {n_samples} samples")));
    }
    let dr = sub.dim() as f64;
    let reference = sub.uniform_state();
    let (scale, bound, deviations): (f64, f64, Vec<f64>) = match target {
        ConcentrationTarget::Observable(a) => {
            let norm = a.operator_norm()?;
            let sparse = SparseOperator::from_dense(a);
            let mean_value = reference.trace_product(a).re;
            let devs = (0..n_samples)
                .into_par_iter()
                .map(|i| {
                    let psi = haar_state(sub, &mut stream_rng(seed, i as u64));
                    (sparse.expectation(&psi).re - mean_value).abs()
                })
                .collect();
            (norm, 2.0 * (-CONCENTRATION_CONSTANT * dr * epsilon * epsilon / (norm * norm)).exp(), devs)
        }
        ConcentrationTarget::Measurement { povms, dims } => {
            let hm = h_povm(povms);
            let h = (hm.distinct_elements as f64).min(hm.support_dim as f64);
            let keep: Vec<usize> = povms.sites().map(|s| s.to_vec()).unwrap_or_else(|| (0..dims.len()).collect());
            let ref_s = partial_trace_dims(dims, &State::Mixed(reference.clone()), &keep);
            let devs: Result<Vec<f64>, LatticeError> = (0..n_samples)
                .into_par_iter()
                .map(|i| {
                    let psi = haar_state(sub, &mut stream_rng(seed, i as u64));
                    let r = partial_trace_dims(dims, &State::Pure(psi), &keep);
                    restricted_distinguishability(povms, &r, &ref_s)
                })
                .collect();
            (h, 2.0 * h * h * (-CONCENTRATION_CONSTANT * dr * epsilon * epsilon / (h * h)).exp(), devs?)
        }
    };
    let exceedances = deviations.iter().filter(|&&x| x >= epsilon).count();
    let frequency = exceedances as f64 / n_samples as f64;
    let p = bound.min(1.0);
    let sigma = (p * (1.0 - p) / n_samples as f64).sqrt();
    Ok(ConcentrationReport {
        epsilon,
        n_samples,
        subspace_dim: sub.dim(),
        exceedances,
        frequency,
        bound,
        sigma,
        passed: frequency <= bound + 3.0 * sigma,
        scale,
        constant: CONCENTRATION_CONSTANT,
        deviations,
    })
}

/// Extra term of the circuit bound, `d^3 2^{-alpha depth / N}`. The constant
/// `alpha` depends on the gate set and is not known, so the term is only
/// reported.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CircuitTerm {
    pub depth: usize,
    pub n_qubits: usize,
    pub d_cubed: f64,
    /// `depth / N`, the factor multiplying `-alpha` in the exponent.
    pub exponent_per_alpha: f64,
    pub expression: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HaarEquilibrationReport {
    pub times: Vec<f64>,
    /// `|f_G(t)|`
    pub fourier_modulus: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// Fraction of samples with `D(rho^S(t), omega^S) > threshold(t)`.
    pub frequencies: Vec<f64>,
    pub mean_distances: Vec<f64>,
    pub max_multiplicity: usize,
    pub d_s: usize,
    pub d_b: usize,
    pub epsilon: f64,
    pub n_samples: usize,
    pub circuit: Option<CircuitTerm>,
    /// Whether the per-time assertion `frequency < epsilon` applies.
    pub asserted: bool,
    pub passed: bool,
}

/// `(sqrt(d_S) / (2 eps)) sqrt(|f_G|^4 + g_G^2 / d^2 + 7 / d_B)`
pub fn haar_threshold(d_s: usize, d_b: usize, fg: f64, g_g: usize, epsilon: f64) -> f64 {
    let d = (d_s * d_b) as f64;
    (d_s as f64).sqrt() / (2.0 * epsilon) * (fg.powi(4) + (g_g as f64 / d).powi(2) + 7.0 / d_b as f64).sqrt()
}

/// Samples `U` (Haar, or a random circuit of the given depth), evolves the
/// fixed initial state under `U G U^dagger` and records, per time, how
/// often the subsystem distance from the dephased reduction exceeds the
/// threshold. Each time is tested separately.
#[allow(clippy::too_many_arguments)]
pub fn haar_equilibration_experiment(
    g: &Operator,
    rho0: &State,
    n_qubits: usize,
    region: &[usize],
    times: &[f64],
    n_samples: usize,
    epsilon: f64,
    seed: u64,
    circuit_depth: Option<usize>,
) -> Result<HaarEquilibrationReport, TypicalityError> {
    let d = 1usize << n_qubits;
    if g.dim() != d || rho0.dim() != d {
        return Err(TypicalityError::BadParameter(format!("G and the state must act on {d} dimensions")));
    }
    if !(epsilon > 0.0) || n_samples == 0 {
        return Err(TypicalityError::BadParameter(format!("epsilon {epsilon}, {n_samples} samples")));
    }
    let dims = vec![2; n_qubits];
    let region: Vec<usize> = {
        let mut r = region.to_vec();
        r.sort_unstable();
        r.dedup();
        r
    };
    if region.is_empty() || region.len() >= n_qubits || region.iter().any(|&s| s >= n_qubits) {
        return Err(TypicalityError::BadParameter("region must be a proper nonempty subset".into()));
    }
    let d_s = 1usize << region.len();
    let d_b = d / d_s;
    let g_spec = crate::spectral::diagonalize(g, DEFAULT_DEGENERACY_TOL)?;
    let g_g = g_spec.max_multiplicity();
    let eigs = g_spec.eigenvalues().to_vec();
    let vg = g_spec.vectors().to_owned();
    let fourier_modulus: Vec<f64> = times.iter().map(|&t| fourier_spectrum(&eigs, t).norm()).collect();
    let thresholds: Vec<f64> = fourier_modulus.iter().map(|&f| haar_threshold(d_s, d_b, f, g_g, epsilon)).collect();
    let per_sample: Result<Vec<Vec<f64>>, TypicalityError> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let u = match circuit_depth {
                Some(depth) => random_circuit_unitary(n_qubits, depth, &mut rng)?,
                None => haar_unitary(d, &mut rng),
            };
            let spec = from_eigenpairs(eigs.clone(), u.mat() * &vg, DEFAULT_DEGENERACY_TOL)?;
            let omega_s = dephased_reduced(rho0, &spec, &dims, &region)?;
            let traj = reduced_trajectory(rho0, &spec, &dims, &region, times)?;
            traj.values.iter().map(|r| Ok(trace_distance(r, &omega_s)?)).collect()
        })
        .collect();
    let per_sample = per_sample?;
    let nt = times.len();
    let mut frequencies = vec![0.0; nt];
    let mut mean_distances = vec![0.0; nt];
    for s in &per_sample {
        for t in 0..nt {
            if s[t] > thresholds[t] {
                frequencies[t] += 1.0;
            }
            mean_distances[t] += s[t];
        }
    }
    for t in 0..nt {
        frequencies[t] /= n_samples as f64;
        mean_distances[t] /= n_samples as f64;
    }
    let circuit = circuit_depth.map(|depth| CircuitTerm {
        depth,
        n_qubits,
        d_cubed: (d as f64).powi(3),
        exponent_per_alpha: depth as f64 / n_qubits as f64,
        expression: format!("{}^3 * 2^(-alpha * {depth} / {n_qubits})", d),
    });
    let asserted = circuit.is_none();
    let passed = !asserted || frequencies.iter().all(|&f| f < epsilon);
    Ok(HaarEquilibrationReport {
        times: times.to_vec(),
        fourier_modulus,
        thresholds,
        frequencies,
        mean_distances,
        max_multiplicity: g_g,
        d_s,
        d_b,
        epsilon,
        n_samples,
        circuit,
        asserted,
        passed,
    })
}
