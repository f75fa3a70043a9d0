//! Thermal, micro-canonical and maximum-entropy ensembles, and the checks
//! that connect them to reduced states of closed systems.

use std::io::Write;
use std::path::{Path, PathBuf};

use faer::{c64, Mat, Side};
use faer::linalg::solvers::Solve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{dephased_reduced, finite_time_average, reduced_trajectory, DynamicsError, Trajectory};
use crate::lattice::{entropy_of_spectrum, partial_trace_dims, trace_distance, LatticeError, LocalHamiltonian, Operator, State};
use crate::spectral::{diagonalize, SpectralDecomposition, SpectralError, DEFAULT_DEGENERACY_TOL};

/// Iteration cap of the dual Newton solver.
pub const MAX_NEWTON_ITERATIONS: usize = 200;
/// Required accuracy of the constraint values of a maximum-entropy state.
pub const CONSTRAINT_TOL: f64 = 1e-8;
/// Relative tolerance for commutation of constraints.
pub const COMMUTATION_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("energy window [{lo}, {hi}] contains no level")]
    EmptyWindow { lo: f64, hi: f64 },
    #[error("target energy {target} is not strictly inside ({lo}, {hi})")]
    TargetOutOfRange { target: f64, lo: f64, hi: f64 },
    #[error("constraint {index} does not commute with {with} (defect {defect:e})")]
    NonCommuting { index: usize, with: String, defect: f64 },
    #[error("target of constraint {index} violates {lo} <= {target} <= {hi}")]
    Infeasible { index: usize, target: f64, lo: f64, hi: f64 },
    #[error("dual Newton stopped after {iterations} iterations with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for EnsembleError {
    fn from(e: std::io::Error) -> Self {
        EnsembleError::Io(e.to_string())
    }
}

/// Closed energy interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    pub lo: f64,
    pub hi: f64,
}

impl EnergyWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self, EnsembleError> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(EnsembleError::BadParameter(format!("window [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn centred(centre: f64, width: f64) -> Result<Self, EnsembleError> {
        Self::new(centre - width / 2.0, centre + width / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, e: f64) -> bool {
        e >= self.lo && e <= self.hi
    }

    /// `[lo, lo + eps] u [hi - eps, hi]`
    pub fn edges_contain(&self, e: f64, eps: f64) -> bool {
        self.contains(e) && (e <= self.lo + eps || e >= self.hi - eps)
    }
}

/// Log-sum-exp of `-beta E` over `energies`, shifted by the extreme energy.
fn log_sum_exp(energies: &[f64], beta: f64) -> f64 {
    let m = energies.iter().map(|e| -beta * e).fold(f64::NEG_INFINITY, f64::max);
    m + energies.iter().map(|e| (-beta * e - m).exp()).sum::<f64>().ln()
}

/// `ln Z(beta)` over all eigenvalues, with multiplicity.
pub fn partition_function(spec: &SpectralDecomposition, beta: f64) -> f64 {
    log_sum_exp(spec.eigenvalues(), beta)
}

/// Boltzmann weight of every eigenvector column.
pub fn gibbs_weights(energies: &[f64], beta: f64) -> Vec<f64> {
    let lz = log_sum_exp(energies, beta);
    energies.iter().map(|e| (-beta * e - lz).exp()).collect()
}

pub fn gibbs_state(spec: &SpectralDecomposition, beta: f64) -> Operator {
    let lz = partition_function(spec, beta);
    spec.function(|e| (-beta * e - lz).exp())
}

/// `Tr(H g(beta))`
pub fn gibbs_energy(spec: &SpectralDecomposition, beta: f64) -> f64 {
    let e = spec.eigenvalues();
    gibbs_weights(e, beta).iter().zip(e).map(|(w, e)| w * e).sum()
}

/// Energy standard deviation in `g(beta)`.
pub fn gibbs_energy_spread(spec: &SpectralDecomposition, beta: f64) -> f64 {
    let e = spec.eigenvalues();
    let w = gibbs_weights(e, beta);
    let m: f64 = w.iter().zip(e).map(|(w, e)| w * e).sum();
    w.iter().zip(e).map(|(w, e)| w * (e - m).powi(2)).sum::<f64>().sqrt()
}

/// Von Neumann entropy of `g(beta)` in bits.
pub fn gibbs_entropy(spec: &SpectralDecomposition, beta: f64) -> f64 {
    entropy_of_spectrum(&gibbs_weights(spec.eigenvalues(), beta), 1.0)
}

/// Inverse of `beta -> Tr(H g(beta))` by bracketing and bisection.
pub fn beta_from_energy(spec: &SpectralDecomposition, target: f64) -> Result<f64, EnsembleError> {
    let e = spec.eigenvalues();
    let (lo, hi) = (e[0], e[e.len() - 1]);
    let range = hi - lo;
    if !(target > lo && target < hi) {
        return Err(EnsembleError::TargetOutOfRange { target, lo, hi });
    }
    let tol = 1e-10 * range;
    let f = |b: f64| gibbs_energy(spec, b) - target;
    let f0 = f(0.0);
    if f0.abs() <= tol {
        return Ok(0.0);
    }
    // positive beta lowers the energy
    let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
    let mut a = 0.0;
    let mut b = dir / range;
    let mut iters = 0;
    while f(b) * dir > 0.0 {
        a = b;
        b *= 2.0;
        iters += 1;
        if iters > 200 {
            return Err(EnsembleError::TargetOutOfRange { target, lo, hi });
        }
    }
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        let v = f(m);
        if v.abs() <= tol {
            return Ok(m);
        }
        if v * dir > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Eigenvector columns whose energy lies in the window.
pub fn window_columns(spec: &SpectralDecomposition, window: &EnergyWindow) -> Vec<usize> {
    spec.levels_in(window.lo, window.hi).into_iter().flat_map(|k| spec.level_columns(k)).collect()
}

/// `sum_j w_j |v_j><v_j|` over the listed columns.
pub fn column_mixture(spec: &SpectralDecomposition, columns: &[usize], weights: &[f64]) -> Operator {
    let d = spec.dim();
    if let Some(rv) = spec.real_vectors() {
        let b = Mat::from_fn(d, columns.len(), |i, c| rv[(i, columns[c])] * weights[c].sqrt());
        let p = &b * b.transpose();
        Operator::from_real_mat(p.as_ref())
    } else {
        let v = spec.vectors();
        let b = Mat::from_fn(d, columns.len(), |i, c| v[(i, columns[c])] * weights[c].sqrt());
        Operator::from_mat(&b * b.adjoint())
    }
}

/// Reduction to `keep` of `sum_j w_j |v_j><v_j|`, never forming the full
/// matrix.
pub fn reduced_column_mixture(spec: &SpectralDecomposition, columns: &[usize], weights: &[f64], dims: &[usize], keep: &[usize]) -> Operator {
    let dk: usize = keep.iter().map(|&s| dims[s]).product();
    let mut acc = Operator::zeros(dk);
    for (&j, &w) in columns.iter().zip(weights) {
        if w <= 0.0 {
            continue;
        }
        let r = partial_trace_dims(dims, &State::Pure(spec.vector(j)), keep);
        acc += &r.scale_real(w);
    }
    acc
}

pub fn microcanonical_rank(spec: &SpectralDecomposition, window: &EnergyWindow) -> usize {
    window_columns(spec, window).len()
}

/// Normalised projector onto the levels inside the window.
pub fn microcanonical_state(spec: &SpectralDecomposition, window: &EnergyWindow) -> Result<Operator, EnsembleError> {
    let cols = window_columns(spec, window);
    if cols.is_empty() {
        return Err(EnsembleError::EmptyWindow { lo: window.lo, hi: window.hi });
    }
    let w = vec![1.0 / cols.len() as f64; cols.len()];
    Ok(column_mixture(spec, &cols, &w))
}

#[derive(Clone, Debug)]
pub struct RectangularState {
    pub state: State,
    pub pure: bool,
}

/// A state whose dephasing is the micro-canonical state of the window.
///
/// With a seed and only non-degenerate levels in the window the result is
/// the pure superposition `r^{-1/2} sum_k e^{i phi_k} |E_k>` with random
/// phases. Otherwise it is the micro-canonical state itself.
pub fn rectangular_state(spec: &SpectralDecomposition, window: &EnergyWindow, coherence_seed: Option<u64>) -> Result<RectangularState, EnsembleError> {
    let levels = spec.levels_in(window.lo, window.hi);
    if levels.is_empty() {
        return Err(EnsembleError::EmptyWindow { lo: window.lo, hi: window.hi });
    }
    let nondeg = levels.iter().all(|&k| spec.level_columns(k).len() == 1);
    match coherence_seed {
        Some(seed) if nondeg => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let amp = 1.0 / (levels.len() as f64).sqrt();
            let mut coeffs = vec![c64::new(0.0, 0.0); spec.dim()];
            for &k in &levels {
                let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                coeffs[spec.level_columns(k).start] = c64::from_polar(amp, phi);
            }
            Ok(RectangularState { state: State::Pure(spec.from_coefficients(&coeffs)), pure: true })
        }
        _ => Ok(RectangularState { state: State::Mixed(microcanonical_state(spec, window)?), pure: false }),
    }
}

/// A conserved quantity with its prescribed expectation value.
#[derive(Clone, Debug)]
pub struct Constraint {
    pub operator: Operator,
    pub target: f64,
}

#[derive(Clone, Debug)]
pub struct MaxEntropyState {
    pub state: Operator,
    /// Multiplier per input constraint: zero for dropped constraints,
    /// infinite for constraints pinned to a face of the feasible set.
    pub multipliers: Vec<f64>,
    pub kept: Vec<usize>,
    /// Linearly dependent on the kept constraints and the identity.
    pub dropped: Vec<usize>,
    /// Targets on an extreme value, solved by restricting the support.
    pub pinned: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// Entropy in bits.
    pub entropy: f64,
}

/// Common eigenbasis of `H` and commuting constraints, with the diagonal
/// values of every constraint in it.
struct JointBasis {
    vectors: Mat<c64>,
    values: Vec<Vec<f64>>,
}

fn joint_basis(spec: &SpectralDecomposition, constraints: &[Constraint]) -> Result<JointBasis, EnsembleError> {
    let d = spec.dim();
    if let Some(c) = constraints.iter().find(|c| c.operator.dim() != d) {
        return Err(EnsembleError::Spectral(SpectralError::DimensionMismatch { expected: d, found: c.operator.dim() }));
    }
    let primed: Vec<Operator> = constraints.iter().map(|c| spec.to_eigenbasis(&c.operator)).collect();
    for (i, (c, a)) in constraints.iter().zip(&primed).enumerate() {
        let tol = COMMUTATION_TOL * c.operator.max_abs().max(1.0);
        let mut defect: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                if spec.level_of_column(j) != spec.level_of_column(k) {
                    defect = defect.max(a.get(j, k).norm());
                }
            }
        }
        if defect > tol {
            return Err(EnsembleError::NonCommuting { index: i, with: "the Hamiltonian".into(), defect });
        }
    }
    let mut vectors = Mat::<c64>::zeros(d, d);
    let mut values = vec![vec![0.0; d]; constraints.len()];
    for k in 0..spec.n_levels() {
        let cols = spec.level_columns(k);
        let m = cols.len();
        let block = |a: &Operator| Operator::from_fn(m, |x, y| a.get(cols.start + x, cols.start + y));
        let blocks: Vec<Operator> = primed.iter().map(block).collect();
        // refine the block basis one constraint at a time, splitting groups
        // by the eigenvalues found so far
        let mut w = Mat::<c64>::identity(m, m);
        let mut groups: Vec<Vec<usize>> = vec![(0..m).collect()];
        if m > 1 {
            for (i, b) in blocks.iter().enumerate() {
                let tol = COMMUTATION_TOL * constraints[i].operator.max_abs().max(1.0);
                let mut next = Vec::new();
                for grp in &groups {
                    if grp.len() == 1 {
                        next.push(grp.clone());
                        continue;
                    }
                    let wg = Mat::from_fn(m, grp.len(), |x, y| w[(x, grp[y])]);
                    let sub = Operator::from_mat(wg.adjoint() * b.mat() * &wg).hermitian_part();
                    let e = sub.eigh()?;
                    let rotated = &wg * &e.vectors;
                    for (y, &c) in grp.iter().enumerate() {
                        for x in 0..m {
                            w[(x, c)] = rotated[(x, y)];
                        }
                    }
                    let mut start = 0;
                    for y in 1..=grp.len() {
                        if y == grp.len() || e.values[y] - e.values[y - 1] > tol.max(1e-9 * e.values[y - 1].abs()) {
                            next.push(grp[start..y].to_vec());
                            start = y;
                        }
                    }
                }
                groups = next;
            }
        }
        for (i, b) in blocks.iter().enumerate() {
            let t = w.adjoint() * b.mat() * &w;
            let tol = COMMUTATION_TOL * constraints[i].operator.max_abs().max(1.0) * (m as f64).sqrt().max(1.0) * 10.0;
            for x in 0..m {
                for y in 0..m {
                    if x != y && t[(x, y)].norm() > tol {
                        return Err(EnsembleError::NonCommuting { index: i, with: "another constraint".into(), defect: t[(x, y)].norm() });
                    }
                }
                values[i][cols.start + x] = t[(x, x)].re;
            }
        }
        let vk = spec.vectors().subcols(cols.start, m);
        let block_vectors = vk * &w;
        for x in 0..m {
            for i in 0..d {
                vectors[(i, cols.start + x)] = block_vectors[(i, x)];
            }
        }
    }
    Ok(JointBasis { vectors, values })
}

/// Dual objective `ln sum_{j in S} exp(-sum_i beta_i (a_ij - t_i))`,
/// returning the objective and the normalised weights.
fn dual(beta: &[f64], centred: &[Vec<f64>], support: &[usize]) -> (f64, Vec<f64>) {
    let x: Vec<f64> = support.iter().map(|&j| -beta.iter().zip(centred).map(|(b, a)| b * a[j]).sum::<f64>()).collect();
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = x.iter().map(|v| (v - m).exp()).sum();
    let q = x.iter().map(|v| (v - m).exp() / s).collect();
    (m + s.ln(), q)
}

/// Maximum-entropy state `exp(-sum_A beta_A A) / Z` under commuting
/// constraints, by damped Newton iteration on the dual.
pub fn max_entropy_state(spec: &SpectralDecomposition, constraints: &[Constraint]) -> Result<MaxEntropyState, EnsembleError> {
    let d = spec.dim();
    let jb = joint_basis(spec, constraints)?;
    let n = constraints.len();
    let mut support: Vec<usize> = (0..d).collect();
    let mut pinned = Vec::new();
    let mut multipliers = vec![0.0; n];
    // pin targets sitting on an extreme value
    loop {
        let mut changed = false;
        for i in 0..n {
            if pinned.contains(&i) {
                continue;
            }
            let a = &jb.values[i];
            let t = constraints[i].target;
            let lo = support.iter().map(|&j| a[j]).fold(f64::INFINITY, f64::min);
            let hi = support.iter().map(|&j| a[j]).fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-12 * (hi - lo).max(lo.abs().max(hi.abs())).max(1.0);
            if t < lo - slack || t > hi + slack {
                return Err(EnsembleError::Infeasible { index: i, target: t, lo, hi });
            }
            if hi - lo <= slack {
                continue;
            }
            if t <= lo + slack {
                support.retain(|&j| a[j] <= lo + slack);
                multipliers[i] = f64::INFINITY;
            } else if t >= hi - slack {
                support.retain(|&j| a[j] >= hi - slack);
                multipliers[i] = f64::NEG_INFINITY;
            } else {
                continue;
            }
            pinned.push(i);
            changed = true;
        }
        if !changed {
            break;
        }
    }
    // Gram-Schmidt against the identity and previously kept constraints
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (support.len() as f64).sqrt(); support.len()]];
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for i in 0..n {
        if pinned.contains(&i) {
            continue;
        }
        let mut v: Vec<f64> = support.iter().map(|&j| jb.values[i][j]).collect();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 * norm0.max(1.0) {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
            kept.push(i);
        } else {
            dropped.push(i);
        }
    }
    let centred: Vec<Vec<f64>> = kept.iter().map(|&i| jb.values[i].iter().map(|a| a - constraints[i].target).collect()).collect();
    let scale = kept.iter().map(|&i| constraints[i].operator.max_abs()).fold(1.0, f64::max);
    let tol = 1e-12 * scale;
    let m = kept.len();
    let mut beta = vec![0.0; m];
    let moments = |q: &[f64]| -> Vec<f64> { centred.iter().map(|a| support.iter().zip(q).map(|(&j, w)| w * a[j]).sum()).collect() };
    let (mut f, mut q) = dual(&beta, &centred, &support);
    let mut g = moments(&q);
    let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut history = vec![inf_norm(&g)];
    let mut iterations = 0;
    while inf_norm(&g) > tol && iterations < MAX_NEWTON_ITERATIONS {
        iterations += 1;
        // gradient of the dual is -<a - t>, Hessian the covariance
        let hess = Mat::<f64>::from_fn(m, m, |x, y| {
            support.iter().zip(&q).map(|(&j, w)| w * centred[x][j] * centred[y][j]).sum::<f64>() - g[x] * g[y]
        });
        let mut step = Mat::<f64>::from_fn(m, 1, |x, _| g[x]);
        match hess.llt(Side::Lower) {
            Ok(llt) => llt.solve_in_place(step.as_mut()),
            Err(_) => {
                let ridge = 1e-12 * (0..m).map(|x| hess[(x, x)]).sum::<f64>().max(1e-300);
                let reg = Mat::<f64>::from_fn(m, m, |x, y| hess[(x, y)] + if x == y { ridge } else { 0.0 });
                match reg.llt(Side::Lower) {
                    Ok(llt) => llt.solve_in_place(step.as_mut()),
                    Err(_) => break,
                }
            }
        }
        // descent direction delta = H^{-1} <a - t>; slope = -g . delta
        let slope: f64 = -(0..m).map(|x| g[x] * step[(x, 0)]).sum::<f64>();
        let current = inf_norm(&g);
        let mut s = 1.0;
        let mut fallback: Option<(Vec<f64>, f64, Vec<f64>, Vec<f64>)> = None;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = (0..m).map(|x| beta[x] + s * step[(x, 0)]).collect();
            let (ft, qt) = dual(&trial, &centred, &support);
            if ft <= f + 1e-4 * s * slope + 1e-15 * f.abs().max(1.0) {
                let gt = moments(&qt);
                if inf_norm(&gt) <= current {
                    accepted = Some((trial, ft, qt, gt));
                    break;
                }
                if fallback.is_none() {
                    fallback = Some((trial, ft, qt, gt));
                }
            }
            s *= 0.5;
        }
        match accepted.or(fallback) {
            Some((b, ft, qt, gt)) => {
                beta = b;
                f = ft;
                q = qt;
                g = gt;
            }
            None => break,
        }
        history.push(inf_norm(&g));
    }
    let mut full_q = vec![0.0; d];
    for (&j, w) in support.iter().zip(&q) {
        full_q[j] = *w;
    }
    let residual = (0..n)
        .map(|i| (jb.values[i].iter().zip(&full_q).map(|(a, w)| a * w).sum::<f64>() - constraints[i].target).abs())
        .fold(0.0, f64::max);
    if residual > CONSTRAINT_TOL * scale {
        return Err(EnsembleError::NoConvergence { iterations, residual });
    }
    for (x, &i) in kept.iter().enumerate() {
        multipliers[i] = beta[x];
    }
    let b = Mat::from_fn(d, support.len(), |i, c| jb.vectors[(i, support[c])] * q[c].sqrt());
    let state = Operator::from_mat(&b * b.adjoint());
    Ok(MaxEntropyState {
        state,
        multipliers,
        kept,
        dropped,
        pinned,
        iterations,
        residual,
        residual_history: history,
        entropy: entropy_of_spectrum(&q, 1.0),
    })
}

/// Spectral projectors of `H` with targets given by the level populations of
/// `state`; the maximum-entropy state under them is the dephased state.
pub fn projector_constraints(spec: &SpectralDecomposition, state: &State) -> Result<Vec<Constraint>, EnsembleError> {
    let p = spec.populations(state)?;
    Ok((0..spec.n_levels()).map(|k| Constraint { operator: spec.projector(k), target: p[k] }).collect())
}

/// Minimises `objective` over inverse temperatures: a symmetric grid of 64
/// logarithmic points per sign in `[1e-3, 50] / scale` plus zero, refined by
/// golden-section search around the best point.
pub fn fit_beta(objective: impl Fn(f64) -> f64, scale: f64) -> (f64, f64) {
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let pos = crate::dynamics::log_grid(1e-3 / scale, 50.0 / scale, 64);
    let mut grid: Vec<f64> = pos.iter().rev().map(|b| -b).collect();
    grid.push(0.0);
    grid.extend(pos);
    let vals: Vec<f64> = grid.iter().map(|&b| objective(b)).collect();
    let lowest = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    // among near-ties prefer the smallest |beta|
    let best = (0..grid.len())
        .filter(|&i| vals[i] <= lowest + 1e-14)
        .min_by(|&a, &b| grid[a].abs().total_cmp(&grid[b].abs()))
        .expect("non-empty grid");
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(grid.len() - 1)];
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    for _ in 0..100 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = objective(x2);
        }
        if (b - a).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
    }
    let (xb, fb) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
    if fb < vals[best] - 1e-14 {
        (xb, fb)
    } else {
        (grid[best], vals[best])
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CountingReport {
    /// `min_beta D(reduced micro-canonical, Gibbs of H_S)`.
    pub distance: f64,
    pub beta_hat: f64,
    /// Slope of `ln #[H_B]` across the energies reachable from the window.
    pub beta_fit: f64,
    pub bath_states_in_window: usize,
    pub low_statistics: bool,
    /// Reduced micro-canonical weights on the eigenbasis of `H_S`.
    pub reduced_weights: Vec<f64>,
}

fn count_in(sorted: &[f64], lo: f64, hi: f64) -> usize {
    sorted.partition_point(|&e| e <= hi) - sorted.partition_point(|&e| e < lo)
}

/// Reduction of the micro-canonical state of `H_S + H_B` to `S` compared
/// with Gibbs states of `H_S`. Both are diagonal in the eigenbasis of `H_S`,
/// so only the two spectra enter.
pub fn counting_reduction_check(system_eigs: &[f64], bath_eigs: &[f64], window: &EnergyWindow) -> Result<CountingReport, EnsembleError> {
    let mut bath = bath_eigs.to_vec();
    bath.sort_by(f64::total_cmp);
    let counts: Vec<usize> = system_eigs.iter().map(|&es| count_in(&bath, window.lo - es, window.hi - es)).collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(EnsembleError::EmptyWindow { lo: window.lo, hi: window.hi });
    }
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let distance_at = |b: f64| {
        let g = gibbs_weights(system_eigs, b);
        0.5 * g.iter().zip(&weights).map(|(x, y)| (x - y).abs()).sum::<f64>()
    };
    let smin = system_eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = system_eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (beta_hat, distance) = fit_beta(distance_at, (smax - smin).max(1e-300));
    // ln #[H_B] over [c - ||H_S||, c + ||H_S||], sampled on windows of the
    // same width
    let centre = 0.5 * (window.lo + window.hi);
    let hs_norm = smin.abs().max(smax.abs());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..33 {
        let x = centre - hs_norm + 2.0 * hs_norm * i as f64 / 32.0;
        let c = count_in(&bath, x - window.width() / 2.0, x + window.width() / 2.0);
        if c > 0 {
            xs.push(x);
            ys.push((c as f64).ln());
        }
    }
    let beta_fit = if xs.len() >= 2 { crate::dynamics::linear_fit(&xs, &ys).0 } else { f64::NAN };
    Ok(CountingReport {
        distance,
        beta_hat,
        beta_fit,
        bath_states_in_window: total,
        low_statistics: total < 10 * system_eigs.len(),
        reduced_weights: weights,
    })
}

/// Two Hamiltonians on the same space, diagonalised once for sweeps.
pub struct PerturbationPair {
    pub spec: SpectralDecomposition,
    pub spec_prime: SpectralDecomposition,
    /// `||H - H'||_inf`
    pub perturbation_norm: f64,
}

impl PerturbationPair {
    pub fn new(h: &Operator, h_prime: &Operator) -> Result<Self, EnsembleError> {
        Ok(Self {
            spec: diagonalize(h, DEFAULT_DEGENERACY_TOL)?,
            spec_prime: diagonalize(h_prime, DEFAULT_DEGENERACY_TOL)?,
            perturbation_norm: (h - h_prime).operator_norm()?,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub epsilon: f64,
    pub rank: usize,
    pub rank_prime: usize,
    /// Rank of the levels within `epsilon` of the window edges, for both.
    pub edge_rank: usize,
    pub edge_rank_prime: usize,
    pub perturbation_norm: f64,
}

fn edge_rank(spec: &SpectralDecomposition, window: &EnergyWindow, eps: f64) -> usize {
    spec.levels_in(window.lo, window.hi)
        .into_iter()
        .filter(|&k| window.edges_contain(spec.levels()[k], eps))
        .map(|k| spec.level_columns(k).len())
        .sum()
}

fn window_projector(spec: &SpectralDecomposition, window: &EnergyWindow) -> Operator {
    let cols = window_columns(spec, window);
    column_mixture(spec, &cols, &vec![1.0; cols.len()])
}

/// `||P - P'||_1` against `(rank P + rank P') ||H - H'|| / eps + rank P_eps + rank P'_eps`.
pub fn projector_stability_bound(pair: &PerturbationPair, window: &EnergyWindow, epsilon: f64) -> Result<StabilityReport, EnsembleError> {
    if !(epsilon > 0.0) {
        return Err(EnsembleError::BadParameter(format!("epsilon = {epsilon}")));
    }
    let p = window_projector(&pair.spec, window);
    let pp = window_projector(&pair.spec_prime, window);
    let lhs = (&p - &pp).trace_norm_hermitian()?;
    let r = microcanonical_rank(&pair.spec, window);
    let rp = microcanonical_rank(&pair.spec_prime, window);
    let er = edge_rank(&pair.spec, window, epsilon);
    let erp = edge_rank(&pair.spec_prime, window, epsilon);
    let rhs = (r + rp) as f64 * pair.perturbation_norm / epsilon + (er + erp) as f64;
    Ok(StabilityReport {
        lhs,
        rhs,
        satisfied: lhs <= rhs + 1e-9,
        epsilon,
        rank: r,
        rank_prime: rp,
        edge_rank: er,
        edge_rank_prime: erp,
        perturbation_norm: pair.perturbation_norm,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MicrocanonicalStabilityReport {
    pub stability: StabilityReport,
    /// `sqrt(||H - H'|| width / 2)`, the optimum for a uniform density of
    /// states.
    pub heuristic_epsilon: f64,
    /// `4 sqrt(||H - H'|| / width)`
    pub heuristic_bound: f64,
}

/// `D(micro-canonical[H], micro-canonical[H'])` against
/// `||H - H'|| / eps + (Omega_max - Omega_min + Omega_eps) / (2 Omega_max)`.
pub fn microcanonical_stability_bound(pair: &PerturbationPair, window: &EnergyWindow, epsilon: f64) -> Result<MicrocanonicalStabilityReport, EnsembleError> {
    if !(epsilon > 0.0) {
        return Err(EnsembleError::BadParameter(format!("epsilon = {epsilon}")));
    }
    let a = microcanonical_state(&pair.spec, window)?;
    let b = microcanonical_state(&pair.spec_prime, window)?;
    let lhs = trace_distance(&a, &b)?;
    let r = microcanonical_rank(&pair.spec, window);
    let rp = microcanonical_rank(&pair.spec_prime, window);
    let (omin, omax) = (r.min(rp) as f64, r.max(rp) as f64);
    let er = edge_rank(&pair.spec, window, epsilon);
    let erp = edge_rank(&pair.spec_prime, window, epsilon);
    let rhs = pair.perturbation_norm / epsilon + ((omax - omin) + (er + erp) as f64) / (2.0 * omax);
    let w = window.width();
    Ok(MicrocanonicalStabilityReport {
        stability: StabilityReport {
            lhs,
            rhs,
            satisfied: lhs <= rhs + 1e-9,
            epsilon,
            rank: r,
            rank_prime: rp,
            edge_rank: er,
            edge_rank_prime: erp,
            perturbation_norm: pair.perturbation_norm,
        },
        heuristic_epsilon: (pair.perturbation_norm * w / 2.0).sqrt(),
        heuristic_bound: 4.0 * (pair.perturbation_norm / w).sqrt(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThermalisationReport {
    pub counting: CountingReport,
    pub beta_hat: f64,
    /// `||H - H_S - H_B||_inf`
    pub interaction_norm: f64,
    /// `|beta_hat| ||H_I||_inf`
    pub coupling_ratio: f64,
    /// `1 / (|beta_hat| width)`
    pub window_ratio: f64,
    pub weak_coupling: bool,
    /// The coupling is too strong for the bound to say anything.
    pub vacuous: bool,
    pub rectangular_pure: bool,
    pub window_rank: usize,
    /// `D(omega^S, g^S)` for the dephased state.
    pub dephased_distance: f64,
    /// Time average of `D(rho^S(t), g^S)` over the grid.
    pub time_averaged_distance: f64,
}

/// Largest coupling ratio for which thermal proximity is asserted.
pub const WEAK_COUPLING_RATIO: f64 = 0.1;

/// Rectangular initial state of `h` in the window, evolved and compared on
/// `region` with the Gibbs state of the truncated `H_S` at the inverse
/// temperature fitted from the non-interacting counting argument.
pub fn thermalisation_pipeline(
    h: &LocalHamiltonian,
    region: &[usize],
    window: &EnergyWindow,
    coherence_seed: Option<u64>,
    times: &[f64],
) -> Result<ThermalisationReport, EnsembleError> {
    let graph = h.graph();
    let region = graph.check_region(region)?;
    let bath = graph.complement(&region);
    if bath.is_empty() {
        return Err(EnsembleError::BadParameter("region covers the whole lattice".into()));
    }
    let h_full = h.assemble()?;
    let hs_full = h.restricted(&region)?.assemble()?;
    let hb_full = h.restricted(&bath)?.assemble()?;
    let interaction_norm = (&(&h_full - &hs_full) - &hb_full).operator_norm()?;
    let hs = h.truncated(&region)?.assemble()?;
    let hb = h.truncated(&bath)?.assemble()?;
    let s_eigs = hs.eigvalsh()?;
    let b_eigs = hb.eigvalsh()?;
    let counting = counting_reduction_check(&s_eigs, &b_eigs, window)?;
    let beta_hat = counting.beta_hat;
    let hs_spec = diagonalize(&hs, DEFAULT_DEGENERACY_TOL)?;
    let thermal = gibbs_state(&hs_spec, beta_hat);
    let spec = diagonalize(&h_full, DEFAULT_DEGENERACY_TOL)?;
    let rect = rectangular_state(&spec, window, coherence_seed)?;
    let dims = graph.local_dims().to_vec();
    let omega_s = dephased_reduced(&rect.state, &spec, &dims, &region)?;
    let dephased_distance = trace_distance(&omega_s, &thermal)?;
    let traj = reduced_trajectory(&rect.state, &spec, &dims, &region, times)?;
    let mut d = Vec::with_capacity(times.len());
    for r in &traj.values {
        d.push(trace_distance(r, &thermal)?);
    }
    let time_averaged_distance = finite_time_average(&Trajectory::new(times.to_vec(), d)?);
    let coupling_ratio = beta_hat.abs() * interaction_norm;
    Ok(ThermalisationReport {
        counting,
        beta_hat,
        interaction_norm,
        coupling_ratio,
        window_ratio: 1.0 / (beta_hat.abs() * window.width()),
        weak_coupling: coupling_ratio <= WEAK_COUPLING_RATIO,
        vacuous: coupling_ratio > 1.0,
        rectangular_pure: rect.pure,
        window_rank: microcanonical_rank(&spec, window),
        dephased_distance,
        time_averaged_distance,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquivalenceRow {
    pub n_sites: usize,
    pub region_size: usize,
    pub energy: f64,
    pub spread: f64,
    pub window_rank: usize,
    /// `None` when the window holds no level.
    pub distance: Option<f64>,
}

/// `D(micro-canonical^X, g^X)` for growing system sizes, with the window
/// centred on the thermal energy and as wide as the thermal energy spread.
/// The region is the central block of `region_size` sites.
pub fn equivalence_of_ensembles_scan(
    family: impl Fn(usize) -> Result<LocalHamiltonian, LatticeError>,
    sizes: &[usize],
    beta: f64,
    region_sizes: &[usize],
) -> Result<Vec<EquivalenceRow>, EnsembleError> {
    let mut rows = Vec::new();
    for &n in sizes {
        let h = family(n)?;
        let spec = diagonalize(&h.assemble()?, DEFAULT_DEGENERACY_TOL)?;
        let energy = gibbs_energy(&spec, beta);
        let spread = gibbs_energy_spread(&spec, beta);
        let window = EnergyWindow::centred(energy, spread)?;
        let cols = window_columns(&spec, &window);
        let all: Vec<usize> = (0..spec.dim()).collect();
        let gw = gibbs_weights(&spec.column_energies(), beta);
        let dims = h.graph().local_dims().to_vec();
        for &x in region_sizes {
            if x == 0 || x > n {
                return Err(EnsembleError::BadParameter(format!("region size {x} for {n} sites")));
            }
            let start = (n - x) / 2;
            let keep: Vec<usize> = (start..start + x).collect();
            let distance = if cols.is_empty() {
                None
            } else {
                let mc = reduced_column_mixture(&spec, &cols, &vec![1.0 / cols.len() as f64; cols.len()], &dims, &keep);
                let g = reduced_column_mixture(&spec, &all, &gw, &dims, &keep);
                Some(trace_distance(&mc, &g)?)
            };
            rows.push(EquivalenceRow { n_sites: n, region_size: x, energy, spread, window_rank: cols.len(), distance });
        }
    }
    Ok(rows)
}

pub fn write_equivalence_csv<W: Write>(out: &mut W, rows: &[EquivalenceRow]) -> std::io::Result<()> {
    writeln!(out, "n_sites,region_size,energy,spread,window_rank,distance")?;
    for r in rows {
        let d = r.distance.map_or(String::new(), |v| format!("{v:.16e}"));
        writeln!(out, "{},{},{:.16e},{:.16e},{},{}", r.n_sites, r.region_size, r.energy, r.spread, r.window_rank, d)?;
    }
    Ok(())
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// Writes `rho` as little-endian complex128, row-major, and a text sidecar
/// `<path>.txt` holding `dim`, `kind` and the extra parameters.
pub fn write_density_matrix(path: &Path, rho: &Operator, kind: &str, params: &[(&str, String)]) -> Result<(), EnsembleError> {
    let d = rho.dim();
    let mut bytes = Vec::with_capacity(16 * d * d);
    for i in 0..d {
        for j in 0..d {
            let z = rho.get(i, j);
            bytes.extend_from_slice(&z.re.to_le_bytes());
            bytes.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    std::fs::write(path, bytes)?;
    let mut meta = format!("dim: {d}\nkind: {kind}\n");
    for (k, v) in params {
        meta.push_str(&format!("{k}: {v}\n"));
    }
    std::fs::write(sidecar_path(path), meta)?;
    Ok(())
}

/// Reads a matrix written by [`write_density_matrix`], taking the
/// dimension from the sidecar.
pub fn read_density_matrix(path: &Path) -> Result<Operator, EnsembleError> {
    let meta = std::fs::read_to_string(sidecar_path(path))?;
    let d: usize = meta
        .lines()
        .find_map(|l| l.strip_prefix("dim: "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| EnsembleError::Io("sidecar has no dim".into()))?;
    let bytes = std::fs::read(path)?;
    if bytes.len() != 16 * d * d {
        return Err(EnsembleError::Io(format!("expected {} bytes, found {}", 16 * d * d, bytes.len())));
    }
    let f = |k: usize| f64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().expect("8 bytes"));
    Ok(Operator::from_fn(d, |i, j| {
        let k = 2 * (i * d + j);
        c64::new(f(k), f(k + 1))
    }))
}
