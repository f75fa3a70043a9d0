//! Unitary time evolution in the eigenbasis, time averages and
//! propagation diagnostics.
//!
//! States evolve as `rho(t) = U(t)^dagger rho U(t)` with `U(t) = exp(-iHt)`,
//! i.e. `rho(t) = exp(iHt) rho exp(-iHt)`. Operators in the Lieb-Robinson
//! profile use the mirrored `B(t) = exp(-iHt) B exp(iHt)`. Spectra are
//! symmetric under the exchange, so every time-averaged quantity is the same
//! under either choice.

use std::io::Write;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::lattice::{norm_sq, partial_trace_dims, LatticeError, Operator, SparseOperator, State, entropy_of_spectrum};
use crate::spectral::{diagonalize, SpectralDecomposition, SpectralError, DEFAULT_DEGENERACY_TOL};

const CHUNK: usize = 256;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("time grid: {0}")]
    BadGrid(String),
    #[error("initial state is not a product across the cut (entropy {entropy:e} bits)")]
    NotProduct { entropy: f64 },
}

/// Values sampled on a strictly increasing time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub times: Vec<f64>,
    pub values: Vec<T>,
}

impl<T> Trajectory<T> {
    pub fn new(times: Vec<f64>, values: Vec<T>) -> Result<Self, DynamicsError> {
        check_grid(&times)?;
        if times.len() != values.len() {
            return Err(DynamicsError::BadGrid(format!("{} times for {} values", times.len(), values.len())));
        }
        Ok(Self { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

pub fn check_grid(times: &[f64]) -> Result<(), DynamicsError> {
    if times.is_empty() {
        return Err(DynamicsError::BadGrid("empty".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(DynamicsError::BadGrid("non-finite time".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DynamicsError::BadGrid("times must be strictly increasing".into()));
    }
    Ok(())
}

/// `n` evenly spaced points on `[t0, t1]`.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![t0];
    }
    (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect()
}

/// `n` logarithmically spaced points on `[t0, t1]`, `t0 > 0`.
pub fn log_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let (a, b) = (t0.ln(), t1.ln());
    uniform_grid(a, b, n).into_iter().map(f64::exp).collect()
}

/// 512 points over twenty periods of the mean level spacing.
pub fn default_grid(spec: &SpectralDecomposition) -> Vec<f64> {
    let n = spec.n_levels();
    let mean_gap = if n > 1 { spec.range() / (n - 1) as f64 } else { 1.0 };
    uniform_grid(0.0, 20.0 * std::f64::consts::PI / mean_gap, 512)
}

/// Trapezoid weights normalised by the duration, so that `sum w_i f_i` is the
/// time average.
pub fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    if n == 1 {
        return vec![1.0];
    }
    let total = times[n - 1] - times[0];
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = (times[i + 1] - times[i]) / total;
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// `(1/T) int f dt` by the trapezoid rule.
pub fn finite_time_average(traj: &Trajectory<f64>) -> f64 {
    trapezoid_weights(&traj.times).iter().zip(&traj.values).map(|(w, v)| w * v).sum()
}

pub fn finite_time_average_operator(traj: &Trajectory<Operator>) -> Operator {
    let d = traj.values[0].dim();
    let mut acc = Operator::zeros(d);
    for (w, v) in trapezoid_weights(&traj.times).iter().zip(&traj.values) {
        acc += &v.scale_real(*w);
    }
    acc
}

fn phases(energies: &[f64], t: f64, sign: f64) -> Vec<c64> {
    energies.iter().map(|&e| c64::from_polar(1.0, sign * e * t)).collect()
}

/// Evolution of one pure state, batched over many times.
pub struct PureEvolution<'a> {
    spec: &'a SpectralDecomposition,
    coeffs: Vec<c64>,
    energies: Vec<f64>,
}

impl<'a> PureEvolution<'a> {
    pub fn new(spec: &'a SpectralDecomposition, psi: &[c64]) -> Result<Self, DynamicsError> {
        if psi.len() != spec.dim() {
            return Err(DynamicsError::DimensionMismatch { expected: spec.dim(), found: psi.len() });
        }
        Ok(Self { spec, coeffs: spec.coefficients(psi), energies: spec.column_energies() })
    }

    pub fn coefficients(&self) -> &[c64] {
        &self.coeffs
    }

    /// Eigenbasis amplitudes at time `t`.
    pub fn eigen_amplitudes(&self, t: f64) -> Vec<c64> {
        self.coeffs.iter().zip(&self.energies).map(|(c, &e)| c * c64::from_polar(1.0, e * t)).collect()
    }

    pub fn state_at(&self, t: f64) -> Vec<c64> {
        self.spec.from_coefficients(&self.eigen_amplitudes(t))
    }

    /// Calls `f(i, psi(times[i]))` for every time, in order.
    pub fn for_each(&self, times: &[f64], mut f: impl FnMut(usize, &[c64])) {
        let d = self.spec.dim();
        for (chunk_index, chunk) in times.chunks(CHUNK).enumerate() {
            let m = chunk.len();
            let phi = Mat::from_fn(d, m, |j, k| self.coeffs[j] * c64::from_polar(1.0, self.energies[j] * chunk[k]));
            let states: Mat<c64> = match self.spec.real_vectors() {
                Some(u) => {
                    let re = Mat::from_fn(d, m, |j, k| phi[(j, k)].re);
                    let im = Mat::from_fn(d, m, |j, k| phi[(j, k)].im);
                    let a = u * &re;
                    let b = u * &im;
                    Mat::from_fn(d, m, |i, k| c64::new(a[(i, k)], b[(i, k)]))
                }
                None => self.spec.vectors() * &phi,
            };
            let mut col = vec![c64::new(0.0, 0.0); d];
            for k in 0..m {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = states[(i, k)];
                }
                f(chunk_index * CHUNK + k, &col);
            }
        }
    }
}

/// `rho'` in the eigenbasis.
fn eigen_density(spec: &SpectralDecomposition, state: &State) -> Operator {
    match state {
        State::Pure(psi) => {
            let c = spec.coefficients(psi);
            Operator::outer(&c, &c)
        }
        State::Mixed(rho) => spec.to_eigenbasis(rho),
    }
}

pub fn evolve_state(state: &State, spec: &SpectralDecomposition, t: f64) -> Result<State, DynamicsError> {
    if state.dim() != spec.dim() {
        return Err(DynamicsError::DimensionMismatch { expected: spec.dim(), found: state.dim() });
    }
    Ok(match state {
        State::Pure(psi) => State::Pure(PureEvolution::new(spec, psi)?.state_at(t)),
        State::Mixed(rho) => {
            let r = spec.to_eigenbasis(rho);
            let p = phases(&spec.column_energies(), t, 1.0);
            let rt = Operator::from_fn(r.dim(), |j, k| p[j] * r.get(j, k) * p[k].conj());
            State::Mixed(spec.from_eigenbasis(&rt))
        }
    })
}

/// `sum_jk M_jk exp(i (E_j - E_k) t)` for every time.
pub fn bilinear_trajectory(m: &Operator, energies: &[f64], times: &[f64]) -> Vec<c64> {
    let d = m.dim();
    let mut out = Vec::with_capacity(times.len());
    for chunk in times.chunks(CHUNK) {
        let ebar = Mat::from_fn(d, chunk.len(), |k, t| c64::from_polar(1.0, -energies[k] * chunk[t]));
        let w = m.mat() * &ebar;
        for (t, &tt) in chunk.iter().enumerate() {
            let mut acc = c64::new(0.0, 0.0);
            for j in 0..d {
                acc += c64::from_polar(1.0, energies[j] * tt) * w[(j, t)];
            }
            out.push(acc);
        }
    }
    out
}

/// Elementwise `A'_kj rho'_jk`: the weights of `Tr(A rho(t))` on each pair
/// of eigenvectors.
fn pair_weights(a_eig: &Operator, rho_eig: &Operator) -> Operator {
    Operator::from_fn(a_eig.dim(), |j, k| a_eig.get(k, j) * rho_eig.get(j, k))
}

/// `<A>` along the trajectory of `state`.
pub fn expectation_trajectory(a: &Operator, state: &State, spec: &SpectralDecomposition, times: &[f64]) -> Result<Trajectory<f64>, DynamicsError> {
    check_grid(times)?;
    for d in [a.dim(), state.dim()] {
        if d != spec.dim() {
            return Err(DynamicsError::DimensionMismatch { expected: spec.dim(), found: d });
        }
    }
    let m = pair_weights(&spec.to_eigenbasis(a), &eigen_density(spec, state));
    let vals = bilinear_trajectory(&m, &spec.column_energies(), times).into_iter().map(|z| z.re).collect();
    Trajectory::new(times.to_vec(), vals)
}

/// Infinite-time average `omega = sum_k Pi_k rho Pi_k`.
pub fn dephase(state: &State, spec: &SpectralDecomposition) -> Result<Operator, DynamicsError> {
    if state.dim() != spec.dim() {
        return Err(DynamicsError::DimensionMismatch { expected: spec.dim(), found: state.dim() });
    }
    let r = eigen_density(spec, state);
    let blocked = Operator::from_fn(r.dim(), |j, k| {
        if spec.level_of_column(j) == spec.level_of_column(k) {
            r.get(j, k)
        } else {
            c64::new(0.0, 0.0)
        }
    });
    Ok(spec.from_eigenbasis(&blocked))
}

/// Reduced state of the dephased state on `keep`.
pub fn dephased_reduced(state: &State, spec: &SpectralDecomposition, dims: &[usize], keep: &[usize]) -> Result<Operator, DynamicsError> {
    match state {
        State::Pure(psi) => {
            if psi.len() != spec.dim() {
                return Err(DynamicsError::DimensionMismatch { expected: spec.dim(), found: psi.len() });
            }
            // column k holds Pi_k psi; the reduced state sums their reductions
            let c = spec.coefficients(psi);
            let d = spec.dim();
            let v = spec.vectors();
            let mut w = Mat::<c64>::zeros(d, spec.n_levels());
            for j in 0..d {
                if c[j].norm_sqr() < 1e-300 {
                    continue;
                }
                let k = spec.level_of_column(j);
                for i in 0..d {
                    w[(i, k)] += v[(i, j)] * c[j];
                }
            }
            let dk: usize = keep.iter().map(|&s| dims[s]).product();
            let mut acc = Operator::zeros(dk);
            for k in 0..spec.n_levels() {
                let col: Vec<c64> = (0..d).map(|i| w[(i, k)]).collect();
                if norm_sq(&col) < 1e-300 {
                    continue;
                }
                acc += &partial_trace_dims(dims, &State::Pure(col), keep);
            }
            Ok(acc)
        }
        State::Mixed(_) => Ok(partial_trace_dims(dims, &State::Mixed(dephase(state, spec)?), keep)),
    }
}

/// Reduced state on `keep` along the trajectory.
pub fn reduced_trajectory(state: &State, spec: &SpectralDecomposition, dims: &[usize], keep: &[usize], times: &[f64]) -> Result<Trajectory<Operator>, DynamicsError> {
    check_grid(times)?;
    let mut out = Vec::with_capacity(times.len());
    match state {
        State::Pure(psi) => {
            let ev = PureEvolution::new(spec, psi)?;
            ev.for_each(times, |_, v| out.push(partial_trace_dims(dims, &State::Pure(v.to_vec()), keep)));
        }
        State::Mixed(_) => {
            for &t in times {
                out.push(partial_trace_dims(dims, &evolve_state(state, spec, t)?, keep));
            }
        }
    }
    Trajectory::new(times.to_vec(), out)
}

/// `lim (1/T) int (<A>_t - <A>_omega)^2 dt`, exactly.
///
/// The deviation is `sum over gaps g != 0 of W_g exp(i g t)`, where `W_g`
/// collects `Tr(Pi_l rho Pi_k A)` over level pairs with `E_k - E_l = g`
/// (within the degeneracy tolerance); the average is `sum_g |W_g|^2`.
pub fn infinite_time_avg_sq_deviation(a: &Operator, state: &State, spec: &SpectralDecomposition) -> Result<f64, DynamicsError> {
    for d in [a.dim(), state.dim()] {
        if d != spec.dim() {
            return Err(DynamicsError::DimensionMismatch { expected: spec.dim(), found: d });
        }
    }
    let m = pair_weights(&spec.to_eigenbasis(a), &eigen_density(spec, state));
    let nl = spec.n_levels();
    let lv = spec.levels();
    let mut w = vec![c64::new(0.0, 0.0); nl * nl];
    let d = spec.dim();
    for j in 0..d {
        let kj = spec.level_of_column(j);
        for k in 0..d {
            let kk = spec.level_of_column(k);
            if kj != kk {
                w[kj * nl + kk] += m.get(j, k);
            }
        }
    }
    let mut pairs: Vec<(f64, c64)> = Vec::with_capacity(nl * nl);
    for a_ in 0..nl {
        for b in 0..nl {
            if a_ != b {
                pairs.push((lv[a_] - lv[b], w[a_ * nl + b]));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let tol = spec.tolerance();
    let mut total = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let mut acc = pairs[i].1;
        while i + 1 < pairs.len() && pairs[i + 1].0 - pairs[i].0 <= tol {
            i += 1;
            acc += pairs[i].1;
        }
        total += acc.norm_sqr();
        i += 1;
    }
    Ok(total)
}

/// Time average of `(<A>(t) - Tr(A omega))^2` over `[0, T]` from `n_samples`
/// stratified random times, one uniformly placed in each of `n_samples`
/// equal slices. Usable when `T` is far too long for a uniform grid.
pub fn sampled_time_avg_sq_deviation(
    a: &Operator,
    state: &State,
    spec: &SpectralDecomposition,
    t_final: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64, DynamicsError> {
    for d in [a.dim(), state.dim()] {
        if d != spec.dim() {
            return Err(DynamicsError::DimensionMismatch { expected: spec.dim(), found: d });
        }
    }
    if !(t_final > 0.0 && t_final.is_finite()) || n_samples == 0 {
        return Err(DynamicsError::BadGrid(format!("T = {t_final} with {n_samples} samples")));
    }
    let m = pair_weights(&spec.to_eigenbasis(a), &eigen_density(spec, state));
    let d = spec.dim();
    let mut mean = 0.0;
    for j in 0..d {
        for k in spec.level_columns(spec.level_of_column(j)) {
            mean += m.get(j, k).re;
        }
    }
    let mut rng = crate::rng::stream_rng(seed, 0);
    let slice = t_final / n_samples as f64;
    let times: Vec<f64> = (0..n_samples).map(|i| slice * (i as f64 + rand::Rng::random::<f64>(&mut rng))).collect();
    let vals = bilinear_trajectory(&m, &spec.column_energies(), &times);
    Ok(vals.iter().map(|z| (z.re - mean).powi(2)).sum::<f64>() / n_samples as f64)
}

/// Piecewise-constant schedule: evolve under each Hamiltonian for its
/// duration, in order.
pub fn ramp_evolve(schedule: &[(Operator, f64)], state: &State) -> Result<State, DynamicsError> {
    let mut s = state.clone();
    for (h, dt) in schedule {
        if *dt < 0.0 || !dt.is_finite() {
            return Err(DynamicsError::BadGrid(format!("segment duration {dt}")));
        }
        let spec = diagonalize(h, DEFAULT_DEGENERACY_TOL)?;
        s = evolve_state(&s, &spec, *dt)?;
    }
    Ok(s)
}

/// `||[A, B(t)]||` with `B(t) = exp(-iHt) B exp(iHt)`.
pub fn lieb_robinson_profile(spec: &SpectralDecomposition, a: &Operator, b: &Operator, times: &[f64]) -> Result<Trajectory<f64>, DynamicsError> {
    check_grid(times)?;
    let a_sparse = SparseOperator::from_dense(a);
    let bp = spec.to_eigenbasis(b);
    let e = spec.column_energies();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let p = phases(&e, t, -1.0);
        let bt_eig = Operator::from_fn(bp.dim(), |j, k| p[j] * bp.get(j, k) * p[k].conj());
        let bt = spec.from_eigenbasis(&bt_eig);
        let comm = &a_sparse.mul_dense(&bt) - &a_sparse.dense_mul(&bt);
        // i[A, B] is Hermitian for Hermitian A, B
        let ic = comm.scale(c64::new(0.0, 1.0));
        let n = if ic.is_hermitian(1e-10) {
            ic.hermitian_part().eigvalsh()?.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        } else {
            comm.operator_norm()?
        };
        out.push(n);
    }
    Trajectory::new(times.to_vec(), out)
}

/// Arrival threshold used for front detection, relative to `||A|| ||B||`.
pub const ARRIVAL_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrontFit {
    pub distances: Vec<f64>,
    pub arrival_times: Vec<f64>,
    /// Inverse slope of arrival time against distance.
    pub velocity: f64,
}

/// First time the profile reaches `threshold`, linearly interpolated.
pub fn arrival_time(profile: &Trajectory<f64>, threshold: f64) -> Option<f64> {
    let (t, v) = (&profile.times, &profile.values);
    if v[0] >= threshold {
        return Some(t[0]);
    }
    (1..t.len()).find(|&i| v[i] >= threshold).map(|i| {
        let f = (threshold - v[i - 1]) / (v[i] - v[i - 1]);
        t[i - 1] + f * (t[i] - t[i - 1])
    })
}

/// Least-squares front velocity from profiles at several distances.
pub fn front_velocity(profiles: &[(f64, Trajectory<f64>)], threshold: f64) -> Option<FrontFit> {
    let mut xs = Vec::new();
    let mut ts = Vec::new();
    for (d, p) in profiles {
        if let Some(t) = arrival_time(p, threshold) {
            xs.push(*d);
            ts.push(t);
        }
    }
    if xs.len() < 2 {
        return None;
    }
    let (slope, _) = linear_fit(&xs, &ts);
    Some(FrontFit { distances: xs, arrival_times: ts, velocity: 1.0 / slope })
}

/// Ordinary least squares `y = a x + b`; returns `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let a = sxy / sxx;
    (a, my - a * mx)
}

/// Entanglement entropy (bits) of `region` for a pure product initial state.
pub fn entanglement_growth(psi0: &[c64], spec: &SpectralDecomposition, dims: &[usize], region: &[usize], times: &[f64]) -> Result<Trajectory<f64>, DynamicsError> {
    check_grid(times)?;
    let s0 = entropy_of_spectrum(&partial_trace_dims(dims, &State::Pure(psi0.to_vec()), region).hermitian_part().eigvalsh()?, 1.0);
    if s0 > 1e-10 {
        return Err(DynamicsError::NotProduct { entropy: s0 });
    }
    let ev = PureEvolution::new(spec, psi0)?;
    let mut out = Vec::with_capacity(times.len());
    let mut err = None;
    ev.for_each(times, |_, v| {
        let r = partial_trace_dims(dims, &State::Pure(v.to_vec()), region);
        match r.hermitian_part().eigvalsh() {
            Ok(ev) => out.push(entropy_of_spectrum(&ev, 1.0)),
            Err(e) => {
                err = Some(e);
                out.push(f64::NAN)
            }
        }
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    Trajectory::new(times.to_vec(), out)
}

/// `|<psi0|psi(t)>|^2 = |sum_k p_k exp(-i E_k t)|^2`
pub fn survival_probability(psi0: &[c64], spec: &SpectralDecomposition, times: &[f64]) -> Result<Trajectory<f64>, DynamicsError> {
    check_grid(times)?;
    let p = spec.populations(&State::Pure(psi0.to_vec()))?;
    let lv = spec.levels();
    let vals = times
        .iter()
        .map(|&t| p.iter().zip(lv).map(|(pk, &e)| c64::from_polar(*pk, -e * t)).sum::<c64>().norm_sqr())
        .collect();
    Trajectory::new(times.to_vec(), vals)
}

/// Writes `t,value` rows after `#`-prefixed metadata.
pub fn write_trajectory_csv<W: Write>(out: &mut W, traj: &Trajectory<f64>, column: &str, meta: &[(&str, String)]) -> std::io::Result<()> {
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    writeln!(out, "t,{column}")?;
    for (t, v) in traj.times.iter().zip(&traj.values) {
        writeln!(out, "{t:.16e},{v:.16e}")?;
    }
    Ok(())
}
