//! Eigenstate diagnostics and localisation markers: ETH window statistics,
//! effective entanglement in the eigenbasis and the memory bound built on
//! it, the single-particle Anderson chain, and disorder-averaged many-body
//! localisation tables.

use std::io::Write;

use faer::c64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{check_grid, dephased_reduced, linear_fit, DynamicsError, PureEvolution, Trajectory};
use crate::ensembles::beta_from_energy;
use crate::lattice::models::{chain_graph, heisenberg_chain};
use crate::lattice::{
    entropy_of_spectrum, partial_trace_dims, partial_trace_in_basis, trace_distance, Boundary, LatticeError, LocalHamiltonian,
    Operator, SectorBasis, State,
};
use crate::rng::stream_rng;
use crate::spectral::{diagonalize, level_spacing_ratios_window, mean, SpectralDecomposition, SpectralError, DEFAULT_DEGENERACY_TOL};

/// Populations below this are skipped in sums over levels.
pub const POPULATION_CUTOFF: f64 = 1e-14;

/// Slack on the memory-bound inequality.
pub const MEMORY_BOUND_SLACK: f64 = 1e-9;

/// Mean spacing ratio for the Gaussian orthogonal ensemble.
pub const R_GOE: f64 = 0.5307;

/// `2 ln 2 - 1`, the Poisson value.
pub const R_POISSON: f64 = 0.3863;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("state is not a product across the cut (subsystem purity {purity})")]
    NotProduct { purity: f64 },
    #[error("the two initial states differ on the bath (trace distance {distance:e})")]
    DifferentBath { distance: f64 },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

/// Statistics of eigenstate expectation values in one energy window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EthWindow {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    /// `max - min` of the diagonal elements in the window.
    pub spread: f64,
    /// `Tr(A g(beta(E)))` at the window centre, when such a `beta` exists.
    pub thermal_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EthScan {
    pub energies: Vec<f64>,
    /// `<E_j|A|E_j>` for every eigenvector column.
    pub diagonal: Vec<f64>,
    /// Spread of the eigenvalues of `Pi_k A Pi_k` within each level; zero for
    /// nondegenerate levels.
    pub level_spread: Vec<f64>,
    /// `|<E_j|A|E_{j+1}>|` for consecutive columns.
    pub off_diagonal: Vec<f64>,
    pub windows: Vec<EthWindow>,
    pub max_window_spread: f64,
}

impl EthScan {
    /// Mean window standard deviation over windows whose centre lies in the
    /// middle third of the spectrum.
    pub fn mid_spectrum_spread(&self) -> f64 {
        let lo = self.energies[0];
        let hi = self.energies[self.energies.len() - 1];
        let (a, b) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
        let sd: Vec<f64> = self
            .windows
            .iter()
            .filter(|w| {
                let c = 0.5 * (w.lo + w.hi);
                c >= a && c <= b && w.count > 1
            })
            .map(|w| w.variance.sqrt())
            .collect();
        mean(&sd)
    }
}

/// Diagonal elements of `A` in the energy eigenbasis, binned into
/// consecutive windows of `window_width`.
pub fn eth_scan(a: &Operator, spec: &SpectralDecomposition, window_width: f64) -> Result<EthScan, DiagnosticsError> {
    if a.dim() != spec.dim() {
        return Err(DiagnosticsError::DimensionMismatch { expected: spec.dim(), found: a.dim() });
    }
    if !(window_width > 0.0) {
        return Err(DiagnosticsError::BadParameter(format!("window width {window_width}")));
    }
    let ap = spec.to_eigenbasis(&a.hermitian_part());
    let d = spec.dim();
    let energies = spec.column_energies();
    let diagonal: Vec<f64> = (0..d).map(|j| ap.get(j, j).re).collect();
    let off_diagonal: Vec<f64> = (0..d.saturating_sub(1)).map(|j| ap.get(j, j + 1).norm()).collect();
    let mut level_spread = Vec::with_capacity(spec.n_levels());
    for k in 0..spec.n_levels() {
        let cols = spec.level_columns(k);
        if cols.len() == 1 {
            level_spread.push(0.0);
            continue;
        }
        let block = Operator::from_fn(cols.len(), |i, j| ap.get(cols.start + i, cols.start + j));
        let ev = block.eigvalsh()?;
        level_spread.push(ev[ev.len() - 1] - ev[0]);
    }

    let e0 = energies[0];
    let n_windows = (((energies[d - 1] - e0) / window_width).floor() as usize) + 1;
    let mut windows = Vec::new();
    for w in 0..n_windows {
        let lo = e0 + w as f64 * window_width;
        let hi = lo + window_width;
        let idx: Vec<usize> = (0..d).filter(|&j| energies[j] >= lo && (energies[j] < hi || w + 1 == n_windows)).collect();
        if idx.is_empty() {
            continue;
        }
        let vals: Vec<f64> = idx.iter().map(|&j| diagonal[j]).collect();
        let m = mean(&vals);
        let variance = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
        let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let centre = 0.5 * (lo + hi);
        let thermal_value = beta_from_energy(spec, centre).ok().map(|beta| {
            let w = crate::ensembles::gibbs_weights(spec.eigenvalues(), beta);
            w.iter().zip(&diagonal).map(|(p, x)| p * x).sum()
        });
        windows.push(EthWindow { lo, hi, count: idx.len(), mean: m, variance, spread, thermal_value });
    }
    let max_window_spread = windows.iter().map(|w| w.spread).fold(0.0, f64::max);
    Ok(EthScan { energies, diagonal, level_spread, off_diagonal, windows, max_window_spread })
}

/// Calls `f(p_k, Pi_k psi)` for every level with population above
/// [`POPULATION_CUTOFF`].
fn for_each_level_component(spec: &SpectralDecomposition, psi: &[c64], mut f: impl FnMut(f64, &[c64]) -> Result<(), DiagnosticsError>) -> Result<(), DiagnosticsError> {
    let c = spec.coefficients(psi);
    let d = spec.dim();
    let v = spec.vectors();
    for k in 0..spec.n_levels() {
        let cols = spec.level_columns(k);
        let p: f64 = cols.clone().map(|j| c[j].norm_sqr()).sum();
        if p <= POPULATION_CUTOFF {
            continue;
        }
        let mut w = vec![c64::new(0.0, 0.0); d];
        for j in cols {
            for (i, x) in w.iter_mut().enumerate() {
                *x += c[j] * v[(i, j)];
            }
        }
        f(p, &w)?;
    }
    Ok(())
}

/// `R_{S|B}(psi) = sum_k p_k D(Tr_B(Pi_k psi Pi_k)/p_k, psi^S)`.
pub fn effective_eigenbasis_entanglement(psi: &[c64], spec: &SpectralDecomposition, dims: &[usize], region: &[usize]) -> Result<f64, DiagnosticsError> {
    if psi.len() != spec.dim() {
        return Err(DiagnosticsError::DimensionMismatch { expected: spec.dim(), found: psi.len() });
    }
    let psi_s = partial_trace_dims(dims, &State::Pure(psi.to_vec()), region);
    let mut r = 0.0;
    for_each_level_component(spec, psi, |p, w| {
        let reduced = partial_trace_dims(dims, &State::Pure(w.to_vec()), region).scale_real(1.0 / p);
        r += p * trace_distance(&reduced, &psi_s)?;
        Ok(())
    })?;
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    /// `D(omega^S(1), omega^S(2))`
    pub lhs: f64,
    /// `D(psi^S_1, psi^S_2) - R_1 - R_2`
    pub rhs: f64,
    pub initial_distance: f64,
    pub r1: f64,
    pub r2: f64,
    pub satisfied: bool,
}

/// Reduced states on `region` and its complement, checking that the state
/// is a product across the cut.
fn product_factors(psi: &[c64], dims: &[usize], region: &[usize], rest: &[usize]) -> Result<(Operator, Operator), DiagnosticsError> {
    let state = State::Pure(psi.to_vec());
    let s = partial_trace_dims(dims, &state, region);
    let purity = s.trace_product(&s).re;
    if (purity - 1.0).abs() > 1e-10 {
        return Err(DiagnosticsError::NotProduct { purity });
    }
    Ok((s, partial_trace_dims(dims, &state, rest)))
}

/// Lower bound on how distinguishable two de-phased subsystem states stay
/// when the initial product states differ only on `region`.
pub fn initial_state_memory_bound(
    psi1: &[c64],
    psi2: &[c64],
    spec: &SpectralDecomposition,
    dims: &[usize],
    region: &[usize],
) -> Result<MemoryReport, DiagnosticsError> {
    let d = spec.dim();
    for p in [psi1, psi2] {
        if p.len() != d {
            return Err(DiagnosticsError::DimensionMismatch { expected: d, found: p.len() });
        }
    }
    let rest: Vec<usize> = (0..dims.len()).filter(|s| !region.contains(s)).collect();
    let (s1, b1) = product_factors(psi1, dims, region, &rest)?;
    let (s2, b2) = product_factors(psi2, dims, region, &rest)?;
    let bath_distance = trace_distance(&b1, &b2)?;
    if bath_distance > 1e-10 {
        return Err(DiagnosticsError::DifferentBath { distance: bath_distance });
    }
    let w1 = dephased_reduced(&State::Pure(psi1.to_vec()), spec, dims, region)?;
    let w2 = dephased_reduced(&State::Pure(psi2.to_vec()), spec, dims, region)?;
    let lhs = trace_distance(&w1, &w2)?;
    let initial_distance = trace_distance(&s1, &s2)?;
    let r1 = effective_eigenbasis_entanglement(psi1, spec, dims, region)?;
    let r2 = effective_eigenbasis_entanglement(psi2, spec, dims, region)?;
    let rhs = initial_distance - r1 - r2;
    Ok(MemoryReport { lhs, rhs, initial_distance, r1, r2, satisfied: lhs >= rhs - MEMORY_BOUND_SLACK })
}

/// Single-particle Anderson chain with open ends: unit hopping plus
/// `lambda V_x` with `V_x` uniform on `[-W/2, W/2]`.
pub fn anderson_hamiltonian<R: Rng + ?Sized>(l: usize, lambda: f64, disorder_width: f64, rng: &mut R) -> Result<Operator, DiagnosticsError> {
    if l < 2 {
        return Err(DiagnosticsError::BadParameter(format!("chain length {l} below 2")));
    }
    let v: Vec<f64> = (0..l).map(|_| disorder_width * (rng.random::<f64>() - 0.5)).collect();
    Ok(Operator::from_real_fn(l, |i, j| {
        if i == j {
            lambda * v[i]
        } else if i.abs_diff(j) == 1 {
            1.0
        } else {
            0.0
        }
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    /// `sum_x |psi(x)|^4` per eigenvector.
    pub ipr: Vec<f64>,
    /// Decay length of the exponential envelope away from the peak.
    pub decay_length: Vec<Option<f64>>,
    pub median_ipr: f64,
}

/// Amplitudes below this are excluded from the envelope fit.
const ENVELOPE_FLOOR: f64 = 1e-12;

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Inverse participation ratios and envelope fits of
/// `ln |psi(x)|` against `|x - x_peak|`.
pub fn eigenfunction_localization(spec: &SpectralDecomposition) -> LocalizationReport {
    let d = spec.dim();
    let v = spec.vectors();
    let mut ipr = Vec::with_capacity(d);
    let mut decay_length = Vec::with_capacity(d);
    for j in 0..d {
        let amp: Vec<f64> = (0..d).map(|x| v[(x, j)].norm()).collect();
        ipr.push(amp.iter().map(|a| a.powi(4)).sum());
        let peak = (0..d).max_by(|&a, &b| amp[a].total_cmp(&amp[b])).unwrap_or(0);
        let (xs, ys): (Vec<f64>, Vec<f64>) = (0..d)
            .filter(|&x| x != peak && amp[x] > ENVELOPE_FLOOR)
            .map(|x| (x.abs_diff(peak) as f64, amp[x].ln()))
            .unzip();
        let fit = if xs.len() >= 2 {
            let (slope, _) = linear_fit(&xs, &ys);
            (slope < 0.0).then(|| -1.0 / slope)
        } else {
            None
        };
        decay_length.push(fit);
    }
    let median_ipr = median(&ipr);
    LocalizationReport { ipr, decay_length, median_ipr }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportReport {
    pub moments: Trajectory<f64>,
    pub supremum: f64,
}

/// `<|X - x0|^q>` for a particle started on site `x0`.
pub fn transport_moments(x0: usize, spec: &SpectralDecomposition, times: &[f64], q: f64) -> Result<TransportReport, DiagnosticsError> {
    let l = spec.dim();
    if x0 >= l {
        return Err(DiagnosticsError::BadParameter(format!("start site {x0} outside chain of {l}")));
    }
    if !(q > 0.0) {
        return Err(DiagnosticsError::BadParameter(format!("moment order {q}")));
    }
    check_grid(times)?;
    let mut psi = vec![c64::new(0.0, 0.0); l];
    psi[x0] = c64::new(1.0, 0.0);
    let ev = PureEvolution::new(spec, &psi)?;
    let weight: Vec<f64> = (0..l).map(|x| (x.abs_diff(x0) as f64).powf(q)).collect();
    let mut values = vec![0.0; times.len()];
    ev.for_each(times, |i, v| {
        values[i] = v.iter().zip(&weight).map(|(a, w)| a.norm_sqr() * w).sum();
    });
    let supremum = values.iter().cloned().fold(0.0, f64::max);
    Ok(TransportReport { moments: Trajectory::new(times.to_vec(), values)?, supremum })
}

/// `sum S_i.S_{i+1} + sum h_i S^z_i` with `h_i` uniform on `[-W, W]`.
pub fn disordered_heisenberg<R: Rng + ?Sized>(n: usize, w: f64, boundary: Boundary, rng: &mut R) -> Result<LocalHamiltonian, DiagnosticsError> {
    if n < 2 {
        return Err(DiagnosticsError::BadParameter(format!("chain length {n} below 2")));
    }
    let fields: Vec<f64> = (0..n).map(|_| w * (2.0 * rng.random::<f64>() - 1.0)).collect();
    let g = chain_graph(n, boundary, false)?;
    Ok(heisenberg_chain(&g, boundary, 1.0, &fields)?)
}

/// Mean spacing ratio over the middle third of an ascending spectrum.
pub fn mid_spectrum_ratio(sorted: &[f64]) -> f64 {
    mean(&level_spacing_ratios_window(sorted, 1.0 / 3.0, 2.0 / 3.0))
}

/// `(1/n) sum_i (-1)^i <sigma^z_i>` on every basis state of the sector.
fn imbalance_diagonal(n: usize, basis: &[usize]) -> Vec<f64> {
    basis
        .iter()
        .map(|&s| {
            (0..n)
                .map(|i| {
                    let up = (s >> (n - 1 - i)) & 1 == 0;
                    let z = if up { 1.0 } else { -1.0 };
                    if i % 2 == 0 {
                        z
                    } else {
                        -z
                    }
                })
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceReport {
    pub trajectory: Trajectory<f64>,
    /// Infinite-time average from the de-phased state.
    pub long_time: f64,
}

/// Even/odd imbalance from the Neel state with even sites up, for `spec`
/// given on the listed basis states (a sector, or every state).
pub fn imbalance_trajectory(spec: &SpectralDecomposition, n: usize, basis: &[usize], times: &[f64]) -> Result<ImbalanceReport, DiagnosticsError> {
    if n % 2 != 0 {
        return Err(DiagnosticsError::BadParameter(format!("odd chain length {n}")));
    }
    if basis.len() != spec.dim() {
        return Err(DiagnosticsError::DimensionMismatch { expected: spec.dim(), found: basis.len() });
    }
    check_grid(times)?;
    let neel: usize = (0..n).filter(|i| i % 2 == 1).map(|i| 1usize << (n - 1 - i)).sum();
    let start = basis
        .iter()
        .position(|&s| s == neel)
        .ok_or_else(|| DiagnosticsError::BadParameter("Neel state outside the basis".into()))?;
    let mut psi = vec![c64::new(0.0, 0.0); basis.len()];
    psi[start] = c64::new(1.0, 0.0);
    let z = imbalance_diagonal(n, basis);
    let ev = PureEvolution::new(spec, &psi)?;
    let mut values = vec![0.0; times.len()];
    ev.for_each(times, |i, v| {
        values[i] = v.iter().zip(&z).map(|(a, w)| a.norm_sqr() * w).sum();
    });
    let mut long_time = 0.0;
    for_each_level_component(spec, &psi, |_, w| {
        long_time += w.iter().zip(&z).map(|(a, x)| a.norm_sqr() * x).sum::<f64>();
        Ok(())
    })?;
    Ok(ImbalanceReport { trajectory: Trajectory::new(times.to_vec(), values)?, long_time })
}

/// Least-squares fit quality of `y` against `x`: `(R^2, residual sum)`.
fn fit_quality(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (a, b) = linear_fit(x, y);
    let my = mean(y);
    let ss_res: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - a * xi - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|yi| (yi - my).powi(2)).sum();
    (if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 }, ss_res)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MblParams {
    pub n: usize,
    pub disorder: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    /// Times for the half-chain entanglement growth.
    pub times: Vec<f64>,
    pub boundary: Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MblRow {
    pub w: f64,
    pub mean_r: f64,
    pub r_stderr: f64,
    pub imbalance_infty: f64,
    /// Disorder-averaged half-chain entropy on the time grid.
    pub entanglement: Vec<f64>,
    pub ent_fit_log_r2: f64,
    pub ent_fit_lin_r2: f64,
    /// Residual sum of the linear fit over that of the logarithmic fit.
    pub residual_ratio: f64,
    pub eigenstate_entropy_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MblReport {
    pub params: MblParams,
    pub rows: Vec<MblRow>,
    /// Disorder strength where the mean ratio crosses the midpoint of the
    /// two reference values.
    pub crossover: Option<f64>,
}

/// Disorder-averaged mean spacing ratio in the zero-magnetisation sector:
/// `(mean, standard error)` over realizations drawn from
/// `stream_rng(seed, stream_base + i)`.
pub fn disorder_averaged_ratio(n: usize, w: f64, boundary: Boundary, realizations: usize, seed: u64, stream_base: u64) -> Result<(f64, f64), DiagnosticsError> {
    let sector = SectorBasis::half_filling(n);
    let rs: Vec<f64> = (0..realizations)
        .into_par_iter()
        .map(|i| -> Result<f64, DiagnosticsError> {
            let h = disordered_heisenberg(n, w, boundary, &mut stream_rng(seed, stream_base + i as u64))?;
            let e = h.assemble_in_basis(sector.states())?.eigvalsh()?;
            Ok(mid_spectrum_ratio(&e))
        })
        .collect::<Result<_, _>>()?;
    Ok(mean_and_stderr(&rs))
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, (var / v.len() as f64).sqrt())
}

struct Realization {
    r: f64,
    imbalance: f64,
    entanglement: Vec<f64>,
    eigenstate_entropy: f64,
}

fn mbl_realization(params: &MblParams, w: f64, stream: u64, sector: &SectorBasis) -> Result<Realization, DiagnosticsError> {
    let n = params.n;
    let h = disordered_heisenberg(n, w, params.boundary, &mut stream_rng(params.seed, stream))?;
    let spec = diagonalize(&h.assemble_in_basis(sector.states())?, DEFAULT_DEGENERACY_TOL)?;
    let r = mid_spectrum_ratio(spec.eigenvalues());
    let imb = if params.times.is_empty() {
        imbalance_trajectory(&spec, n, sector.states(), &[0.0])?
    } else {
        imbalance_trajectory(&spec, n, sector.states(), &params.times)?
    };
    let dims = vec![2; n];
    let half: Vec<usize> = (0..n / 2).collect();
    let entropy_of = |amps: &[c64]| -> Result<f64, DiagnosticsError> {
        let rho = partial_trace_in_basis(&dims, sector.states(), amps, &half);
        Ok(entropy_of_spectrum(&rho.hermitian_part().eigvalsh()?, 1.0))
    };
    let neel: usize = (0..n).filter(|i| i % 2 == 1).map(|i| 1usize << (n - 1 - i)).sum();
    let start = sector.index_of(neel).ok_or_else(|| DiagnosticsError::BadParameter("Neel state outside the sector".into()))?;
    let mut psi = vec![c64::new(0.0, 0.0); sector.dim()];
    psi[start] = c64::new(1.0, 0.0);
    let mut entanglement = vec![0.0; params.times.len()];
    if !params.times.is_empty() {
        let ev = PureEvolution::new(&spec, &psi)?;
        let mut err = None;
        ev.for_each(&params.times, |i, v| match entropy_of(v) {
            Ok(s) => entanglement[i] = s,
            Err(e) => err = Some(e),
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    let d = spec.dim();
    let mid: Vec<usize> = (d / 3..(2 * d) / 3).collect();
    let mut ent = Vec::with_capacity(mid.len());
    for j in mid {
        ent.push(entropy_of(&spec.vector(j))?);
    }
    Ok(Realization { r, imbalance: imb.long_time, entanglement, eigenstate_entropy: mean(&ent) })
}

/// Disorder-averaged localisation markers for the random-field Heisenberg
/// chain in the zero-magnetisation sector. Realization `i` at disorder index
/// `k` uses stream `k * realizations + i` of `seed`.
pub fn mbl_report(params: &MblParams) -> Result<MblReport, DiagnosticsError> {
    if params.realizations < 20 {
        return Err(DiagnosticsError::BadParameter(format!("{} realizations; at least 20 needed", params.realizations)));
    }
    if params.n % 2 != 0 || params.n < 4 {
        return Err(DiagnosticsError::BadParameter(format!("chain length {} must be even and at least 4", params.n)));
    }
    if !params.times.is_empty() {
        check_grid(&params.times)?;
        if params.times[0] <= 0.0 {
            return Err(DiagnosticsError::BadParameter("entanglement times must be positive for the log fit".into()));
        }
    }
    let sector = SectorBasis::half_filling(params.n);
    let mut rows = Vec::with_capacity(params.disorder.len());
    for (k, &w) in params.disorder.iter().enumerate() {
        let base = (k * params.realizations) as u64;
        let reals: Vec<Realization> = (0..params.realizations)
            .into_par_iter()
            .map(|i| mbl_realization(params, w, base + i as u64, &sector))
            .collect::<Result<_, _>>()?;
        let (mean_r, r_stderr) = mean_and_stderr(&reals.iter().map(|r| r.r).collect::<Vec<_>>());
        let m = reals.len() as f64;
        let imbalance_infty = reals.iter().map(|r| r.imbalance).sum::<f64>() / m;
        let entanglement: Vec<f64> = (0..params.times.len()).map(|t| reals.iter().map(|r| r.entanglement[t]).sum::<f64>() / m).collect();
        let (ent_fit_log_r2, ent_fit_lin_r2, residual_ratio) = if params.times.len() >= 3 {
            let logt: Vec<f64> = params.times.iter().map(|t| t.ln()).collect();
            let (r2_log, res_log) = fit_quality(&logt, &entanglement);
            let (r2_lin, res_lin) = fit_quality(&params.times, &entanglement);
            (r2_log, r2_lin, res_lin / res_log.max(f64::MIN_POSITIVE))
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        let eigenstate_entropy_mean = reals.iter().map(|r| r.eigenstate_entropy).sum::<f64>() / m;
        rows.push(MblRow { w, mean_r, r_stderr, imbalance_infty, entanglement, ent_fit_log_r2, ent_fit_lin_r2, residual_ratio, eigenstate_entropy_mean });
    }
    let crossover = ratio_crossover(&rows);
    Ok(MblReport { params: params.clone(), rows, crossover })
}

/// Linear interpolation of the disorder strength where `mean_r` first falls
/// through `(R_GOE + R_POISSON) / 2`.
fn ratio_crossover(rows: &[MblRow]) -> Option<f64> {
    let target = 0.5 * (R_GOE + R_POISSON);
    rows.windows(2).find_map(|p| {
        let (a, b) = (&p[0], &p[1]);
        if (a.mean_r - target) * (b.mean_r - target) <= 0.0 && a.mean_r != b.mean_r {
            Some(a.w + (target - a.mean_r) * (b.w - a.w) / (b.mean_r - a.mean_r))
        } else {
            None
        }
    })
}

/// MBL table as CSV with a `#` metadata header.
pub fn write_mbl_csv<W: Write>(f: &mut W, report: &MblReport) -> std::io::Result<()> {
    let p = &report.params;
    writeln!(f, "# n={} realizations={} seed={}", p.n, p.realizations, p.seed)?;
    writeln!(f, "W,mean_r,imbalance_infty,ent_fit_log_r2,ent_fit_lin_r2,eigenstate_entropy_mean")?;
    for r in &report.rows {
        writeln!(
            f,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.w, r.mean_r, r.imbalance_infty, r.ent_fit_log_r2, r.ent_fit_lin_r2, r.eigenstate_entropy_mean
        )?;
    }
    Ok(())
}
