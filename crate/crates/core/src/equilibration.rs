//! Finite-time equilibration bounds for observables, measurements and
//! low-rank projectors.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    dephase, dephased_reduced, expectation_trajectory, finite_time_average, log_grid, reduced_trajectory,
    uniform_grid, DynamicsError, Trajectory,
};
use crate::lattice::{restricted_distinguishability, trace_distance, Operator, PovmSet, State};
use crate::spectral::{max_in_window, sorted_gaps, SpectralDecomposition};

/// Slack allowed when comparing a measured left side against a bound.
pub const BOUND_SLACK: f64 = 1e-9;
/// Minimum number of quadrature points for time averages.
pub const MIN_GRID_POINTS: usize = 2048;
/// Above this dimension the exact infinite-time value is not attached.
pub const EXACT_ORACLE_MAX_DIM: usize = 1024;
const MAX_GRID_POINTS: usize = 1 << 17;
const EPSILON_GRID: usize = 64;

/// Prefactor of the low-rank bound, `5 pi / (4 sqrt(1 - 1/e)) + 1`.
pub fn low_rank_constant() -> f64 {
    5.0 * std::f64::consts::PI / (4.0 * (1.0 - (-1.0f64).exp()).sqrt()) + 1.0
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EquilibrationError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("observation time must be positive and finite, got {0}")]
    BadTime(f64),
    #[error("energy resolution must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("the low-rank bound needs a non-degenerate Hamiltonian ({levels} levels for dimension {dim})")]
    DegenerateSpectrum { levels: usize, dim: usize },
    #[error("operator is not a projector (defect {defect:e})")]
    NotProjector { defect: f64 },
    #[error("measurement acts on dimension {found}, expected {expected}")]
    MeasurementDimension { expected: usize, found: usize },
}

impl From<crate::lattice::LatticeError> for EquilibrationError {
    fn from(e: crate::lattice::LatticeError) -> Self {
        EquilibrationError::Dynamics(e.into())
    }
}

impl From<crate::spectral::SpectralError> for EquilibrationError {
    fn from(e: crate::spectral::SpectralError) -> Self {
        EquilibrationError::Dynamics(e.into())
    }
}

/// Both branches of the occupation factor `g(p) = min(sum p^2, 3 p_(2))`,
/// with `p_(2)` the second-largest population. With a single level only
/// the first branch exists and `three_second_largest` is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationFactor {
    pub sum_squares: f64,
    pub three_second_largest: Option<f64>,
    pub value: f64,
}

pub fn g_occupations(p: &[f64]) -> OccupationFactor {
    let sum_squares: f64 = p.iter().map(|x| x * x).sum();
    let mut s: Vec<f64> = p.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let three_second_largest = s.get(1).map(|x| 3.0 * x);
    let value = three_second_largest.map_or(sum_squares, |t| sum_squares.min(t));
    OccupationFactor { sum_squares, three_second_largest, value }
}

/// `1 / sum p_k^2`
pub fn effective_dimension(p: &[f64]) -> f64 {
    1.0 / p.iter().map(|x| x * x).sum::<f64>()
}

/// Both branches of `h(M) = min(|distinct elements| / 4, dim(support) / 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementFactor {
    pub distinct_elements: usize,
    pub total_outcomes: usize,
    pub support_dim: usize,
    pub value: f64,
}

pub fn h_povm(m: &PovmSet) -> MeasurementFactor {
    let distinct = m.distinct_elements();
    let dim = m.support_dim();
    MeasurementFactor {
        distinct_elements: distinct,
        total_outcomes: m.total_outcomes(),
        support_dim: dim,
        value: (distinct as f64 / 4.0).min(dim as f64 / 2.0),
    }
}

/// `1 + 8 log2(d') / (eps T)`
pub fn finite_time_factor(epsilon: f64, t_final: f64, n_levels: usize) -> f64 {
    1.0 + 8.0 * (n_levels as f64).log2() / (epsilon * t_final)
}

/// Resolution chosen for the bound and the gap count it produces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub epsilon: f64,
    pub gap_count: usize,
    pub finite_time_factor: f64,
}

/// Sorted gaps of a spectrum, reused across resolutions.
pub struct GapTable {
    gaps: Vec<f64>,
    n_levels: usize,
    range: f64,
}

impl GapTable {
    pub fn new(spec: &SpectralDecomposition) -> Self {
        Self { gaps: sorted_gaps(spec.levels()), n_levels: spec.n_levels(), range: spec.range() }
    }

    pub fn count(&self, eps: f64) -> usize {
        max_in_window(&self.gaps, eps)
    }

    pub fn at(&self, eps: f64, t_final: f64) -> Resolution {
        Resolution { epsilon: eps, gap_count: self.count(eps), finite_time_factor: finite_time_factor(eps, t_final, self.n_levels) }
    }

    /// Resolution minimising `N(eps) f(eps T)` over a logarithmic grid from
    /// `1e-8` to `2` times the spectral range.
    pub fn tightest(&self, t_final: f64) -> Resolution {
        let scale = if self.range > 0.0 { self.range } else { 1.0 };
        log_grid(1e-8 * scale, 2.0 * scale, EPSILON_GRID)
            .into_iter()
            .map(|e| self.at(e, t_final))
            .min_by(|a, b| {
                let x = a.gap_count as f64 * a.finite_time_factor;
                let y = b.gap_count as f64 * b.finite_time_factor;
                x.total_cmp(&y)
            })
            .expect("non-empty grid")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquilibrationBoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub margin: f64,
    pub t_final: f64,
    pub grid_points: usize,
    pub n_levels: usize,
    pub resolution: Resolution,
    pub occupation: OccupationFactor,
    pub effective_dimension: f64,
    pub operator_norm: Option<f64>,
    pub measurement: Option<MeasurementFactor>,
    /// Exact `T -> infinity` value of the left side, when cheap enough.
    pub lhs_infinite_time: Option<f64>,
}

impl EquilibrationBoundReport {
    fn finish(mut self) -> Self {
        self.margin = self.rhs - self.lhs;
        self.satisfied = self.lhs <= self.rhs + BOUND_SLACK;
        self
    }
}

/// Quadrature grid on `[0, T]`: at least `MIN_GRID_POINTS`, more when needed
/// to sample the fastest oscillation of a squared signal.
pub fn averaging_grid(spec: &SpectralDecomposition, t_final: f64) -> Vec<f64> {
    let need = (2.0 * t_final * 2.0 * spec.range() / std::f64::consts::PI).ceil() as usize + 1;
    uniform_grid(0.0, t_final, need.clamp(MIN_GRID_POINTS, MAX_GRID_POINTS))
}

fn check_time(t: f64) -> Result<(), EquilibrationError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(EquilibrationError::BadTime(t));
    }
    Ok(())
}

fn resolve(spec: &SpectralDecomposition, eps: Option<f64>, t_final: f64) -> Result<Resolution, EquilibrationError> {
    let table = GapTable::new(spec);
    match eps {
        Some(e) if !(e > 0.0 && e.is_finite()) => Err(EquilibrationError::BadEpsilon(e)),
        Some(e) => Ok(table.at(e, t_final)),
        None => Ok(table.tightest(t_final)),
    }
}

/// Time-averaged squared deviation of `<A>` from its dephased value against
/// `||A||^2 N(eps) f(eps T) g(p)`. With `eps = None` the resolution is
/// optimised.
pub fn equilibration_bound_observable(
    a: &Operator,
    state: &State,
    spec: &SpectralDecomposition,
    eps: Option<f64>,
    t_final: f64,
) -> Result<EquilibrationBoundReport, EquilibrationError> {
    check_time(t_final)?;
    let res = resolve(spec, eps, t_final)?;
    let p = spec.populations(state)?;
    let occ = g_occupations(&p);
    let norm = a.operator_norm()?;
    let omega = dephase(state, spec)?;
    let mean = omega.trace_product(a).re;
    let times = averaging_grid(spec, t_final);
    let traj = expectation_trajectory(a, state, spec, &times)?;
    let sq = Trajectory::new(times, traj.values.iter().map(|v| (v - mean).powi(2)).collect())?;
    let lhs = finite_time_average(&sq);
    let exact = if spec.dim() <= EXACT_ORACLE_MAX_DIM {
        Some(crate::dynamics::infinite_time_avg_sq_deviation(a, state, spec)?)
    } else {
        None
    };
    let rhs = norm * norm * res.gap_count as f64 * res.finite_time_factor * occ.value;
    Ok(EquilibrationBoundReport {
        lhs,
        rhs,
        satisfied: false,
        margin: 0.0,
        t_final,
        grid_points: sq.len(),
        n_levels: spec.n_levels(),
        resolution: res,
        occupation: occ,
        effective_dimension: effective_dimension(&p),
        operator_norm: Some(norm),
        measurement: None,
        lhs_infinite_time: exact,
    }
    .finish())
}

/// Time-averaged `D_M(rho(t), omega)` against `h(M) sqrt(N f g)`.
///
/// When the measurement set records its sites, states are reduced to them
/// first; `dims` gives the local dimensions of the full lattice.
pub fn equilibration_bound_povm(
    m: &PovmSet,
    state: &State,
    spec: &SpectralDecomposition,
    dims: &[usize],
    eps: Option<f64>,
    t_final: f64,
) -> Result<EquilibrationBoundReport, EquilibrationError> {
    check_time(t_final)?;
    let res = resolve(spec, eps, t_final)?;
    let p = spec.populations(state)?;
    let occ = g_occupations(&p);
    let hm = h_povm(m);
    let times = averaging_grid(spec, t_final);
    let keep: Vec<usize> = match m.sites() {
        Some(s) => s.to_vec(),
        None => (0..dims.len()).collect(),
    };
    let d_keep: usize = keep.iter().map(|&s| dims[s]).product();
    if d_keep != m.support_dim() {
        return Err(EquilibrationError::MeasurementDimension { expected: d_keep, found: m.support_dim() });
    }
    let omega_s = dephased_reduced(state, spec, dims, &keep)?;
    let traj = reduced_trajectory(state, spec, dims, &keep, &times)?;
    let mut vals = Vec::with_capacity(times.len());
    for r in &traj.values {
        vals.push(restricted_distinguishability(m, r, &omega_s)?);
    }
    let lhs = finite_time_average(&Trajectory::new(times, vals)?);
    let rhs = hm.value * (res.gap_count as f64 * res.finite_time_factor * occ.value).sqrt();
    Ok(EquilibrationBoundReport {
        lhs,
        rhs,
        satisfied: false,
        margin: 0.0,
        t_final,
        grid_points: traj.len(),
        n_levels: spec.n_levels(),
        resolution: res,
        occupation: occ,
        effective_dimension: effective_dimension(&p),
        operator_norm: None,
        measurement: Some(hm),
        lhs_infinite_time: None,
    }
    .finish())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LowRankReport {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub rank: usize,
    /// Largest population inside any energy window of width `1/T`.
    pub window_weight: f64,
    pub constant: f64,
    pub t_final: f64,
}

/// `sup_E sum_{E_k in [E, E + width]} p_k` over ascending levels.
pub fn window_population(levels: &[f64], p: &[f64], width: f64) -> f64 {
    let mut best: f64 = 0.0;
    let mut hi = 0;
    let mut acc = 0.0;
    for lo in 0..levels.len() {
        if hi < lo {
            hi = lo;
            acc = 0.0;
        }
        while hi < levels.len() && levels[hi] - levels[lo] <= width {
            acc += p[hi];
            hi += 1;
        }
        best = best.max(acc);
        acc -= p[lo];
    }
    best
}

/// Two-outcome measurement `{P, 1 - P}` with `P` of rank `K`:
/// time-averaged `|Tr P (rho(t) - omega)|` against `C sqrt(eta(1/T) K)`.
pub fn low_rank_equilibration(projector: &Operator, state: &State, spec: &SpectralDecomposition, t_final: f64) -> Result<LowRankReport, EquilibrationError> {
    check_time(t_final)?;
    if !spec.is_nondegenerate() {
        return Err(EquilibrationError::DegenerateSpectrum { levels: spec.n_levels(), dim: spec.dim() });
    }
    let defect = (&projector.matmul(projector) - projector).max_abs().max(projector.hermiticity_defect());
    if defect > 1e-10 {
        return Err(EquilibrationError::NotProjector { defect });
    }
    let rank = projector.trace().re.round() as usize;
    let p = spec.populations(state)?;
    let eta = window_population(spec.levels(), &p, 1.0 / t_final);
    let omega = dephase(state, spec)?;
    let mean = omega.trace_product(projector).re;
    let times = averaging_grid(spec, t_final);
    let traj = expectation_trajectory(projector, state, spec, &times)?;
    let dev = Trajectory::new(times, traj.values.iter().map(|v| (v - mean).abs()).collect())?;
    let lhs = finite_time_average(&dev);
    let constant = low_rank_constant();
    let rhs = constant * (eta * rank as f64).sqrt();
    Ok(LowRankReport { lhs, rhs, satisfied: lhs <= rhs + BOUND_SLACK, rank, window_weight: eta, constant, t_final })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubsystemScan {
    pub distances: Trajectory<f64>,
    pub average: f64,
    /// Fraction of grid times where the distance exceeds twice the average.
    pub fraction_above_twice_average: f64,
}

/// `D(rho^S(t), omega^S)` along a time grid.
pub fn subsystem_equilibration_scan(
    state: &State,
    spec: &SpectralDecomposition,
    dims: &[usize],
    region: &[usize],
    times: &[f64],
) -> Result<SubsystemScan, EquilibrationError> {
    let omega_s = dephased_reduced(state, spec, dims, region)?;
    let traj = reduced_trajectory(state, spec, dims, region, times)?;
    let mut vals = Vec::with_capacity(times.len());
    for r in &traj.values {
        vals.push(trace_distance(r, &omega_s)?);
    }
    let distances = Trajectory::new(times.to_vec(), vals)?;
    let average = finite_time_average(&distances);
    let above = distances.values.iter().filter(|&&v| v > 2.0 * average).count() as f64 / distances.len() as f64;
    Ok(SubsystemScan { distances, average, fraction_above_twice_average: above })
}

/// `1/2 sqrt(N(eps) f(eps T) d_S^2 g(p))`, the subsystem form of the
/// measurement bound.
pub fn subsystem_bound(res: &Resolution, d_s: usize, occ: &OccupationFactor) -> f64 {
    0.5 * (res.gap_count as f64 * res.finite_time_factor * (d_s * d_s) as f64 * occ.value).sqrt()
}

/// `<A>(t) - <A>_omega` on a grid.
pub fn deviation_signal(a: &Operator, state: &State, spec: &SpectralDecomposition, times: &[f64]) -> Result<Vec<f64>, EquilibrationError> {
    let mean = dephase(state, spec)?.trace_product(a).re;
    Ok(expectation_trajectory(a, state, spec, times)?.values.into_iter().map(|v| v - mean).collect())
}
