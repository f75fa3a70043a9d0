//! Correlations in thermal states: the generalised covariance, the truncation
//! formula and the high-temperature clustering and locality bounds.
//!
//! Thermal quantities are computed from a borrowed [`SpectralDecomposition`]
//! so that one diagonalisation serves a whole sweep in `beta`. Observables
//! are handled as sparse matrices, which keeps a covariance at `d = 4096` to
//! a few passes over the dense powers of the state.

use std::io::Write;

use faer::{c64, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::linear_fit;
use crate::lattice::{
    graph_distance, partial_trace_dims, trace_distance, LatticeError, LocalHamiltonian, LocalOperator, Operator, SiteGraph,
    SparseOperator, State,
};
use crate::spectral::{diagonalize, SpectralDecomposition, SpectralError, DEFAULT_DEGENERACY_TOL};

/// Eigenvalue floor applied to a general state before taking powers.
pub const EIGENVALUE_FLOOR: f64 = 1e-14;

/// Absolute slack on the clustering and locality comparisons.
pub const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CorrelationError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("tau = {0} is outside [0, 1]")]
    BadTau(f64),
    #[error("observable support {support:?} is not inside the region {region:?}")]
    SupportOutsideRegion { support: Vec<usize>, region: Vec<usize> },
    #[error("|beta| = {beta} is not below the critical value {beta_star}")]
    AboveCritical { beta: f64, beta_star: f64 },
    #[error("no certified growth constant for this interaction graph; supply alpha explicitly")]
    UnsupportedLattice,
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

fn check_tau(tau: f64) -> Result<(), CorrelationError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(CorrelationError::BadTau(tau));
    }
    Ok(())
}

/// `sum_j w_j |v_j><v_j|` without copying the eigenvectors.
fn weighted_outer(spec: &SpectralDecomposition, w: &[f64]) -> Operator {
    let d = spec.dim();
    if let Some(u) = spec.real_vectors() {
        let scaled = Mat::from_fn(d, d, |i, j| u[(i, j)] * w[j]);
        Operator::from_real_mat((&scaled * u.transpose()).as_ref())
    } else {
        let v = spec.vectors();
        let scaled = Mat::from_fn(d, d, |i, j| v[(i, j)] * w[j]);
        Operator::from_mat(&scaled * v.adjoint())
    }
}

/// `Tr(P A Q B)` from `Y = A Q` and `Z = B P`.
fn trace_of_products(y: &Operator, z: &Operator) -> c64 {
    let (ym, zm) = (y.mat(), z.mat());
    let d = y.dim();
    let mut acc = c64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            acc += ym[(i, j)] * zm[(j, i)];
        }
    }
    acc
}

/// Result of [`generalized_covariance`] on an arbitrary state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneralizedCovariance {
    pub value: c64,
    /// Total amount added to eigenvalues below [`EIGENVALUE_FLOOR`].
    pub regularization: f64,
}

/// `Tr(rho^tau A rho^(1-tau) B) - Tr(rho A) Tr(rho B)`.
///
/// The value is complex in general; it is real for `tau = 1/2` and for
/// commuting `A`, `B`.
pub fn generalized_covariance(rho: &Operator, a: &Operator, b: &Operator, tau: f64) -> Result<GeneralizedCovariance, CorrelationError> {
    check_tau(tau)?;
    let d = rho.dim();
    for o in [a, b] {
        if o.dim() != d {
            return Err(LatticeError::DimensionMismatch { expected: d, found: o.dim() }.into());
        }
    }
    let (value, regularization) = crate::lattice::covariance(rho, a, b, tau, EIGENVALUE_FLOOR)?;
    Ok(GeneralizedCovariance { value, regularization })
}

/// `Tr(rho A B) - Tr(rho A) Tr(rho B)`
pub fn covariance(rho: &Operator, a: &Operator, b: &Operator) -> c64 {
    rho.matmul(a).matmul(b).trace() - rho.trace_product(a) * rho.trace_product(b)
}

/// Gibbs state `g(beta)` in the eigenbasis of a borrowed decomposition.
#[derive(Clone, Debug)]
pub struct ThermalState<'a> {
    spec: &'a SpectralDecomposition,
    beta: f64,
    log_weights: Vec<f64>,
}

impl<'a> ThermalState<'a> {
    pub fn new(spec: &'a SpectralDecomposition, beta: f64) -> Self {
        let e = spec.eigenvalues();
        let m = e.iter().map(|&x| -beta * x).fold(f64::NEG_INFINITY, f64::max);
        let lz = m + e.iter().map(|&x| (-beta * x - m).exp()).sum::<f64>().ln();
        Self { spec, beta, log_weights: e.iter().map(|&x| -beta * x - lz).collect() }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        self.spec
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    /// `g(beta)^s`; exact identity at `s = 0`.
    pub fn power(&self, s: f64) -> Operator {
        if s == 0.0 {
            return Operator::identity(self.spec.dim());
        }
        let w: Vec<f64> = self.log_weights.iter().map(|l| (s * l).exp()).collect();
        weighted_outer(self.spec, &w)
    }

    pub fn density(&self) -> Operator {
        self.power(1.0)
    }

    pub fn expectation(&self, a: &SparseOperator) -> c64 {
        self.log_weights
            .iter()
            .enumerate()
            .filter(|(_, l)| l.exp() > 0.0)
            .map(|(j, l)| a.expectation(&self.spec.vector(j)) * l.exp())
            .sum()
    }

    /// Reduced state on `keep`, accumulated eigenvector by eigenvector.
    pub fn reduced(&self, dims: &[usize], keep: &[usize]) -> Operator {
        let mut acc: Option<Operator> = None;
        for (j, l) in self.log_weights.iter().enumerate() {
            let w = l.exp();
            if w == 0.0 {
                continue;
            }
            let r = partial_trace_dims(dims, &State::Pure(self.spec.vector(j)), keep).scale_real(w);
            acc = Some(match acc {
                None => r,
                Some(mut a) => {
                    a += &r;
                    a
                }
            });
        }
        acc.unwrap_or_else(|| Operator::zeros(keep.iter().map(|&s| dims[s]).product()))
    }

    /// Powers needed for repeated covariances at one `tau`.
    pub fn kernel(&self, tau: f64) -> Result<CovarianceKernel<'_, 'a>, CorrelationError> {
        check_tau(tau)?;
        let p_tau = self.power(tau);
        let p_rest = if tau == 0.5 { None } else { Some(self.power(1.0 - tau)) };
        Ok(CovarianceKernel { state: self, p_tau, p_rest })
    }

    /// Generalised covariance of two sparse observables.
    pub fn covariance(&self, a: &SparseOperator, b: &SparseOperator, tau: f64) -> Result<c64, CorrelationError> {
        Ok(self.kernel(tau)?.covariance(a, b))
    }
}

/// `g^tau` and `g^(1 - tau)` for one thermal state.
pub struct CovarianceKernel<'s, 'a> {
    state: &'s ThermalState<'a>,
    p_tau: Operator,
    p_rest: Option<Operator>,
}

impl CovarianceKernel<'_, '_> {
    pub fn covariance(&self, a: &SparseOperator, b: &SparseOperator) -> c64 {
        let p_rest = self.p_rest.as_ref().unwrap_or(&self.p_tau);
        let y = a.mul_dense(p_rest);
        let z = b.mul_dense(&self.p_tau);
        trace_of_products(&y, &z) - self.state.expectation(a) * self.state.expectation(b)
    }
}

/// Nodes and weights of Gauss-Legendre quadrature mapped to `[0, 1]`.
pub fn gauss_legendre_unit(points: usize) -> Result<Vec<(f64, f64)>, CorrelationError> {
    let rule = gauss_quad::GaussLegendre::new(points).map_err(|e| CorrelationError::BadParameter(e.to_string()))?;
    Ok(rule.as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    /// `Tr(A g[H_B]) - Tr(A g[H])`
    pub lhs: f64,
    /// `beta` times the quadrature of the covariance with the boundary terms
    pub rhs: f64,
    pub residual: f64,
    pub quad_points: usize,
    pub boundary_edges: usize,
    pub beta: f64,
}

/// Truncation formula on the full space: the change of `<A>` when the edges
/// crossing the boundary of `region` are removed, against its covariance
/// representation along `H(s) = H - (1 - s) V`.
pub fn truncation_check(
    h: &LocalHamiltonian,
    region: &[usize],
    a: &LocalOperator,
    beta: f64,
    quad_points: usize,
) -> Result<TruncationReport, CorrelationError> {
    let g = h.graph();
    let r = g.check_region(region)?;
    if a.sites.iter().any(|s| !r.contains(s)) {
        return Err(CorrelationError::SupportOutsideRegion { support: a.sites.clone(), region: r });
    }
    if quad_points == 0 {
        return Err(CorrelationError::BadParameter("quad_points must be positive".into()));
    }
    let full = h.assemble()?;
    let h_b = h.restricted(&r)?.assemble()?;
    let boundary = h.boundary_terms(&r)?;
    let v = boundary.assemble()?;
    let a_full = a.embed(g)?;
    let expect = |m: &Operator| -> Result<f64, CorrelationError> {
        let spec = diagonalize(m, DEFAULT_DEGENERACY_TOL)?;
        let w = ThermalState::new(&spec, beta).weights();
        let ap = spec.to_eigenbasis(&a_full);
        Ok((0..w.len()).map(|j| w[j] * ap.get(j, j).re).sum())
    };
    let lhs = expect(&h_b)? - expect(&full)?;

    let nodes = gauss_legendre_unit(quad_points)?;
    let n_boundary = g.boundary_edges(&r).len();
    let per_s: Vec<Result<f64, CorrelationError>> = nodes
        .par_iter()
        .map(|&(s, ws)| {
            let hs = &full - &v.scale_real(1.0 - s);
            let spec = diagonalize(&hs, DEFAULT_DEGENERACY_TOL)?;
            let state = ThermalState::new(&spec, beta);
            let l = &state.log_weights;
            let ap = spec.to_eigenbasis(&a_full);
            let vp = spec.to_eigenbasis(&v);
            let d = spec.dim();
            let (am, vm) = (ap.mat(), vp.mat());
            let mean_a: f64 = (0..d).map(|j| l[j].exp() * am[(j, j)].re).sum();
            let mean_v: f64 = (0..d).map(|j| l[j].exp() * vm[(j, j)].re).sum();
            let mut inner = 0.0;
            for &(tau, wt) in &nodes {
                let mut acc = c64::new(0.0, 0.0);
                for k in 0..d {
                    for j in 0..d {
                        acc += am[(j, k)] * vm[(k, j)] * (tau * l[j] + (1.0 - tau) * l[k]).exp();
                    }
                }
                inner += wt * (acc.re - mean_a * mean_v);
            }
            Ok(ws * inner)
        })
        .collect();
    let mut rhs = 0.0;
    for x in per_s {
        rhs += x?;
    }
    rhs *= beta;
    Ok(TruncationReport { lhs, rhs, residual: (lhs - rhs).abs(), quad_points, boundary_edges: n_boundary, beta })
}

/// Interaction graphs with a certified growth constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LatticeFamily {
    Chain,
    /// Nearest-neighbour cubic lattice in this many dimensions.
    Cubic(usize),
    Declared(f64),
}

impl LatticeFamily {
    /// Recognises nearest-neighbour chains and rings with pair edges only.
    pub fn detect(graph: &SiteGraph) -> Result<Self, CorrelationError> {
        let n = graph.n_sites();
        let mut pairs: Vec<Vec<usize>> = graph.edges().to_vec();
        for e in &mut pairs {
            e.sort_unstable();
        }
        let chain = pairs.iter().all(|e| e.len() == 2 && (e[1] == e[0] + 1 || (e[0] == 0 && e[1] == n - 1)));
        if chain && !pairs.is_empty() {
            Ok(LatticeFamily::Chain)
        } else {
            Err(CorrelationError::UnsupportedLattice)
        }
    }
}

/// Upper bound on the animal growth constant, `2 D e` for cubic lattices.
pub fn growth_constant_bound(family: LatticeFamily) -> Result<f64, CorrelationError> {
    match family {
        LatticeFamily::Chain => Ok(2.0 * std::f64::consts::E),
        LatticeFamily::Cubic(0) => Err(CorrelationError::BadParameter("lattice dimension must be positive".into())),
        LatticeFamily::Cubic(dim) => Ok(2.0 * dim as f64 * std::f64::consts::E),
        LatticeFamily::Declared(a) if a >= 1.0 && a.is_finite() => Ok(a),
        LatticeFamily::Declared(a) => Err(CorrelationError::BadParameter(format!("growth constant {a} below 1"))),
    }
}

/// `ln((1 + sqrt(1 + 4/alpha))/2) / (2 J)`
pub fn critical_beta(j: f64, alpha: f64) -> f64 {
    ((1.0 + (1.0 + 4.0 / alpha).sqrt()) / 2.0).ln() / (2.0 * j)
}

/// `alpha e^(2|beta|J) (e^(2|beta|J) - 1)`; equals 1 at the critical beta.
pub fn correlation_length_argument(beta: f64, j: f64, alpha: f64) -> f64 {
    let x = (2.0 * beta.abs() * j).exp();
    alpha * x * (x - 1.0)
}

/// `|1 / ln(alpha e^(2|beta|J) (e^(2|beta|J) - 1))|`, zero at `beta = 0`.
pub fn correlation_length(beta: f64, j: f64, alpha: f64) -> Result<f64, CorrelationError> {
    let beta_star = critical_beta(j, alpha);
    if beta.abs() >= beta_star {
        return Err(CorrelationError::AboveCritical { beta: beta.abs(), beta_star });
    }
    Ok((1.0 / correlation_length_argument(beta, j, alpha).ln()).abs())
}

/// `J`, `alpha` and `beta` of a high-temperature check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub j: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ClusterParams {
    pub fn new(j: f64, alpha: f64, beta: f64) -> Result<Self, CorrelationError> {
        if !(j > 0.0) || !(alpha >= 1.0) || !beta.is_finite() {
            return Err(CorrelationError::BadParameter(format!("J = {j}, alpha = {alpha}, beta = {beta}")));
        }
        Ok(Self { j, alpha, beta })
    }

    pub fn critical_beta(&self) -> f64 {
        critical_beta(self.j, self.alpha)
    }

    pub fn correlation_length(&self) -> Result<f64, CorrelationError> {
        correlation_length(self.beta, self.j, self.alpha)
    }
}

/// `e^(-dist/xi)` with the `xi = 0` limit.
fn decay(dist: f64, xi: f64) -> f64 {
    if xi == 0.0 {
        if dist == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (-dist / xi).exp()
    }
}

/// `1 - e^(-1/xi)`
fn tail(xi: f64) -> f64 {
    if xi == 0.0 {
        1.0
    } else {
        1.0 - (-1.0 / xi).exp()
    }
}

/// Minimal distance `xi |ln(ln 3 (1 - e^(-1/xi)) / m)|` for the bounds to
/// apply.
pub fn distance_threshold(xi: f64, m: usize) -> f64 {
    if xi == 0.0 || m == 0 {
        return 0.0;
    }
    xi * (3f64.ln() * tail(xi) / m as f64).ln().abs()
}

/// Edges overlapping the support of an observable.
pub fn observable_boundary(graph: &SiteGraph, support: &[usize]) -> usize {
    graph.edges_touching(support).len()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    /// `None` when no chain of edges connects the supports.
    pub distance: Option<usize>,
    pub covariance: f64,
    pub bound: f64,
    pub threshold: f64,
    /// Distance condition met, so the bound is asserted.
    pub qualifies: bool,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub params: ClusterParams,
    pub beta_star: f64,
    pub xi: f64,
    pub tau: f64,
    pub rows: Vec<PairRow>,
    /// `-1/slope` of `ln|cov|` against distance.
    pub fitted_decay_length: Option<f64>,
    pub asserted: usize,
    pub passed: bool,
}

fn boundary_overlap_count(graph: &SiteGraph, region: &[usize]) -> usize {
    graph.boundary_edges(region).len()
}

/// Clustering bound for each pair at one `beta`, reusing `spec` of `h`.
pub fn clustering_check(
    h: &LocalHamiltonian,
    spec: &SpectralDecomposition,
    beta: f64,
    tau: f64,
    pairs: &[(LocalOperator, LocalOperator)],
    alpha: f64,
) -> Result<ClusteringReport, CorrelationError> {
    let g = h.graph();
    let params = ClusterParams::new(h.interaction_strength()?, alpha, beta)?;
    let beta_star = params.critical_beta();
    let xi = params.correlation_length()?;
    let state = ThermalState::new(spec, beta);
    let kernel = state.kernel(tau)?;
    let mut rows = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let m = observable_boundary(g, &a.sites).min(observable_boundary(g, &b.sites));
        let norms = a.op.operator_norm()? * b.op.operator_norm()?;
        let cov = kernel.covariance(&a.embed_sparse(g)?, &b.embed_sparse(g)?).norm();
        let distance = graph_distance(g, &a.sites, &b.sites);
        let threshold = distance_threshold(xi, m);
        let bound = match distance {
            Some(dd) => 4.0 * m as f64 * norms / (3f64.ln() * tail(xi)) * decay(dd as f64, xi),
            None => 0.0,
        };
        let qualifies = distance.is_none_or(|dd| dd as f64 >= threshold);
        rows.push(PairRow { distance, covariance: cov, bound, threshold, qualifies, satisfied: cov <= bound + BOUND_SLACK });
    }
    let fit: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.distance.filter(|_| r.covariance > 1e-14).map(|dd| (dd as f64, r.covariance.ln())))
        .collect();
    let distinct = {
        let mut ds: Vec<f64> = fit.iter().map(|p| p.0).collect();
        ds.dedup();
        ds.len()
    };
    let fitted_decay_length = if distinct >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = fit.into_iter().unzip();
        let (slope, _) = linear_fit(&x, &y);
        (slope < 0.0).then(|| -1.0 / slope)
    } else {
        None
    };
    let asserted = rows.iter().filter(|r| r.qualifies).count();
    let passed = rows.iter().filter(|r| r.qualifies).all(|r| r.satisfied);
    Ok(ClusteringReport { params, beta_star, xi, tau, rows, fitted_decay_length, asserted, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub params: ClusterParams,
    pub beta_star: f64,
    pub xi: f64,
    /// `D(g^S[H], g^S[H_B])`
    pub lhs: f64,
    pub rhs: f64,
    /// `dist(S, B_boundary)`; `None` when `B` has no boundary edges.
    pub distance: Option<usize>,
    pub threshold: f64,
    pub s_boundary: usize,
    pub b_boundary: usize,
    pub qualifies: bool,
    pub satisfied: bool,
}

/// Universal locality: reduced thermal states on `S` of `H` and of `H_B`.
pub fn universal_locality_check(
    h: &LocalHamiltonian,
    spec: &SpectralDecomposition,
    beta: f64,
    s_region: &[usize],
    b_region: &[usize],
    alpha: f64,
) -> Result<LocalityReport, CorrelationError> {
    let g = h.graph();
    let s = g.check_region(s_region)?;
    let b = g.check_region(b_region)?;
    if s.iter().any(|x| !b.contains(x)) {
        return Err(CorrelationError::SupportOutsideRegion { support: s, region: b });
    }
    let params = ClusterParams::new(h.interaction_strength()?, alpha, beta)?;
    let beta_star = params.critical_beta();
    let xi = params.correlation_length()?;

    let dims = g.local_dims();
    let full = ThermalState::new(spec, beta).reduced(dims, &s);
    let hb = h.truncated(&b)?;
    let spec_b = diagonalize(&hb.assemble()?, DEFAULT_DEGENERACY_TOL)?;
    let keep: Vec<usize> = s.iter().map(|x| b.iter().position(|y| y == x).unwrap()).collect();
    let truncated = ThermalState::new(&spec_b, beta).reduced(hb.graph().local_dims(), &keep);
    let lhs = trace_distance(&full, &truncated)?;

    let b_edges = g.boundary_edges(&b);
    let s_boundary = boundary_overlap_count(g, &s);
    let distance = if b_edges.is_empty() { None } else { graph_distance(g, &s, &g.edge_sites(&b_edges)) };
    let threshold = distance_threshold(xi, s_boundary);
    let v = 4.0 * s_boundary as f64 * b_edges.len() as f64 / 3f64.ln();
    let rhs = match distance {
        Some(dd) => v * beta.abs() * params.j / tail(xi) * decay(dd as f64, xi),
        None => 0.0,
    };
    let qualifies = distance.is_none_or(|dd| dd as f64 >= threshold);
    Ok(LocalityReport {
        params,
        beta_star,
        xi,
        lhs,
        rhs,
        distance,
        threshold,
        s_boundary,
        b_boundary: b_edges.len(),
        qualifies,
        satisfied: lhs <= rhs + BOUND_SLACK,
    })
}

/// Pair sweep as `dist,cov,bound,satisfied`; disconnected pairs get `inf`.
pub fn write_pair_sweep_csv<W: Write>(f: &mut W, report: &ClusteringReport) -> std::io::Result<()> {
    writeln!(f, "# beta={:.16e} tau={:.16e} xi={:.16e}", report.params.beta, report.tau, report.xi)?;
    writeln!(f, "dist,cov,bound,satisfied")?;
    for r in &report.rows {
        let d = r.distance.map_or("inf".to_string(), |x| x.to_string());
        writeln!(f, "{},{:.16e},{:.16e},{}", d, r.covariance, r.bound, r.satisfied)?;
    }
    Ok(())
}
