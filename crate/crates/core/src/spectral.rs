//! Spectral decomposition with degeneracy clustering, gap statistics and
//! level counting.

use std::io::Write;
use std::ops::Range;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::lattice::{HermitianEigen, LatticeError, Operator, State};

pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-10;

/// Columns checked when the full verification would be too costly.
const VERIFY_SAMPLE: usize = 64;
const VERIFY_FULL_MAX_DIM: usize = 1024;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("Hamiltonian is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("eigensolver did not converge (dimension {dim}, norm {norm:e})")]
    NoConvergence { dim: usize, norm: f64 },
    #[error("eigenbasis check failed: {what} residual {residual:e}")]
    VerificationFailed { what: &'static str, residual: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Eigenvalues, eigenvectors and distinct energy levels of a Hermitian
/// matrix.
///
/// Eigenvalues closer than `tolerance` (absolute) are chained into one
/// level whose energy is their mean. Columns of the eigenvector matrix are
/// ordered by eigenvalue, so every level is a contiguous block of columns.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    levels: Vec<f64>,
    starts: Vec<usize>,
    level_of: Vec<usize>,
    vectors: Mat<c64>,
    real_vectors: Option<Mat<f64>>,
    tolerance: f64,
}

/// Groups ascending values into chains whose neighbours differ by at most
/// `abs_tol`. Returns level means and block starts.
pub fn cluster_levels(sorted: &[f64], abs_tol: f64) -> (Vec<f64>, Vec<usize>) {
    let mut levels = Vec::new();
    let mut starts = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let s = i;
        while i + 1 < sorted.len() && sorted[i + 1] - sorted[i] <= abs_tol {
            i += 1;
        }
        i += 1;
        starts.push(s);
        levels.push(sorted[s..i].iter().sum::<f64>() / (i - s) as f64);
    }
    starts.push(sorted.len());
    (levels, starts)
}

fn absolute_tolerance(sorted: &[f64], rel: f64) -> f64 {
    let range = match (sorted.first(), sorted.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    let scale = sorted.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    rel * if range > 0.0 { range } else { scale.max(1.0) }
}

/// Diagonalizes `h`; `tol` is the degeneracy tolerance relative to the
/// spectral range.
pub fn diagonalize(h: &Operator, tol: f64) -> Result<SpectralDecomposition, SpectralError> {
    let defect = h.hermiticity_defect();
    if defect > 1e-12 * h.max_abs().max(1.0) {
        return Err(SpectralError::NotHermitian { defect });
    }
    let HermitianEigen { values, vectors, real_vectors } = h.eigh().map_err(|_| SpectralError::NoConvergence {
        dim: h.dim(),
        norm: h.frobenius_norm(),
    })?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::NoConvergence { dim: h.dim(), norm: h.frobenius_norm() });
    }
    let tolerance = absolute_tolerance(&values, tol);
    let (levels, starts) = cluster_levels(&values, tolerance);
    let mut level_of = vec![0; values.len()];
    for k in 0..levels.len() {
        for j in starts[k]..starts[k + 1] {
            level_of[j] = k;
        }
    }
    let s = SpectralDecomposition { eigenvalues: values, levels, starts, level_of, vectors, real_vectors, tolerance };
    s.verify(h)?;
    Ok(s)
}

/// Decomposition from known eigenpairs, e.g. `U G U^dagger` with `G`
/// diagonal. Eigenvalues must be ascending and the columns orthonormal.
pub fn from_eigenpairs(values: Vec<f64>, vectors: Mat<c64>, tol: f64) -> Result<SpectralDecomposition, SpectralError> {
    let d = values.len();
    if vectors.nrows() != d || vectors.ncols() != d {
        return Err(SpectralError::DimensionMismatch { expected: d, found: vectors.ncols() });
    }
    if values.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(SpectralError::VerificationFailed { what: "ascending eigenvalues", residual: f64::NAN });
    }
    let gram = vectors.adjoint() * &vectors;
    let mut orth: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let want = if i == j { 1.0 } else { 0.0 };
            orth = orth.max((gram[(i, j)] - c64::new(want, 0.0)).norm());
        }
    }
    if orth > 1e-10 {
        return Err(SpectralError::VerificationFailed { what: "orthonormality", residual: orth });
    }
    let tolerance = absolute_tolerance(&values, tol);
    let (levels, starts) = cluster_levels(&values, tolerance);
    let mut level_of = vec![0; d];
    for k in 0..levels.len() {
        for j in starts[k]..starts[k + 1] {
            level_of[j] = k;
        }
    }
    let real_vectors = if (0..d).all(|j| (0..d).all(|i| vectors[(i, j)].im == 0.0)) {
        Some(Mat::from_fn(d, d, |i, j| vectors[(i, j)].re))
    } else {
        None
    };
    Ok(SpectralDecomposition { eigenvalues: values, levels, starts, level_of, vectors, real_vectors, tolerance })
}

/// Eigenvalues only, ascending.
pub fn eigenvalues(h: &Operator) -> Result<Vec<f64>, SpectralError> {
    h.eigvalsh().map_err(|_| SpectralError::NoConvergence { dim: h.dim(), norm: h.frobenius_norm() })
}

impl SpectralDecomposition {
    /// Orthonormality of the eigenvectors (which makes the level projectors
    /// complete and mutually orthogonal) and the eigen-equation residual.
    /// Large matrices are checked on an evenly spaced sample of columns.
    fn verify(&self, h: &Operator) -> Result<(), SpectralError> {
        let d = self.dim();
        if d == 0 {
            return Ok(());
        }
        let cols: Vec<usize> = if d <= VERIFY_FULL_MAX_DIM {
            (0..d).collect()
        } else {
            (0..VERIFY_SAMPLE).map(|k| k * (d - 1) / (VERIFY_SAMPLE - 1)).collect()
        };
        let v = &self.vectors;
        let vs = Mat::from_fn(d, cols.len(), |i, k| v[(i, cols[k])]);
        let gram = vs.adjoint() * v;
        let mut orth: f64 = 0.0;
        for k in 0..cols.len() {
            for j in 0..d {
                let want = if j == cols[k] { 1.0 } else { 0.0 };
                orth = orth.max((gram[(k, j)] - c64::new(want, 0.0)).norm());
            }
        }
        if orth > 1e-10 {
            return Err(SpectralError::VerificationFailed { what: "orthonormality", residual: orth });
        }
        let hv = h.mat() * &vs;
        let scale = self.eigenvalues.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let mut res: f64 = 0.0;
        for (k, &j) in cols.iter().enumerate() {
            let lam = self.eigenvalues[j];
            for i in 0..d {
                res = res.max((hv[(i, k)] - vs[(i, k)] * lam).norm());
            }
        }
        if res > 1e-9 * scale {
            return Err(SpectralError::VerificationFailed { what: "reconstruction", residual: res });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Distinct energies, ascending.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.starts.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Raw eigenvalues with multiplicity, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vectors(&self) -> &Mat<c64> {
        &self.vectors
    }

    pub fn real_vectors(&self) -> Option<&Mat<f64>> {
        self.real_vectors.as_ref()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn level_columns(&self, k: usize) -> Range<usize> {
        self.starts[k]..self.starts[k + 1]
    }

    pub fn level_of_column(&self, j: usize) -> usize {
        self.level_of[j]
    }

    /// Level energy attached to each eigenvector column.
    pub fn column_energies(&self) -> Vec<f64> {
        self.level_of.iter().map(|&k| self.levels[k]).collect()
    }

    pub fn ground_energy(&self) -> f64 {
        self.levels.first().copied().unwrap_or(0.0)
    }

    pub fn range(&self) -> f64 {
        match (self.levels.first(), self.levels.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn max_multiplicity(&self) -> usize {
        self.multiplicities().into_iter().max().unwrap_or(0)
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.n_levels() == self.dim()
    }

    pub fn vector(&self, j: usize) -> Vec<c64> {
        self.vectors.col(j).iter().copied().collect()
    }

    /// Spectral projector of level `k`.
    pub fn projector(&self, k: usize) -> Operator {
        let r = self.level_columns(k);
        let vk = self.vectors.subcols(r.start, r.end - r.start);
        Operator::from_mat(vk * vk.adjoint())
    }

    /// `V^dagger psi`
    pub fn coefficients(&self, psi: &[c64]) -> Vec<c64> {
        let d = self.dim();
        let v = &self.vectors;
        (0..d)
            .map(|j| {
                let col = v.col(j);
                (0..d).map(|i| col[i].conj() * psi[i]).sum()
            })
            .collect()
    }

    /// `V c`
    pub fn from_coefficients(&self, coeffs: &[c64]) -> Vec<c64> {
        let d = self.dim();
        let v = &self.vectors;
        let mut out = vec![c64::new(0.0, 0.0); d];
        for (j, &cj) in coeffs.iter().enumerate() {
            if cj == c64::new(0.0, 0.0) {
                continue;
            }
            let col = v.col(j);
            for i in 0..d {
                out[i] += col[i] * cj;
            }
        }
        out
    }

    /// `V^dagger A V`
    pub fn to_eigenbasis(&self, a: &Operator) -> Operator {
        if let (Some(u), true) = (&self.real_vectors, a.is_real()) {
            let ar = a.real_part_mat();
            let m = u.transpose() * &ar * u;
            return Operator::from_real_mat(m.as_ref());
        }
        let v = &self.vectors;
        Operator::from_mat(v.adjoint() * a.mat() * v)
    }

    /// `V A' V^dagger`
    pub fn from_eigenbasis(&self, a: &Operator) -> Operator {
        if let (Some(u), true) = (&self.real_vectors, a.is_real()) {
            let ar = a.real_part_mat();
            let m = u * &ar * u.transpose();
            return Operator::from_real_mat(m.as_ref());
        }
        let v = &self.vectors;
        Operator::from_mat(v * a.mat() * v.adjoint())
    }

    /// `sum_k f(E_k) Pi_k`
    pub fn function(&self, f: impl Fn(f64) -> f64) -> Operator {
        let w: Vec<f64> = self.column_energies().into_iter().map(f).collect();
        let e = HermitianEigen {
            values: self.eigenvalues.clone(),
            vectors: self.vectors.clone(),
            real_vectors: self.real_vectors.clone(),
        };
        crate::lattice::reconstruct(&e, &w)
    }

    /// `Tr(Pi_k rho)` for every level.
    pub fn populations(&self, state: &State) -> Result<Vec<f64>, SpectralError> {
        if state.dim() != self.dim() {
            return Err(SpectralError::DimensionMismatch { expected: self.dim(), found: state.dim() });
        }
        let per_col: Vec<f64> = match state {
            State::Pure(psi) => self.coefficients(psi).iter().map(|z| z.norm_sqr()).collect(),
            State::Mixed(rho) => {
                let r = self.to_eigenbasis(rho);
                (0..self.dim()).map(|j| r.get(j, j).re).collect()
            }
        };
        Ok(self.sum_per_level(&per_col))
    }

    pub fn sum_per_level(&self, per_col: &[f64]) -> Vec<f64> {
        (0..self.n_levels()).map(|k| self.level_columns(k).map(|j| per_col[j]).sum()).collect()
    }

    /// Levels whose energy lies in `[lo, hi]`.
    pub fn levels_in(&self, lo: f64, hi: f64) -> Vec<usize> {
        (0..self.n_levels()).filter(|&k| self.levels[k] >= lo && self.levels[k] <= hi).collect()
    }
}

/// `p_k = Tr(Pi_k rho)`
pub fn level_populations(spec: &SpectralDecomposition, state: &State) -> Result<Vec<f64>, SpectralError> {
    spec.populations(state)
}

/// Sorted differences `E_k - E_l` over ordered pairs `k != l`.
pub fn sorted_gaps(levels: &[f64]) -> Vec<f64> {
    let n = levels.len();
    let mut g = Vec::with_capacity(n * n.saturating_sub(1));
    for k in 0..n {
        for l in 0..n {
            if k != l {
                g.push(levels[k] - levels[l]);
            }
        }
    }
    g.sort_by(f64::total_cmp);
    g
}

/// Largest number of gaps in any closed window `[E, E + eps]`.
pub fn max_in_window(sorted: &[f64], eps: f64) -> usize {
    let mut best = 0;
    let mut hi = 0;
    for lo in 0..sorted.len() {
        if hi < lo {
            hi = lo;
        }
        while hi < sorted.len() && sorted[hi] - sorted[lo] <= eps {
            hi += 1;
        }
        best = best.max(hi - lo);
    }
    best
}

/// Maximal number of energy gaps in an interval of width `eps`.
pub fn gap_count(spec: &SpectralDecomposition, eps: f64) -> usize {
    max_in_window(&sorted_gaps(spec.levels()), eps)
}

/// True when no gap value occurs twice, up to the degeneracy tolerance.
pub fn has_nondegenerate_gaps(spec: &SpectralDecomposition) -> bool {
    spec.n_levels() < 2 || gap_count(spec, spec.tolerance()) == 1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapStatistics {
    /// Sorted `E_k - E_l` over `k != l`.
    pub gaps: Vec<f64>,
    pub spacing_ratios: Vec<f64>,
    pub mean_ratio: f64,
}

pub fn gap_statistics(spec: &SpectralDecomposition) -> GapStatistics {
    let r = level_spacing_ratios(spec.levels());
    let mean_ratio = mean(&r);
    GapStatistics { gaps: sorted_gaps(spec.levels()), spacing_ratios: r, mean_ratio }
}

/// `r_j = min(d_j, d_{j+1}) / max(d_j, d_{j+1})` for consecutive spacings of
/// ascending values. Pairs of zero spacings are skipped.
pub fn level_spacing_ratios(sorted: &[f64]) -> Vec<f64> {
    let d: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
    d.windows(2)
        .filter_map(|w| {
            let (a, b) = (w[0].abs(), w[1].abs());
            let m = a.max(b);
            (m > 0.0).then(|| a.min(b) / m)
        })
        .collect()
}

/// Ratios restricted to the fraction `[lo, hi)` of the ordered values.
pub fn level_spacing_ratios_window(sorted: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let n = sorted.len();
    let a = ((n as f64) * lo).floor() as usize;
    let b = (((n as f64) * hi).ceil() as usize).min(n);
    if b <= a {
        return Vec::new();
    }
    level_spacing_ratios(&sorted[a..b])
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Number of eigenstates with energy in `[e, e + delta]`.
pub fn number_of_states(spec: &SpectralDecomposition, e: f64, delta: f64) -> usize {
    spec.levels_in(e, e + delta).into_iter().map(|k| spec.level_columns(k).len()).sum()
}

/// `(1/d) sum_j exp(-i E_j t)` over eigenvalues with multiplicity.
pub fn fourier_spectrum(eigenvalues: &[f64], t: f64) -> c64 {
    let d = eigenvalues.len() as f64;
    eigenvalues.iter().map(|&e| c64::from_polar(1.0, -e * t)).sum::<c64>() / d
}

/// Writes `index,energy,multiplicity` rows after `#`-prefixed metadata.
pub fn write_spectrum_csv<W: Write>(out: &mut W, spec: &SpectralDecomposition, meta: &[(&str, String)]) -> std::io::Result<()> {
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    writeln!(out, "# degeneracy_tolerance: {:.16e}", spec.tolerance())?;
    writeln!(out, "index,energy,multiplicity")?;
    for (k, (e, m)) in spec.levels().iter().zip(spec.multiplicities()).enumerate() {
        writeln!(out, "{k},{e:.16e},{m}")?;
    }
    Ok(())
}
