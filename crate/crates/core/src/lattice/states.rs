//! States, reduced states and distance measures.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use super::graph::{strides, SiteGraph, SiteKind};
use super::{pauli, LatticeError, Operator};

/// A normalised pure state or a density matrix.
#[derive(Clone, Debug)]
pub enum State {
    Pure(Vec<c64>),
    Mixed(Operator),
}

impl State {
    pub fn dim(&self) -> usize {
        match self {
            State::Pure(v) => v.len(),
            State::Mixed(m) => m.dim(),
        }
    }

    pub fn density(&self) -> Operator {
        match self {
            State::Pure(v) => Operator::projector(v),
            State::Mixed(m) => m.clone(),
        }
    }

    pub fn expectation(&self, a: &Operator) -> f64 {
        match self {
            State::Pure(v) => a.expectation(v).re,
            State::Mixed(m) => m.trace_product(a).re,
        }
    }

    /// Checks normalisation and, for density matrices, Hermiticity and
    /// positivity.
    pub fn validate(&self, tol: f64) -> Result<(), LatticeError> {
        match self {
            State::Pure(v) => {
                let n = norm_sq(v);
                if (n - 1.0).abs() > tol {
                    return Err(LatticeError::NotNormalised { trace: n });
                }
            }
            State::Mixed(m) => {
                let tr = m.trace().re;
                if (tr - 1.0).abs() > tol {
                    return Err(LatticeError::NotNormalised { trace: tr });
                }
                if !m.is_hermitian(tol) {
                    return Err(LatticeError::NotHermitian { defect: m.hermiticity_defect() });
                }
                let min = m.eigvalsh()?.first().copied().unwrap_or(0.0);
                if min < -tol {
                    return Err(LatticeError::NotPositive { min_eigenvalue: min });
                }
            }
        }
        Ok(())
    }
}

pub fn norm_sq(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn normalise(v: &mut [c64]) {
    let n = norm_sq(v).sqrt();
    if n > 0.0 {
        for z in v.iter_mut() {
            *z /= n;
        }
    }
}

pub fn inner(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Computational basis product state; `digits[s]` is the level of site `s`.
pub fn basis_state(dims: &[usize], digits: &[usize]) -> Vec<c64> {
    let d: usize = dims.iter().product();
    let st = strides(dims);
    let idx: usize = digits.iter().zip(&st).map(|(a, b)| a * b).sum();
    let mut v = vec![c64::new(0.0, 0.0); d];
    v[idx] = c64::new(1.0, 0.0);
    v
}

/// Tensor product of single-site vectors, site 0 leftmost.
pub fn product_state(factors: &[Vec<c64>]) -> Vec<c64> {
    let mut out = vec![c64::new(1.0, 0.0)];
    for f in factors {
        let mut next = Vec::with_capacity(out.len() * f.len());
        for a in &out {
            for b in f {
                next.push(a * b);
            }
        }
        out = next;
    }
    out
}

/// Qubit state pointing along the Bloch direction `(theta, phi)`.
pub fn bloch_state(theta: f64, phi: f64) -> Vec<c64> {
    vec![c64::new((theta / 2.0).cos(), 0.0), c64::from_polar((theta / 2.0).sin(), phi)]
}

/// Qubit Neel state `|0101...>` or `|1010...>`.
pub fn neel_state(n: usize, first_up: bool) -> Vec<c64> {
    let digits: Vec<usize> = (0..n).map(|s| if (s % 2 == 0) == first_up { 0 } else { 1 }).collect();
    basis_state(&vec![2; n], &digits)
}

/// Places region factors into the full space. `parts` lists disjoint
/// regions (ascending sites) with a vector on each; together they must cover
/// every site.
pub fn compose_regions(dims: &[usize], parts: &[(&[usize], &[c64])]) -> Result<Vec<c64>, LatticeError> {
    let n = dims.len();
    let mut owner = vec![usize::MAX; n];
    for (p, (sites, v)) in parts.iter().enumerate() {
        let rd: usize = sites.iter().map(|&s| dims[s]).product();
        if v.len() != rd {
            return Err(LatticeError::DimensionMismatch { expected: rd, found: v.len() });
        }
        for &s in sites.iter() {
            if s >= n || owner[s] != usize::MAX {
                return Err(LatticeError::BadPartition);
            }
            owner[s] = p;
        }
    }
    if owner.contains(&usize::MAX) {
        return Err(LatticeError::BadPartition);
    }
    let d: usize = dims.iter().product();
    let st = strides(dims);
    let part_strides: Vec<Vec<usize>> = parts
        .iter()
        .map(|(sites, _)| strides(&sites.iter().map(|&s| dims[s]).collect::<Vec<_>>()))
        .collect();
    let mut out = vec![c64::new(0.0, 0.0); d];
    for (x, o) in out.iter_mut().enumerate() {
        let mut amp = c64::new(1.0, 0.0);
        for (p, (sites, v)) in parts.iter().enumerate() {
            let local: usize = sites
                .iter()
                .enumerate()
                .map(|(k, &s)| ((x / st[s]) % dims[s]) * part_strides[p][k])
                .sum();
            amp *= v[local];
        }
        *o = amp;
    }
    Ok(out)
}

/// For every full index, the `(kept, traced)` pair of sub-indices.
fn split_indices(dims: &[usize], keep: &[usize]) -> (Vec<usize>, Vec<usize>, usize, usize) {
    let rest: Vec<usize> = (0..dims.len()).filter(|s| !keep.contains(s)).collect();
    let st = strides(dims);
    let kd: Vec<usize> = keep.iter().map(|&s| dims[s]).collect();
    let rd: Vec<usize> = rest.iter().map(|&s| dims[s]).collect();
    let ks = strides(&kd);
    let rs = strides(&rd);
    let d: usize = dims.iter().product();
    let mut ki = vec![0; d];
    let mut ri = vec![0; d];
    for x in 0..d {
        ki[x] = keep.iter().enumerate().map(|(k, &s)| ((x / st[s]) % dims[s]) * ks[k]).sum();
        ri[x] = rest.iter().enumerate().map(|(k, &s)| ((x / st[s]) % dims[s]) * rs[k]).sum();
    }
    (ki, ri, kd.iter().product(), rd.iter().product())
}

/// Reduced state on `keep` (sites in ascending order define the tensor
/// order of the result).
///
/// Fermionic reductions are only defined for regions contiguous in the
/// Jordan-Wigner order.
pub fn partial_trace(graph: &SiteGraph, state: &State, keep: &[usize]) -> Result<Operator, LatticeError> {
    let keep = graph.check_region(keep)?;
    if graph.kind() == SiteKind::Fermion && keep.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(LatticeError::NonContiguousFermionRegion);
    }
    if state.dim() != graph.dim() {
        return Err(LatticeError::DimensionMismatch { expected: graph.dim(), found: state.dim() });
    }
    Ok(partial_trace_dims(graph.local_dims(), state, &keep))
}

/// Partial trace on a plain tensor-product space; `keep` must be ascending.
pub fn partial_trace_dims(dims: &[usize], state: &State, keep: &[usize]) -> Operator {
    let (ki, ri, dk, dr) = split_indices(dims, keep);
    match state {
        State::Pure(v) => {
            let mut m = Mat::<c64>::zeros(dk, dr);
            for (x, z) in v.iter().enumerate() {
                m[(ki[x], ri[x])] = *z;
            }
            Operator::from_mat(&m * m.adjoint())
        }
        State::Mixed(rho) => {
            let r = rho.mat();
            let mut out = Operator::zeros(dk);
            // group indices by their traced part
            let mut by_rest: Vec<Vec<usize>> = vec![Vec::new(); dr];
            for x in 0..v_len(dims) {
                by_rest[ri[x]].push(x);
            }
            let o = out.mat_mut();
            for group in &by_rest {
                for &y in group {
                    for &x in group {
                        o[(ki[x], ki[y])] += r[(x, y)];
                    }
                }
            }
            out
        }
    }
}

fn v_len(dims: &[usize]) -> usize {
    dims.iter().product()
}

/// Reduced state of `|psi><psi|` when the state is given in a basis of
/// full-space indices (for example a symmetry sector).
pub fn partial_trace_in_basis(dims: &[usize], basis: &[usize], amplitudes: &[c64], keep: &[usize]) -> Operator {
    let d: usize = dims.iter().product();
    let mut full = vec![c64::new(0.0, 0.0); d];
    for (&b, &a) in basis.iter().zip(amplitudes) {
        full[b] = a;
    }
    partial_trace_dims(dims, &State::Pure(full), keep)
}

/// `D(rho, sigma) = 1/2 ||rho - sigma||_1`
pub fn trace_distance(rho: &Operator, sigma: &Operator) -> Result<f64, LatticeError> {
    if rho.dim() != sigma.dim() {
        return Err(LatticeError::DimensionMismatch { expected: rho.dim(), found: sigma.dim() });
    }
    let diff = (rho - sigma).hermitian_part();
    Ok(0.5 * diff.trace_norm_hermitian()?)
}

/// `F = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`
pub fn fidelity(rho: &Operator, sigma: &Operator) -> Result<f64, LatticeError> {
    if rho.dim() != sigma.dim() {
        return Err(LatticeError::DimensionMismatch { expected: rho.dim(), found: sigma.dim() });
    }
    let s = rho.hermitian_part().hermitian_function(|x| x.max(0.0).sqrt())?;
    let inner = s.matmul(sigma).matmul(&s).hermitian_part();
    let ev = inner.eigvalsh()?;
    let t: f64 = ev.iter().map(|x| x.max(0.0).sqrt()).sum();
    Ok(t * t)
}

/// Von Neumann entropy in bits of a density matrix.
pub fn von_neumann_entropy(rho: &Operator) -> Result<f64, LatticeError> {
    Ok(entropy_of_spectrum(&rho.hermitian_part().eigvalsh()?, 1.0))
}

/// Renyi entropy of order `alpha` in bits; `alpha = 1` is the von Neumann
/// limit.
pub fn entropy_of_spectrum(p: &[f64], alpha: f64) -> f64 {
    let ps = p.iter().copied().filter(|&x| x > 1e-300);
    if (alpha - 1.0).abs() < 1e-12 {
        -ps.map(|x| x * x.log2()).sum::<f64>()
    } else {
        ps.map(|x| x.powf(alpha)).sum::<f64>().log2() / (1.0 - alpha)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EntropyKind {
    VonNeumann,
    Renyi(f64),
}

/// Entanglement entropy of `region` in bits.
pub fn entanglement_entropy(graph: &SiteGraph, state: &State, region: &[usize], kind: EntropyKind) -> Result<f64, LatticeError> {
    let rho = partial_trace(graph, state, region)?;
    let ev = rho.hermitian_part().eigvalsh()?;
    Ok(match kind {
        EntropyKind::VonNeumann => entropy_of_spectrum(&ev, 1.0),
        EntropyKind::Renyi(a) => entropy_of_spectrum(&ev, a),
    })
}

/// Generalised covariance `Tr(rho^tau A rho^(1-tau) B) - Tr(rho A) Tr(rho B)`,
/// computed from the spectrum of `rho` with eigenvalues floored at
/// `floor`. Also returns the total weight moved by the floor.
pub fn covariance(rho: &Operator, a: &Operator, b: &Operator, tau: f64, floor: f64) -> Result<(c64, f64), LatticeError> {
    let e = rho.hermitian_part().eigh()?;
    let mut moved = 0.0;
    let p: Vec<f64> = e
        .values
        .iter()
        .map(|&x| {
            if x < floor {
                moved += floor - x;
                floor
            } else {
                x
            }
        })
        .collect();
    let v = &e.vectors;
    let ap = Operator::from_mat(v.adjoint() * a.mat() * v);
    let bp = Operator::from_mat(v.adjoint() * b.mat() * v);
    let d = rho.dim();
    let mut acc = c64::new(0.0, 0.0);
    let pt: Vec<f64> = p.iter().map(|x| x.powf(tau)).collect();
    let pc: Vec<f64> = p.iter().map(|x| x.powf(1.0 - tau)).collect();
    for i in 0..d {
        for j in 0..d {
            acc += ap.get(i, j) * bp.get(j, i) * (pt[i] * pc[j]);
        }
    }
    let ea: c64 = (0..d).map(|i| ap.get(i, i) * p[i]).sum();
    let eb: c64 = (0..d).map(|i| bp.get(i, i) * p[i]).sum();
    Ok((acc - ea * eb, moved))
}

/// Product of `sigma_z` expectation values is often needed in tests; this
/// is the single-site `sigma_z` on qubit `site` of an `n`-qubit register.
pub fn sigma_z_on(n: usize, site: usize) -> Operator {
    super::embed::embed_sparse(&vec![2; n], SiteKind::Spin, &[site], &pauli::z())
        .expect("valid site")
        .to_dense()
}
