//! Placing operators that act on a few sites into the full tensor-product space.

use faer::c64;

use super::graph::{strides, SiteKind};
use super::{LatticeError, Operator};

/// Row-major sparse matrix, used for embedded local operators.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    dim: usize,
    rows: Vec<Vec<(usize, c64)>>,
}

/// Precomputed action of a local operator on basis states.
pub(crate) struct LocalAction {
    sites: Vec<usize>,
    /// Per local column: nonzero `(local row, value)` pairs.
    columns: Vec<Vec<(usize, c64)>>,
    /// Offset contributed by each local configuration to the full index.
    offsets: Vec<usize>,
    site_strides: Vec<usize>,
    site_dims: Vec<usize>,
    local_strides: Vec<usize>,
    fermionic: bool,
    n_sites: usize,
    all_strides: Vec<usize>,
}

impl LocalAction {
    pub(crate) fn new(dims: &[usize], kind: SiteKind, sites: &[usize], op: &Operator) -> Result<Self, LatticeError> {
        let n = dims.len();
        for w in sites.windows(2) {
            if w[0] >= w[1] {
                return Err(LatticeError::UnsortedSites);
            }
        }
        if let Some(&s) = sites.iter().find(|&&s| s >= n) {
            return Err(LatticeError::SiteOutOfRange { site: s, n_sites: n });
        }
        let site_dims: Vec<usize> = sites.iter().map(|&s| dims[s]).collect();
        let local_dim: usize = site_dims.iter().product();
        if op.dim() != local_dim {
            return Err(LatticeError::DimensionMismatch { expected: local_dim, found: op.dim() });
        }
        let all_strides = strides(dims);
        let local_strides = strides(&site_dims);
        let site_strides: Vec<usize> = sites.iter().map(|&s| all_strides[s]).collect();
        let fermionic = kind == SiteKind::Fermion;
        let mut columns = vec![Vec::new(); local_dim];
        for (lx, col) in columns.iter_mut().enumerate() {
            for ly in 0..local_dim {
                let v = op.get(ly, lx);
                if v.norm() > 0.0 {
                    if fermionic && (lx.count_ones() + ly.count_ones()) % 2 == 1 {
                        return Err(LatticeError::OddFermionOperator);
                    }
                    col.push((ly, v));
                }
            }
        }
        let offsets = (0..local_dim)
            .map(|l| (0..sites.len()).map(|k| ((l / local_strides[k]) % site_dims[k]) * site_strides[k]).sum())
            .collect();
        Ok(Self {
            sites: sites.to_vec(),
            columns,
            offsets,
            site_strides,
            site_dims,
            local_strides,
            fermionic,
            n_sites: n,
            all_strides,
        })
    }

    fn local_index(&self, x: usize) -> usize {
        (0..self.sites.len())
            .map(|k| ((x / self.site_strides[k]) % self.site_dims[k]) * self.local_strides[k])
            .sum()
    }

    /// Number of occupied modes outside the support that precede each support
    /// mode. Only meaningful for fermions.
    fn outside_counts(&self, x: usize) -> Vec<u32> {
        let mut counts = vec![0u32; self.sites.len()];
        let mut running = 0u32;
        let mut k = 0;
        for s in 0..self.n_sites {
            if k < self.sites.len() && self.sites[k] == s {
                counts[k] = running;
                k += 1;
            } else if (x / self.all_strides[s]) % 2 == 1 {
                running += 1;
            }
        }
        counts
    }

    fn parity_sign(&self, local: usize, counts: &[u32]) -> f64 {
        let mut p = 0u32;
        for (k, &c) in counts.iter().enumerate() {
            if (local / self.local_strides[k]) % 2 == 1 {
                p += c;
            }
        }
        if p % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Calls `f(row, value)` for every nonzero of column `x` of the embedded
    /// operator.
    pub(crate) fn for_each_in_column(&self, x: usize, mut f: impl FnMut(usize, c64)) {
        let lx = self.local_index(x);
        let base = x - self.offsets[lx];
        if self.fermionic {
            let counts = self.outside_counts(x);
            let sx = self.parity_sign(lx, &counts);
            for &(ly, v) in &self.columns[lx] {
                let s = sx * self.parity_sign(ly, &counts);
                f(base + self.offsets[ly], v * s);
            }
        } else {
            for &(ly, v) in &self.columns[lx] {
                f(base + self.offsets[ly], v);
            }
        }
    }
}

/// Embeds `op` (acting on `sites`, ascending) into the full space.
///
/// For fermionic sites `op` is read as an even polynomial in the mode
/// operators of `sites`, written in the local Jordan-Wigner basis; signs from
/// interleaved outside modes are inserted.
pub fn embed_local_operator(dims: &[usize], kind: SiteKind, sites: &[usize], op: &Operator) -> Result<Operator, LatticeError> {
    Ok(embed_sparse(dims, kind, sites, op)?.to_dense())
}

pub fn embed_sparse(dims: &[usize], kind: SiteKind, sites: &[usize], op: &Operator) -> Result<SparseOperator, LatticeError> {
    let action = LocalAction::new(dims, kind, sites, op)?;
    let d: usize = dims.iter().product();
    let mut rows = vec![Vec::new(); d];
    for x in 0..d {
        action.for_each_in_column(x, |y, v| rows[y].push((x, v)));
    }
    Ok(SparseOperator { dim: d, rows })
}

impl SparseOperator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn rows(&self) -> &[Vec<(usize, c64)>] {
        &self.rows
    }

    pub fn from_dense(op: &Operator) -> Self {
        let d = op.dim();
        let rows = (0..d)
            .map(|i| (0..d).filter_map(|j| {
                let v = op.get(i, j);
                (v.norm() > 0.0).then_some((j, v))
            }).collect())
            .collect();
        Self { dim: d, rows }
    }

    pub fn to_dense(&self) -> Operator {
        let mut m = Operator::zeros(self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m.set(i, j, m.get(i, j) + v);
            }
        }
        m
    }

    pub fn add(&self, other: &SparseOperator) -> SparseOperator {
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| {
                let mut r: Vec<(usize, c64)> = a.iter().chain(b).copied().collect();
                r.sort_by_key(|e| e.0);
                let mut out: Vec<(usize, c64)> = Vec::with_capacity(r.len());
                for (j, v) in r {
                    match out.last_mut() {
                        Some(last) if last.0 == j => last.1 += v,
                        _ => out.push((j, v)),
                    }
                }
                out
            })
            .collect();
        SparseOperator { dim: self.dim, rows }
    }

    pub fn scale(&self, s: f64) -> SparseOperator {
        SparseOperator {
            dim: self.dim,
            rows: self.rows.iter().map(|r| r.iter().map(|&(j, v)| (j, v * s)).collect()).collect(),
        }
    }

    pub fn apply(&self, psi: &[c64]) -> Vec<c64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, v)| v * psi[j]).sum()).collect()
    }

    pub fn expectation(&self, psi: &[c64]) -> c64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| psi[i].conj() * r.iter().map(|&(j, v)| v * psi[j]).sum::<c64>())
            .sum()
    }

    /// `Tr(self * m)`
    pub fn trace_with(&self, m: &Operator) -> c64 {
        let mm = m.mat();
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|&(j, v)| v * mm[(j, i)]).sum::<c64>())
            .sum()
    }

    /// `self * m`
    pub fn mul_dense(&self, m: &Operator) -> Operator {
        let d = self.dim;
        let mm = m.mat();
        let mut out = Operator::zeros(d);
        let o = out.mat_mut();
        for col in 0..d {
            for (i, r) in self.rows.iter().enumerate() {
                let mut acc = c64::new(0.0, 0.0);
                for &(j, v) in r {
                    acc += v * mm[(j, col)];
                }
                o[(i, col)] = acc;
            }
        }
        out
    }

    /// `m * self`
    pub fn dense_mul(&self, m: &Operator) -> Operator {
        let d = self.dim;
        let mm = m.mat();
        let mut out = Operator::zeros(d);
        let o = out.mat_mut();
        for (k, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                for i in 0..d {
                    o[(i, j)] += mm[(i, k)] * v;
                }
            }
        }
        out
    }
}
