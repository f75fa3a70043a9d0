use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::LatticeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    /// Spin-1/2 or general qudit sites with a tensor-product structure.
    Spin,
    /// Fermionic modes, ordered for the Jordan-Wigner string by site index.
    Fermion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Open,
    Periodic,
}

/// Sites with local dimensions and a hyperedge set describing which groups of
/// sites interact.
///
/// Site 0 is the leftmost tensor factor: basis index `i` has digit `i_0` with
/// the largest stride.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteGraph {
    local_dims: Vec<usize>,
    kind: SiteKind,
    edges: Vec<Vec<usize>>,
}

impl SiteGraph {
    pub fn new(local_dims: Vec<usize>, kind: SiteKind, edges: Vec<Vec<usize>>) -> Result<Self, LatticeError> {
        let n = local_dims.len();
        if n == 0 {
            return Err(LatticeError::EmptyGraph);
        }
        if local_dims.iter().any(|&d| d < 2) {
            return Err(LatticeError::InvalidLocalDim);
        }
        if kind == SiteKind::Fermion && local_dims.iter().any(|&d| d != 2) {
            return Err(LatticeError::InvalidLocalDim);
        }
        let mut clean = Vec::with_capacity(edges.len());
        for mut e in edges {
            e.sort_unstable();
            e.dedup();
            if e.is_empty() {
                return Err(LatticeError::EmptyEdge);
            }
            if let Some(&s) = e.iter().find(|&&s| s >= n) {
                return Err(LatticeError::SiteOutOfRange { site: s, n_sites: n });
            }
            if !clean.contains(&e) {
                clean.push(e);
            }
        }
        let dim = local_dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        match dim {
            Some(d) if d <= 1 << 26 => {}
            _ => return Err(LatticeError::TooLarge),
        }
        Ok(Self { local_dims, kind, edges: clean })
    }

    /// Qubit chain with nearest-neighbour bonds.
    pub fn chain(n: usize, boundary: Boundary) -> Result<Self, LatticeError> {
        Self::chain_with(n, 2, SiteKind::Spin, boundary)
    }

    pub fn chain_with(n: usize, local_dim: usize, kind: SiteKind, boundary: Boundary) -> Result<Self, LatticeError> {
        let mut edges: Vec<Vec<usize>> = (0..n.saturating_sub(1)).map(|i| vec![i, i + 1]).collect();
        if boundary == Boundary::Periodic && n > 2 {
            edges.push(vec![n - 1, 0]);
        }
        if n == 1 {
            edges.push(vec![0]);
        }
        Self::new(vec![local_dim; n], kind, edges)
    }

    pub fn n_sites(&self) -> usize {
        self.local_dims.len()
    }

    pub fn kind(&self) -> SiteKind {
        self.kind
    }

    pub fn local_dims(&self) -> &[usize] {
        &self.local_dims
    }

    pub fn edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    pub fn dim(&self) -> usize {
        self.local_dims.iter().product()
    }

    pub fn region_dim(&self, region: &[usize]) -> usize {
        region.iter().map(|&s| self.local_dims[s]).product()
    }

    pub fn check_region(&self, region: &[usize]) -> Result<Vec<usize>, LatticeError> {
        let mut r = region.to_vec();
        r.sort_unstable();
        r.dedup();
        if let Some(&s) = r.iter().find(|&&s| s >= self.n_sites()) {
            return Err(LatticeError::SiteOutOfRange { site: s, n_sites: self.n_sites() });
        }
        Ok(r)
    }

    pub fn complement(&self, region: &[usize]) -> Vec<usize> {
        (0..self.n_sites()).filter(|s| !region.contains(s)).collect()
    }

    /// Graph on `region` alone, sites relabelled in increasing order and
    /// keeping only edges inside the region.
    pub fn subgraph(&self, region: &[usize]) -> Result<Self, LatticeError> {
        let r = self.check_region(region)?;
        let pos = |s: usize| r.iter().position(|&x| x == s);
        let edges: Vec<Vec<usize>> = self
            .edges
            .iter()
            .filter(|e| e.iter().all(|s| r.contains(s)))
            .map(|e| e.iter().map(|&s| pos(s).unwrap()).collect())
            .collect();
        let mut edges = edges;
        if edges.is_empty() {
            edges = (0..r.len()).map(|i| vec![i]).collect();
        }
        Self::new(r.iter().map(|&s| self.local_dims[s]).collect(), self.kind, edges)
    }

    /// Edges that touch `region`.
    pub fn edges_touching(&self, region: &[usize]) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&i| self.edges[i].iter().any(|s| region.contains(s)))
            .collect()
    }

    /// Edges that touch both `region` and its complement.
    pub fn boundary_edges(&self, region: &[usize]) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&i| {
                let e = &self.edges[i];
                e.iter().any(|s| region.contains(s)) && e.iter().any(|s| !region.contains(s))
            })
            .collect()
    }

    /// Sites covered by the given edges.
    pub fn edge_sites(&self, edge_ids: &[usize]) -> Vec<usize> {
        let mut s: Vec<usize> = edge_ids.iter().flat_map(|&i| self.edges[i].iter().copied()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Strides of each site in the flattened basis index.
    pub fn strides(&self) -> Vec<usize> {
        strides(&self.local_dims)
    }
}

pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Number of edges in the shortest chain of pairwise-overlapping edges whose
/// first element touches `x` and whose last touches `y`.
///
/// Zero when the sets overlap, `None` when no chain exists.
pub fn graph_distance(graph: &SiteGraph, x: &[usize], y: &[usize]) -> Option<usize> {
    if x.iter().any(|s| y.contains(s)) {
        return Some(0);
    }
    let edges = graph.edges();
    let m = edges.len();
    let overlaps = |a: &[usize], b: &[usize]| a.iter().any(|s| b.contains(s));
    let mut dist = vec![usize::MAX; m];
    let mut queue = VecDeque::new();
    for i in 0..m {
        if overlaps(&edges[i], x) {
            dist[i] = 1;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        if overlaps(&edges[i], y) {
            return Some(dist[i]);
        }
        for j in 0..m {
            if dist[j] == usize::MAX && overlaps(&edges[i], &edges[j]) {
                dist[j] = dist[i] + 1;
                queue.push_back(j);
            }
        }
    }
    None
}
