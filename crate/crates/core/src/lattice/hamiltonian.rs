use super::embed::{embed_sparse, LocalAction, SparseOperator};
use super::graph::{SiteGraph, SiteKind};
use super::{LatticeError, Operator};

/// An operator acting on a sorted list of sites.
#[derive(Clone, Debug)]
pub struct LocalOperator {
    pub sites: Vec<usize>,
    pub op: Operator,
}

impl LocalOperator {
    pub fn new(sites: Vec<usize>, op: Operator) -> Self {
        Self { sites, op }
    }

    pub fn embed(&self, graph: &SiteGraph) -> Result<Operator, LatticeError> {
        Ok(self.embed_sparse(graph)?.to_dense())
    }

    pub fn embed_sparse(&self, graph: &SiteGraph) -> Result<SparseOperator, LatticeError> {
        embed_sparse(graph.local_dims(), graph.kind(), &self.sites, &self.op)
    }
}

/// Re-expresses `op` on `sites` as an operator on the superset `target`.
pub fn expand_to(dims: &[usize], kind: SiteKind, sites: &[usize], op: &Operator, target: &[usize]) -> Result<Operator, LatticeError> {
    let pos: Option<Vec<usize>> = sites.iter().map(|s| target.iter().position(|t| t == s)).collect();
    let pos = pos.ok_or(LatticeError::NotASubset)?;
    let sub_dims: Vec<usize> = target.iter().map(|&t| dims[t]).collect();
    embed_sparse(&sub_dims, kind, &pos, op).map(|s| s.to_dense())
}

/// `H = sum_X H_X` over the hyperedges of a site graph.
///
/// Terms may be attached to any subset of an edge. A term whose support is
/// itself an edge belongs to that edge; otherwise it is shared equally among
/// every edge containing its support.
#[derive(Clone, Debug)]
pub struct LocalHamiltonian {
    graph: SiteGraph,
    terms: Vec<LocalOperator>,
}

impl LocalHamiltonian {
    pub fn new(graph: SiteGraph, terms: Vec<LocalOperator>) -> Result<Self, LatticeError> {
        let mut clean = Vec::with_capacity(terms.len());
        for mut t in terms {
            let mut order: Vec<usize> = (0..t.sites.len()).collect();
            order.sort_by_key(|&k| t.sites[k]);
            if order.iter().enumerate().any(|(i, &k)| i != k) {
                return Err(LatticeError::UnsortedSites);
            }
            t.sites.dedup();
            if t.sites.is_empty() {
                return Err(LatticeError::EmptyEdge);
            }
            graph.check_region(&t.sites)?;
            let want = graph.region_dim(&t.sites);
            if t.op.dim() != want {
                return Err(LatticeError::DimensionMismatch { expected: want, found: t.op.dim() });
            }
            if !t.op.is_hermitian(1e-12) {
                return Err(LatticeError::NotHermitian { defect: t.op.hermiticity_defect() });
            }
            if !graph.edges().iter().any(|e| t.sites.iter().all(|s| e.contains(s))) {
                return Err(LatticeError::TermOutsideEdges { sites: t.sites.clone() });
            }
            // parity check for fermions happens here rather than at assembly
            LocalAction::new(graph.local_dims(), graph.kind(), &t.sites, &t.op)?;
            clean.push(t);
        }
        Ok(Self { graph, terms: clean })
    }

    pub fn graph(&self) -> &SiteGraph {
        &self.graph
    }

    pub fn terms(&self) -> &[LocalOperator] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.graph.dim()
    }

    /// One operator per edge, `H_X`, acting on the edge's sites.
    pub fn edge_terms(&self) -> Result<Vec<LocalOperator>, LatticeError> {
        let dims = self.graph.local_dims();
        let kind = self.graph.kind();
        let edges = self.graph.edges();
        let mut out: Vec<LocalOperator> =
            edges.iter().map(|e| LocalOperator::new(e.clone(), Operator::zeros(self.graph.region_dim(e)))).collect();
        for t in &self.terms {
            let exact = edges.iter().position(|e| *e == t.sites);
            let owners: Vec<usize> = match exact {
                Some(i) => vec![i],
                None => (0..edges.len()).filter(|&i| t.sites.iter().all(|s| edges[i].contains(s))).collect(),
            };
            let w = 1.0 / owners.len() as f64;
            for i in owners {
                let e = expand_to(dims, kind, &t.sites, &t.op, &edges[i])?;
                out[i].op += &e.scale_real(w);
            }
        }
        Ok(out)
    }

    /// Largest edge-term norm.
    pub fn interaction_strength(&self) -> Result<f64, LatticeError> {
        self.edge_terms()?
            .iter()
            .try_fold(0.0f64, |m, t| Ok(m.max(t.op.operator_norm()?)))
    }

    /// Dense matrix of `H` on the full space.
    pub fn assemble(&self) -> Result<Operator, LatticeError> {
        let d = self.dim();
        let mut h = Operator::zeros(d);
        {
            let m = h.mat_mut();
            for t in &self.terms {
                let a = LocalAction::new(self.graph.local_dims(), self.graph.kind(), &t.sites, &t.op)?;
                for x in 0..d {
                    a.for_each_in_column(x, |y, v| m[(y, x)] += v);
                }
            }
        }
        let defect = h.hermiticity_defect();
        if defect > 1e-12 * h.max_abs().max(1.0) {
            return Err(LatticeError::NotHermitian { defect });
        }
        Ok(h)
    }

    pub fn assemble_sparse(&self) -> Result<SparseOperator, LatticeError> {
        let mut acc: Option<SparseOperator> = None;
        for t in &self.terms {
            let s = t.embed_sparse(&self.graph)?;
            acc = Some(match acc {
                None => s,
                Some(a) => a.add(&s),
            });
        }
        Ok(acc.unwrap_or_else(|| SparseOperator::from_dense(&Operator::zeros(self.dim()))))
    }

    /// Matrix of `H` on the span of the given basis states (full-space
    /// indices). Elements leaving the span are dropped.
    pub fn assemble_in_basis(&self, basis: &[usize]) -> Result<Operator, LatticeError> {
        let d = self.dim();
        let mut index = vec![usize::MAX; d];
        for (k, &b) in basis.iter().enumerate() {
            if b >= d {
                return Err(LatticeError::SiteOutOfRange { site: b, n_sites: d });
            }
            index[b] = k;
        }
        let m = basis.len();
        let mut h = Operator::zeros(m);
        {
            let hm = h.mat_mut();
            for t in &self.terms {
                let a = LocalAction::new(self.graph.local_dims(), self.graph.kind(), &t.sites, &t.op)?;
                for (col, &x) in basis.iter().enumerate() {
                    a.for_each_in_column(x, |y, v| {
                        let row = index[y];
                        if row != usize::MAX {
                            hm[(row, col)] += v;
                        }
                    });
                }
            }
        }
        Ok(h)
    }

    /// `H_R = sum over edges inside R of H_X`, still on the full graph.
    pub fn restricted(&self, region: &[usize]) -> Result<LocalHamiltonian, LatticeError> {
        let r = self.graph.check_region(region)?;
        let terms = self
            .edge_terms()?
            .into_iter()
            .filter(|t| t.sites.iter().all(|s| r.contains(s)))
            .collect();
        LocalHamiltonian::new(self.graph.clone(), terms)
    }

    /// `H_R` written on the subsystem `R` alone, sites relabelled ascending.
    pub fn truncated(&self, region: &[usize]) -> Result<LocalHamiltonian, LatticeError> {
        let r = self.graph.check_region(region)?;
        let sub = self.graph.subgraph(&r)?;
        let pos = |s: usize| r.iter().position(|&x| x == s).unwrap();
        let terms: Vec<LocalOperator> = self
            .edge_terms()?
            .into_iter()
            .filter(|t| t.sites.iter().all(|s| r.contains(s)))
            .map(|t| LocalOperator::new(t.sites.iter().map(|&s| pos(s)).collect(), t.op))
            .collect();
        // edges of the subgraph may be missing if the region holds no full edge
        let mut edges: Vec<Vec<usize>> = sub.edges().to_vec();
        for t in &terms {
            if !edges.iter().any(|e| t.sites.iter().all(|s| e.contains(s))) {
                edges.push(t.sites.clone());
            }
        }
        let g = SiteGraph::new(sub.local_dims().to_vec(), sub.kind(), edges)?;
        LocalHamiltonian::new(g, terms)
    }

    /// Sum of the edge terms touching both `region` and its complement.
    pub fn boundary_terms(&self, region: &[usize]) -> Result<LocalHamiltonian, LatticeError> {
        let r = self.graph.check_region(region)?;
        let terms = self
            .edge_terms()?
            .into_iter()
            .filter(|t| t.sites.iter().any(|s| r.contains(s)) && t.sites.iter().any(|s| !r.contains(s)))
            .collect();
        LocalHamiltonian::new(self.graph.clone(), terms)
    }

    /// `scale * self`
    pub fn scaled(&self, scale: f64) -> LocalHamiltonian {
        Self {
            graph: self.graph.clone(),
            terms: self.terms.iter().map(|t| LocalOperator::new(t.sites.clone(), t.op.scale_real(scale))).collect(),
        }
    }

    pub fn plus(&self, other: &LocalHamiltonian) -> Result<LocalHamiltonian, LatticeError> {
        if other.graph != self.graph {
            return Err(LatticeError::GraphMismatch);
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self { graph: self.graph.clone(), terms })
    }
}

/// Dense `H` from a local Hamiltonian.
pub fn assemble_hamiltonian(h: &LocalHamiltonian) -> Result<Operator, LatticeError> {
    h.assemble()
}

/// Dense `H_R`.
pub fn restricted_hamiltonian(h: &LocalHamiltonian, region: &[usize]) -> Result<Operator, LatticeError> {
    h.restricted(region)?.assemble()
}
