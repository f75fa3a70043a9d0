//! Standard lattice models and the JSON model-file format.

use std::path::Path;

use faer::c64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::fermions::{density_density, hopping_pair};
use super::graph::{Boundary, SiteGraph, SiteKind};
use super::hamiltonian::{LocalHamiltonian, LocalOperator};
use super::{pauli, LatticeError, Operator};

/// `S.S` for two spin-1/2 sites.
pub fn spin_exchange() -> Operator {
    let xx = pauli::x().kron(&pauli::x());
    let yy = pauli::y().kron(&pauli::y());
    let zz = pauli::z().kron(&pauli::z());
    (&(&xx + &yy) + &zz).scale_real(0.25)
}

/// `(XX + YY) / 2`, the spin form of nearest-neighbour hopping.
pub fn flip_flop() -> Operator {
    let xx = pauli::x().kron(&pauli::x());
    let yy = pauli::y().kron(&pauli::y());
    (&xx + &yy).scale_real(0.5)
}

fn bonds(n: usize, boundary: Boundary) -> Vec<Vec<usize>> {
    let mut b: Vec<Vec<usize>> = (0..n.saturating_sub(1)).map(|i| vec![i, i + 1]).collect();
    if boundary == Boundary::Periodic && n > 2 {
        b.push(vec![0, n - 1]);
    }
    b
}

/// Qubit chain graph; `site_edges` adds a singleton edge per site so that
/// on-site fields stay attached to their own site.
pub fn chain_graph(n: usize, boundary: Boundary, site_edges: bool) -> Result<SiteGraph, LatticeError> {
    let mut edges = bonds(n, boundary);
    if site_edges || n == 1 {
        edges.extend((0..n).map(|i| vec![i]));
    }
    SiteGraph::new(vec![2; n], SiteKind::Spin, edges)
}

/// `J sum ZZ + hx sum X + hz sum Z` on a qubit chain.
pub fn ising_chain(graph: &SiteGraph, boundary: Boundary, j: f64, hx: f64, hz: f64) -> Result<LocalHamiltonian, LatticeError> {
    let n = graph.n_sites();
    let zz = pauli::z().kron(&pauli::z());
    let mut terms: Vec<LocalOperator> = bonds(n, boundary).into_iter().map(|b| LocalOperator::new(b, zz.scale_real(j))).collect();
    for i in 0..n {
        let mut f = pauli::x().scale_real(hx);
        f += &pauli::z().scale_real(hz);
        if hx != 0.0 || hz != 0.0 {
            terms.push(LocalOperator::new(vec![i], f));
        }
    }
    LocalHamiltonian::new(graph.clone(), terms)
}

/// `J sum S.S + sum_i h_i S^z_i`.
pub fn heisenberg_chain(graph: &SiteGraph, boundary: Boundary, j: f64, fields: &[f64]) -> Result<LocalHamiltonian, LatticeError> {
    let n = graph.n_sites();
    let ex = spin_exchange();
    let mut terms: Vec<LocalOperator> = bonds(n, boundary).into_iter().map(|b| LocalOperator::new(b, ex.scale_real(j))).collect();
    for (i, &h) in fields.iter().enumerate().take(n) {
        if h != 0.0 {
            terms.push(LocalOperator::new(vec![i], pauli::z().scale_real(0.5 * h)));
        }
    }
    LocalHamiltonian::new(graph.clone(), terms)
}

/// `J sum (XX + YY)/2`.
pub fn xx_chain(graph: &SiteGraph, boundary: Boundary, j: f64) -> Result<LocalHamiltonian, LatticeError> {
    let ff = flip_flop();
    let terms = bonds(graph.n_sites(), boundary).into_iter().map(|b| LocalOperator::new(b, ff.scale_real(j))).collect();
    LocalHamiltonian::new(graph.clone(), terms)
}

/// Hermitian matrix with independent complex Gaussian entries, scaled to unit
/// operator norm.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, real: bool, rng: &mut R) -> Operator {
    let mut g = |_: usize, _: usize| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if real { 0.0 } else { rng.sample(StandardNormal) };
        c64::new(re, im)
    };
    let m = Operator::from_fn(dim, &mut g);
    let h = m.hermitian_part();
    let n = h.operator_norm().unwrap_or(1.0).max(1e-300);
    h.scale_real(1.0 / n)
}

/// Random nearest-neighbour model: a unit-norm random Hermitian term on each
/// bond and a random single-site term on each site.
pub fn random_local_chain<R: Rng + ?Sized>(graph: &SiteGraph, boundary: Boundary, field_scale: f64, rng: &mut R) -> Result<LocalHamiltonian, LatticeError> {
    let n = graph.n_sites();
    let mut terms: Vec<LocalOperator> = bonds(n, boundary).into_iter().map(|b| LocalOperator::new(b, random_hermitian(4, false, rng))).collect();
    for i in 0..n {
        terms.push(LocalOperator::new(vec![i], random_hermitian(2, false, rng).scale_real(field_scale)));
    }
    LocalHamiltonian::new(graph.clone(), terms)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    IsingZz,
    Heisenberg,
    FieldX,
    FieldZ,
    Hopping,
    HubbardU,
    Number,
}

impl Template {
    fn is_bond(self) -> bool {
        matches!(self, Template::IsingZz | Template::Heisenberg | Template::Hopping)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub template: Template,
    #[serde(default)]
    pub coefficient: Option<f64>,
    /// One coefficient per placement, overriding `coefficient`.
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
    /// Explicit placements (sites for on-site templates, pairs for bonds).
    #[serde(default)]
    pub on: Option<Vec<Vec<usize>>>,
}

/// Model file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n_sites: usize,
    #[serde(default = "default_kind")]
    pub kind: SiteKind,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    /// Adds a singleton edge per site.
    #[serde(default = "default_true")]
    pub site_edges: bool,
    /// Fermions only: two modes (up, down) per site.
    #[serde(default)]
    pub spinful: bool,
    pub terms: Vec<TermSpec>,
}

fn default_kind() -> SiteKind {
    SiteKind::Spin
}
fn default_boundary() -> Boundary {
    Boundary::Open
}
fn default_true() -> bool {
    true
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self, LatticeError> {
        serde_json::from_str(text).map_err(|e| LatticeError::ModelParse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LatticeError> {
        let text = std::fs::read_to_string(path).map_err(|e| LatticeError::ModelIo(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn modes_per_site(&self) -> usize {
        if self.kind == SiteKind::Fermion && self.spinful {
            2
        } else {
            1
        }
    }

    pub fn graph(&self) -> Result<SiteGraph, LatticeError> {
        let n = self.n_sites;
        if n == 0 {
            return Err(LatticeError::EmptyGraph);
        }
        let m = self.modes_per_site();
        let modes = |i: usize| -> Vec<usize> { (0..m).map(|s| i * m + s).collect() };
        let mut edges: Vec<Vec<usize>> = bonds(n, self.boundary)
            .into_iter()
            .map(|b| b.iter().flat_map(|&i| modes(i)).collect())
            .collect();
        if self.site_edges || n == 1 || m == 2 {
            edges.extend((0..n).map(modes));
        }
        let mut extra = Vec::new();
        for t in &self.terms {
            if let Some(on) = &t.on {
                for p in on {
                    let e: Vec<usize> = p.iter().flat_map(|&i| modes(i)).collect();
                    if !edges.iter().any(|x| e.iter().all(|s| x.contains(s))) {
                        extra.push(e);
                    }
                }
            }
        }
        edges.extend(extra);
        SiteGraph::new(vec![2; n * m], self.kind, edges)
    }

    pub fn build(&self) -> Result<LocalHamiltonian, LatticeError> {
        let graph = self.graph()?;
        let n = self.n_sites;
        let mut terms = Vec::new();
        for t in &self.terms {
            let placements: Vec<Vec<usize>> = match &t.on {
                Some(on) => on.clone(),
                None if t.template.is_bond() => bonds(n, self.boundary),
                None => (0..n).map(|i| vec![i]).collect(),
            };
            let coeffs: Vec<f64> = match (&t.coefficients, t.coefficient) {
                (Some(c), _) => {
                    if c.len() != placements.len() {
                        return Err(LatticeError::ModelParse(format!(
                            "{:?}: {} coefficients for {} placements",
                            t.template,
                            c.len(),
                            placements.len()
                        )));
                    }
                    c.clone()
                }
                (None, Some(c)) => vec![c; placements.len()],
                (None, None) => vec![1.0; placements.len()],
            };
            for (p, &c) in placements.iter().zip(&coeffs) {
                for p in p {
                    if *p >= n {
                        return Err(LatticeError::SiteOutOfRange { site: *p, n_sites: n });
                    }
                }
                terms.extend(self.place(t.template, p, c)?);
            }
        }
        LocalHamiltonian::new(graph, terms)
    }

    fn place(&self, template: Template, p: &[usize], c: f64) -> Result<Vec<LocalOperator>, LatticeError> {
        let spin = self.kind == SiteKind::Spin;
        let wrong_arity = || LatticeError::ModelParse(format!("{template:?} placed on {p:?}"));
        let pair = |p: &[usize]| -> Result<Vec<usize>, LatticeError> {
            if p.len() != 2 || p[0] == p[1] {
                return Err(wrong_arity());
            }
            let mut v = p.to_vec();
            v.sort_unstable();
            Ok(v)
        };
        let unsupported = || LatticeError::UnsupportedTemplate { template: format!("{template:?}"), kind: format!("{:?}", self.kind) };
        Ok(match template {
            Template::IsingZz if spin => vec![LocalOperator::new(pair(p)?, pauli::z().kron(&pauli::z()).scale_real(c))],
            Template::Heisenberg if spin => vec![LocalOperator::new(pair(p)?, spin_exchange().scale_real(c))],
            Template::FieldX if spin && p.len() == 1 => vec![LocalOperator::new(p.to_vec(), pauli::x().scale_real(c))],
            Template::FieldZ if spin && p.len() == 1 => vec![LocalOperator::new(p.to_vec(), pauli::z().scale_real(c))],
            Template::Hopping if spin => vec![LocalOperator::new(pair(p)?, flip_flop().scale_real(c))],
            Template::Hopping => {
                let q = pair(p)?;
                if self.spinful {
                    (0..2).map(|s| LocalOperator::new(vec![2 * q[0] + s, 2 * q[1] + s], hopping_pair().scale_real(c))).collect()
                } else {
                    vec![LocalOperator::new(q, hopping_pair().scale_real(c))]
                }
            }
            Template::HubbardU if !spin && self.spinful && p.len() == 1 => {
                vec![LocalOperator::new(vec![2 * p[0], 2 * p[0] + 1], density_density().scale_real(c))]
            }
            Template::Number if !spin && p.len() == 1 => {
                let m = self.modes_per_site();
                (0..m).map(|s| LocalOperator::new(vec![m * p[0] + s], pauli::number().scale_real(c))).collect()
            }
            Template::FieldX | Template::FieldZ | Template::Number if p.len() != 1 => return Err(wrong_arity()),
            _ => return Err(unsupported()),
        })
    }
}
