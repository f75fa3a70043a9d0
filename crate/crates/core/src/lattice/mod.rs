//! Lattices, local Hamiltonians, states and distance measures.

mod embed;
pub mod fermions;
mod graph;
mod hamiltonian;
pub mod models;
mod operator;
mod povm;
mod sector;
mod states;

pub use embed::{embed_local_operator, embed_sparse, SparseOperator};
pub use graph::{graph_distance, strides, Boundary, SiteGraph, SiteKind};
pub use hamiltonian::{assemble_hamiltonian, expand_to, restricted_hamiltonian, LocalHamiltonian, LocalOperator};
pub use operator::{c, pauli, reconstruct, HermitianEigen, Operator};
pub use povm::{informationally_complete, qubit_sic, restricted_distinguishability, Povm, PovmSet};
pub use sector::SectorBasis;
pub use states::{
    basis_state, bloch_state, compose_regions, covariance, entanglement_entropy, entropy_of_spectrum, fidelity, inner,
    neel_state, norm_sq, normalise, partial_trace, partial_trace_dims, partial_trace_in_basis, product_state,
    sigma_z_on, trace_distance, von_neumann_entropy, EntropyKind, State,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("graph has no sites")]
    EmptyGraph,
    #[error("empty edge or support")]
    EmptyEdge,
    #[error("local dimension must be at least 2 (exactly 2 for fermionic modes)")]
    InvalidLocalDim,
    #[error("site {site} out of range for {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },
    #[error("Hilbert space too large for dense storage")]
    TooLarge,
    #[error("sites of a local operator must be strictly increasing")]
    UnsortedSites,
    #[error("support is not contained in the target sites")]
    NotASubset,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square")]
    NotSquare,
    #[error("operator is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("state is not normalised (trace {trace})")]
    NotNormalised { trace: f64 },
    #[error("operator is not positive (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },
    #[error("term on sites {sites:?} is not covered by any edge")]
    TermOutsideEdges { sites: Vec<usize> },
    #[error("fermionic operator is not parity-even")]
    OddFermionOperator,
    #[error("fermionic reduced states need a region contiguous in mode order")]
    NonContiguousFermionRegion,
    #[error("measurement has no elements")]
    EmptyPovm,
    #[error("measurement elements do not sum to the identity (defect {defect:e})")]
    PovmIncomplete { defect: f64 },
    #[error("regions do not partition the sites")]
    BadPartition,
    #[error("Hamiltonians live on different graphs")]
    GraphMismatch,
    #[error("template {template} is not available for {kind} sites")]
    UnsupportedTemplate { template: String, kind: String },
    #[error("model file: {0}")]
    ModelParse(String),
    #[error("model file: {0}")]
    ModelIo(String),
    #[error("eigensolver did not converge (dimension {dim})")]
    EigenNoConvergence { dim: usize },
}
