//! Exact-diagonalization laboratory for equilibration, thermalisation and
//! locality statements on small lattice systems.

pub mod lattice;

pub use faer::c64;
pub mod spectral;
pub mod dynamics;
pub mod equilibration;
pub mod ensembles;
pub mod rng;
pub mod typicality;
pub mod correlations;
pub mod diagnostics;
