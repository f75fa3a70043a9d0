//! Fermionic mode operators through the Jordan-Wigner map.

use super::embed::embed_sparse;
use super::graph::SiteKind;
use super::{pauli, LatticeError, Operator};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeOp {
    Annihilate,
    Create,
}

/// Full-space matrix of `f_x` or `f_x^dagger` on `n_modes` modes:
/// a parity string on modes `< x` followed by the local ladder operator.
pub fn jordan_wigner(mode: usize, n_modes: usize, which: ModeOp) -> Result<Operator, LatticeError> {
    if mode >= n_modes {
        return Err(LatticeError::SiteOutOfRange { site: mode, n_sites: n_modes });
    }
    let local = match which {
        ModeOp::Annihilate => pauli::annihilation(),
        ModeOp::Create => pauli::creation(),
    };
    let mut op = Operator::identity(1);
    for _ in 0..mode {
        op = op.kron(&pauli::z());
    }
    op = op.kron(&local);
    let rest = 1usize << (n_modes - mode - 1);
    Ok(op.kron(&Operator::identity(rest)))
}

/// `f_x^dagger f_y + f_y^dagger f_x` as a local operator on `{x, y}` in the
/// local Jordan-Wigner basis (`x < y`).
pub fn hopping_pair() -> Operator {
    let a = pauli::annihilation();
    let cr = pauli::creation();
    let z = pauli::z();
    // local modes 0, 1: f0 = a (x) 1, f1 = Z (x) a
    let f0 = a.kron(&Operator::identity(2));
    let f1 = z.kron(&a);
    let f0d = cr.kron(&Operator::identity(2));
    let f1d = z.kron(&cr);
    &f0d.matmul(&f1) + &f1d.matmul(&f0)
}

/// `n_x n_y` on `{x, y}`.
pub fn density_density() -> Operator {
    pauli::number().kron(&pauli::number())
}

/// Embeds an even fermionic operator given on `modes` into `n_modes` modes.
pub fn embed_fermionic(n_modes: usize, modes: &[usize], op: &Operator) -> Result<Operator, LatticeError> {
    Ok(embed_sparse(&vec![2; n_modes], SiteKind::Fermion, modes, op)?.to_dense())
}
