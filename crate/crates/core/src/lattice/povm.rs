use super::{pauli, LatticeError, Operator};

/// One measurement: positive elements summing to the identity.
#[derive(Clone, Debug)]
pub struct Povm {
    elements: Vec<Operator>,
}

impl Povm {
    pub fn new(elements: Vec<Operator>) -> Result<Self, LatticeError> {
        let d = elements.first().map(|e| e.dim()).ok_or(LatticeError::EmptyPovm)?;
        let mut sum = Operator::zeros(d);
        for e in &elements {
            if e.dim() != d {
                return Err(LatticeError::DimensionMismatch { expected: d, found: e.dim() });
            }
            if !e.is_hermitian(1e-10) {
                return Err(LatticeError::NotHermitian { defect: e.hermiticity_defect() });
            }
            let min = e.eigvalsh()?.first().copied().unwrap_or(0.0);
            if min < -1e-10 {
                return Err(LatticeError::NotPositive { min_eigenvalue: min });
            }
            sum += e;
        }
        let defect = (&sum - &Operator::identity(d)).max_abs();
        if defect > 1e-10 {
            return Err(LatticeError::PovmIncomplete { defect });
        }
        Ok(Self { elements })
    }

    /// Two-outcome measurement `{P, 1 - P}`.
    pub fn binary(projector: &Operator) -> Result<Self, LatticeError> {
        let d = projector.dim();
        Self::new(vec![projector.clone(), &Operator::identity(d) - projector])
    }

    pub fn elements(&self) -> &[Operator] {
        &self.elements
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }
}

/// A collection of measurements acting on a common (sub)system.
///
/// `sites` records the support in the parent lattice, if any; the elements
/// are then matrices on that support only.
#[derive(Clone, Debug)]
pub struct PovmSet {
    povms: Vec<Povm>,
    sites: Option<Vec<usize>>,
}

impl PovmSet {
    pub fn new(povms: Vec<Povm>, sites: Option<Vec<usize>>) -> Result<Self, LatticeError> {
        let d = povms.first().map(|p| p.dim()).ok_or(LatticeError::EmptyPovm)?;
        if let Some(p) = povms.iter().find(|p| p.dim() != d) {
            return Err(LatticeError::DimensionMismatch { expected: d, found: p.dim() });
        }
        Ok(Self { povms, sites })
    }

    pub fn single(povm: Povm) -> Self {
        Self { povms: vec![povm], sites: None }
    }

    pub fn povms(&self) -> &[Povm] {
        &self.povms
    }

    pub fn sites(&self) -> Option<&[usize]> {
        self.sites.as_deref()
    }

    /// Dimension of the space the elements act on.
    pub fn support_dim(&self) -> usize {
        self.povms[0].dim()
    }

    pub fn total_outcomes(&self) -> usize {
        self.povms.iter().map(|p| p.elements.len()).sum()
    }

    /// Number of distinct elements across all measurements.
    pub fn distinct_elements(&self) -> usize {
        let mut seen: Vec<&Operator> = Vec::new();
        for p in &self.povms {
            for e in &p.elements {
                if !seen.iter().any(|s| (*s - e).frobenius_norm() <= 1e-10) {
                    seen.push(e);
                }
            }
        }
        seen.len()
    }
}

/// `D_M(rho, sigma) = max over measurements of 1/2 sum_k |Tr M_k (rho - sigma)|`.
/// Both states must live on the measurement space.
pub fn restricted_distinguishability(m: &PovmSet, rho: &Operator, sigma: &Operator) -> Result<f64, LatticeError> {
    let d = m.support_dim();
    for s in [rho, sigma] {
        if s.dim() != d {
            return Err(LatticeError::DimensionMismatch { expected: d, found: s.dim() });
        }
    }
    let diff = rho - sigma;
    Ok(m
        .povms
        .iter()
        .map(|p| 0.5 * p.elements.iter().map(|e| e.trace_product(&diff).re.abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Symmetric informationally complete qubit measurement (tetrahedral Bloch
/// vectors).
pub fn qubit_sic() -> Povm {
    let s = (2.0f64).sqrt();
    let dirs = [
        [0.0, 0.0, 1.0],
        [2.0 * s / 3.0, 0.0, -1.0 / 3.0],
        [-s / 3.0, (2.0f64 / 3.0).sqrt(), -1.0 / 3.0],
        [-s / 3.0, -(2.0f64 / 3.0).sqrt(), -1.0 / 3.0],
    ];
    let (x, y, z) = (pauli::x(), pauli::y(), pauli::z());
    let els = dirs
        .iter()
        .map(|n| {
            let mut e = Operator::identity(2);
            e += &x.scale_real(n[0]);
            e += &y.scale_real(n[1]);
            e += &z.scale_real(n[2]);
            e.scale_real(0.25)
        })
        .collect();
    Povm::new(els).expect("tetrahedral measurement is complete")
}

/// Tensor product of single-qubit symmetric measurements over `sites`.
pub fn informationally_complete(sites: &[usize]) -> PovmSet {
    let sic = qubit_sic();
    let mut els = vec![Operator::identity(1)];
    for _ in sites {
        els = els.iter().flat_map(|a| sic.elements().iter().map(move |b| a.kron(b))).collect();
    }
    let p = Povm::new(els).expect("product of complete measurements");
    PovmSet { povms: vec![p], sites: Some(sites.to_vec()) }
}
