//! Fixed-magnetisation subspaces of qubit registers.

use faer::c64;

/// Computational basis states with a fixed number of `1` digits, in
/// increasing index order.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    n_sites: usize,
    states: Vec<usize>,
}

impl SectorBasis {
    pub fn fixed_weight(n_sites: usize, ones: usize) -> Self {
        let states = (0..1usize << n_sites).filter(|x| x.count_ones() as usize == ones).collect();
        Self { n_sites, states }
    }

    /// Zero-magnetisation sector of an even-length register.
    pub fn half_filling(n_sites: usize) -> Self {
        Self::fixed_weight(n_sites, n_sites / 2)
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn index_of(&self, full_index: usize) -> Option<usize> {
        self.states.binary_search(&full_index).ok()
    }

    /// Sector amplitudes to a full-register vector.
    pub fn lift(&self, amps: &[c64]) -> Vec<c64> {
        let mut v = vec![c64::new(0.0, 0.0); 1 << self.n_sites];
        for (&s, &a) in self.states.iter().zip(amps) {
            v[s] = a;
        }
        v
    }

    /// Full-register vector to sector amplitudes, with the weight left outside.
    pub fn project(&self, full: &[c64]) -> (Vec<c64>, f64) {
        let amps: Vec<c64> = self.states.iter().map(|&s| full[s]).collect();
        let inside: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        let total: f64 = full.iter().map(|z| z.norm_sqr()).sum();
        (amps, (total - inside).max(0.0))
    }

    /// Value of `digit(site)` (0 or 1) for each sector state; site 0 is the
    /// most significant bit.
    pub fn digit(&self, site: usize) -> Vec<u8> {
        let shift = self.n_sites - 1 - site;
        self.states.iter().map(|&s| ((s >> shift) & 1) as u8).collect()
    }
}
