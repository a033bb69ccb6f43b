//! Hashed circular fingerprints plus covariate encoding.

use super::{Covariates, Instrument, MolGraph, PrecursorType, MAX_COLLISION_ENERGY};
use crate::elements::idx;

/// Scaled energy, one-hot precursor type, one-hot instrument, isotope flag.
pub const COVARIATE_WIDTH: usize = 1 + PrecursorType::ALL.len() + Instrument::ALL.len() + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureConfig {
    pub radius: u32,
    pub bits: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            radius: 2,
            bits: 2048,
        }
    }
}

impl FeatureConfig {
    pub fn len(&self) -> usize {
        self.bits + COVARIATE_WIDTH
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    bits: usize,
}

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn fingerprint(&self) -> &[f64] {
        &self.values[..self.bits]
    }

    pub fn covariates(&self) -> &[f64] {
        &self.values[self.bits..]
    }

    /// `(index, value)` of every nonzero entry, ascending.
    pub fn nonzeros(&self) -> Vec<(usize, f64)> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect()
    }

    pub fn from_values(values: Vec<f64>, bits: usize) -> Self {
        assert!(bits <= values.len());
        Self { values, bits }
    }
}

// FNV-1a over 64-bit words; stable across platforms and toolchains.
fn fnv1a(words: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for byte in w.to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn atom_invariants(g: &MolGraph) -> Vec<u64> {
    let bridges = g.bridges();
    g.atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut heavy_degree = 0u64;
            let mut h = u64::from(a.hydrogens);
            let mut in_ring = false;
            for &(n, bi) in g.neighbors(i) {
                if g.atoms()[n].element == idx::H {
                    h += 1;
                } else {
                    heavy_degree += 1;
                }
                in_ring |= !bridges[bi];
            }
            fnv1a(&[
                a.element as u64,
                heavy_degree,
                h,
                (i64::from(a.charge) + 8) as u64,
                u64::from(a.aromatic),
                u64::from(in_ring),
            ])
        })
        .collect()
}

/// Environment identifiers for radii `0..=radius`, per atom.
pub(crate) fn environment_ids(g: &MolGraph, radius: u32) -> Vec<u64> {
    let mut current = atom_invariants(g);
    let mut all = current.clone();
    for round in 1..=radius {
        let next: Vec<u64> = (0..current.len())
            .map(|i| {
                let mut nbrs: Vec<(u64, u64)> = g
                    .neighbors(i)
                    .iter()
                    .map(|&(n, bi)| (g.bonds()[bi].order.code(), current[n]))
                    .collect();
                nbrs.sort_unstable();
                let mut words = Vec::with_capacity(2 + 2 * nbrs.len());
                words.push(u64::from(round));
                words.push(current[i]);
                for (b, n) in nbrs {
                    words.push(b);
                    words.push(n);
                }
                fnv1a(&words)
            })
            .collect();
        all.extend_from_slice(&next);
        current = next;
    }
    all
}

pub fn featurize(g: &MolGraph, c: &Covariates, cfg: &FeatureConfig) -> FeatureVector {
    let mut values = vec![0.0; cfg.len()];
    if cfg.bits > 0 {
        for id in environment_ids(g, cfg.radius) {
            values[(id % cfg.bits as u64) as usize] = 1.0;
        }
    }
    let cov = &mut values[cfg.bits..];
    cov[0] = c.collision_energy / MAX_COLLISION_ENERGY;
    cov[1 + c.precursor_type.index()] = 1.0;
    cov[1 + PrecursorType::ALL.len() + c.instrument.index()] = 1.0;
    cov[COVARIATE_WIDTH - 1] = if c.has_isotopic_peaks { 1.0 } else { 0.0 };
    FeatureVector {
        values,
        bits: cfg.bits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn fv(smiles: &str, c: &Covariates) -> FeatureVector {
        featurize(&parse_smiles(smiles).unwrap(), c, &FeatureConfig::default())
    }

    #[test]
    fn deterministic() {
        let c = Covariates::default();
        assert_eq!(fv("CC(=O)Nc1ccc(O)cc1", &c), fv("CC(=O)Nc1ccc(O)cc1", &c));
    }

    #[test]
    fn atom_order_does_not_matter() {
        let c = Covariates::default();
        assert_eq!(fv("CCO", &c), fv("OCC", &c));
        assert_eq!(fv("c1ccccc1O", &c), fv("Oc1ccccc1", &c));
    }

    #[test]
    fn energy_only_touches_covariates() {
        let low = Covariates::default().with_energy(0.0).unwrap();
        let high = Covariates::default().with_energy(200.0).unwrap();
        let a = fv("C", &low);
        let b = fv("C", &high);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.covariates(), b.covariates());
        assert_eq!(a.covariates()[0], 0.0);
        assert_eq!(b.covariates()[0], 1.0);
    }

    #[test]
    fn benzene_differs_from_cyclohexane() {
        let c = Covariates::default();
        let a = fv("c1ccccc1", &c);
        let b = fv("C1CCCCC1", &c);
        let differing = a
            .fingerprint()
            .iter()
            .zip(b.fingerprint())
            .filter(|(x, y)| x != y)
            .count();
        assert!(differing >= 1);
    }

    #[test]
    fn covariate_block_layout() {
        let c = Covariates::new(100.0, PrecursorType::Deprotonated, Instrument::VelosOrbitrap, true).unwrap();
        let v = fv("CCO", &c);
        assert_eq!(v.len(), 2048 + COVARIATE_WIDTH);
        assert_eq!(v.covariates(), &[0.5, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        assert!(v.fingerprint().iter().all(|&x| x == 0.0 || x == 1.0));
    }

    #[test]
    fn length_constant_for_config() {
        let cfg = FeatureConfig { radius: 1, bits: 64 };
        let c = Covariates::default();
        for s in ["C", "CCO", "c1ccccc1", "Cn1cnc2c1c(=O)n(C)c(=O)n2C"] {
            assert_eq!(featurize(&parse_smiles(s).unwrap(), &c, &cfg).len(), 64 + COVARIATE_WIDTH);
        }
    }
}
