//! Molecular graphs, covariates and feature vectors.

mod covariates;
mod fingerprint;
mod smiles;

pub(crate) use covariates::parse_bool;
pub use covariates::{CovariateError, Covariates, Instrument, PrecursorType, MAX_COLLISION_ENERGY};
pub use fingerprint::{featurize, FeatureConfig, FeatureVector, COVARIATE_WIDTH};
pub use smiles::{parse_smiles, SmilesError};

use thiserror::Error;

use crate::elements::{idx, Formula, FormulaError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BondOrder {
    Single,
    Aromatic,
    Double,
    Triple,
}

impl BondOrder {
    pub fn order(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Aromatic => 1.5,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
        }
    }

    /// Contribution to an atom's bonding valence; aromatic bonds count one
    /// and the shared pi electron is accounted for separately.
    pub(crate) fn valence(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Aromatic => 4,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Atom {
    /// Index into [`crate::elements::SYMBOLS`].
    pub element: usize,
    pub charge: i8,
    pub aromatic: bool,
    /// Hydrogens attached to this atom (explicit and implicit).
    pub hydrogens: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MolGraphError {
    #[error("molecule has no hydrogen to remove for [M-H]-")]
    NoHydrogen,
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// Undirected simple graph of heavy atoms (and bracket hydrogens).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolGraph {
    pub(crate) fn from_parts(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Self {
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (bi, b) in bonds.iter().enumerate() {
            adjacency[b.a].push((b.b, bi));
            adjacency[b.b].push((b.a, bi));
        }
        Self {
            atoms,
            bonds,
            adjacency,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    /// `(neighbor, bond index)` pairs of atom `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.element != idx::H).count()
    }

    pub fn is_connected(&self) -> bool {
        if self.atoms.is_empty() {
            return true;
        }
        self.components(&vec![false; self.bonds.len()]).len() == 1
    }

    /// Connected components when the bonds flagged in `removed` are cut.
    /// Components are listed in order of their lowest atom index.
    pub fn components(&self, removed: &[bool]) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(a) = stack.pop() {
                comp.push(a);
                for &(n, bi) in &self.adjacency[a] {
                    if !removed[bi] && !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Flags the bonds whose removal disconnects the graph (acyclic edges).
    pub fn bridges(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let mut is_bridge = vec![false; self.bonds.len()];
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // (atom, bond used to enter, next adjacency slot)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(&mut (v, parent_bond, ref mut next)) = stack.last_mut() {
                if *next < self.adjacency[v].len() {
                    let (w, bi) = self.adjacency[v][*next];
                    *next += 1;
                    if bi == parent_bond {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        stack.push((w, bi, 0));
                    } else {
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(u, _, _)) = stack.last() {
                        low[u] = low[u].min(low[v]);
                        if low[v] > disc[u] {
                            is_bridge[parent_bond] = true;
                        }
                    }
                }
            }
        }
        is_bridge
    }

    /// Formula of the atoms listed in `atoms`, including their hydrogens.
    pub fn fragment_formula(&self, atoms: &[usize]) -> Result<Formula, FormulaError> {
        let mut f = Formula::empty();
        for &i in atoms {
            let a = &self.atoms[i];
            f.add_count(a.element, 1)?;
            f.add_count(idx::H, u32::from(a.hydrogens))?;
        }
        Ok(f)
    }
}

pub fn molecular_formula(g: &MolGraph) -> Result<Formula, FormulaError> {
    let all: Vec<usize> = (0..g.atoms.len()).collect();
    g.fragment_formula(&all)
}

/// Formula of the charged precursor ion for the given adduct mode.
pub fn precursor_formula(g: &MolGraph, t: PrecursorType) -> Result<Formula, MolGraphError> {
    let m = molecular_formula(g)?;
    t.apply(&m)
}
