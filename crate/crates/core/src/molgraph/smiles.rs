//! SMILES subset parser.
//!
//! Supported: organic-subset atoms, bracket atoms over the supported
//! alphabet with hydrogen counts and charges, bonds `- = # :` (and the
//! directional `/ \` read as single), branches, ring closures (`1`..`9`,
//! `%nn`) and lowercase aromatic atoms. Chirality markers and atom classes
//! are accepted and dropped. Aromaticity is taken from the input as written.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{Atom, Bond, BondOrder, MolGraph};
use crate::elements::{idx, ElementTable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES")]
    Empty,
    #[error("unbalanced branch at position {0}")]
    UnbalancedBranch(usize),
    #[error("ring bond {0} is never closed")]
    UnclosedRing(u32),
    #[error("invalid ring bond {0} at position {1}")]
    InvalidRing(u32, usize),
    #[error("unsupported element `{0}`")]
    UnsupportedElement(String),
    #[error("valence violation on atom {0} (`{1}`)")]
    Valence(usize, String),
    #[error("disconnected input (multiple fragments)")]
    Disconnected,
    #[error("malformed SMILES at position {pos}: {msg}")]
    Malformed { pos: usize, msg: &'static str },
}

fn malformed(pos: usize, msg: &'static str) -> SmilesError {
    SmilesError::Malformed { pos, msg }
}

fn base_valences(element: usize) -> &'static [u32] {
    match element {
        idx::C => &[4],
        idx::N => &[3],
        idx::O => &[2],
        idx::P => &[3, 5],
        idx::S => &[2, 4, 6],
        _ => &[1],
    }
}

/// Allowed valences after the formal-charge adjustment: carbon loses one
/// bond per unit of charge, heteroatoms gain one per positive unit.
fn allowed_valences(element: usize, charge: i8) -> Vec<u32> {
    base_valences(element)
        .iter()
        .filter_map(|&v| {
            let v = i32::try_from(v).ok()?;
            let adj = if element == idx::C {
                v - i32::from(charge).abs()
            } else {
                v + i32::from(charge)
            };
            u32::try_from(adj).ok()
        })
        .collect()
}

struct PendingAtom {
    atom: Atom,
    bracket: bool,
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<PendingAtom>,
    bonds: Vec<Bond>,
    rings: BTreeMap<u32, (usize, Option<BondOrder>, usize)>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn add_bond(&mut self, a: usize, b: usize, explicit: Option<BondOrder>, pos: usize) -> Result<(), SmilesError> {
        if a == b {
            return Err(malformed(pos, "self bond"));
        }
        if self
            .bonds
            .iter()
            .any(|bd| (bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
        {
            return Err(malformed(pos, "duplicate bond"));
        }
        let both_aromatic = self.atoms[a].atom.aromatic && self.atoms[b].atom.aromatic;
        let order = match explicit {
            Some(BondOrder::Aromatic) if !both_aromatic => {
                return Err(malformed(pos, "aromatic bond between non-aromatic atoms"))
            }
            Some(o) => o,
            None if both_aromatic => BondOrder::Aromatic,
            None => BondOrder::Single,
        };
        self.bonds.push(Bond { a, b, order });
        Ok(())
    }

    fn parse_bond(&mut self) -> Option<BondOrder> {
        let order = match self.peek()? {
            b'-' | b'/' | b'\\' => BondOrder::Single,
            b'=' => BondOrder::Double,
            b'#' => BondOrder::Triple,
            b':' => BondOrder::Aromatic,
            _ => return None,
        };
        self.pos += 1;
        Some(order)
    }

    fn organic_atom(&mut self) -> Result<Option<PendingAtom>, SmilesError> {
        let c = match self.peek() {
            Some(c) => c,
            None => return Ok(None),
        };
        let next = self.bytes.get(self.pos + 1).copied();
        let (element, aromatic, len) = match c {
            b'C' if next == Some(b'l') => (idx::CL, false, 2),
            b'B' if next == Some(b'r') => (idx::BR, false, 2),
            b'C' => (idx::C, false, 1),
            b'N' => (idx::N, false, 1),
            b'O' => (idx::O, false, 1),
            b'P' => (idx::P, false, 1),
            b'S' => (idx::S, false, 1),
            b'F' => (idx::F, false, 1),
            b'I' => (idx::I, false, 1),
            b'c' => (idx::C, true, 1),
            b'n' => (idx::N, true, 1),
            b'o' => (idx::O, true, 1),
            b'p' => (idx::P, true, 1),
            b's' => (idx::S, true, 1),
            b'B' | b'b' => return Err(SmilesError::UnsupportedElement("B".into())),
            b'*' => return Err(SmilesError::UnsupportedElement("*".into())),
            _ => return Ok(None),
        };
        self.pos += len;
        Ok(Some(PendingAtom {
            atom: Atom {
                element,
                charge: 0,
                aromatic,
                hydrogens: 0,
            },
            bracket: false,
        }))
    }

    fn read_number(&mut self) -> Option<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if start == self.pos {
            None
        } else {
            self.text[start..self.pos].parse().ok()
        }
    }

    fn bracket_atom(&mut self) -> Result<PendingAtom, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        if self.read_number().is_some() {
            return Err(malformed(open, "isotope labels are not supported"));
        }
        let sym_start = self.pos;
        let aromatic;
        match self.peek() {
            Some(c) if c.is_ascii_uppercase() => {
                aromatic = false;
                self.pos += 1;
                while matches!(self.peek(), Some(c) if c.is_ascii_lowercase()) {
                    self.pos += 1;
                }
            }
            Some(c) if c.is_ascii_lowercase() => {
                aromatic = true;
                self.pos += 1;
                while matches!(self.peek(), Some(c) if c.is_ascii_lowercase()) {
                    self.pos += 1;
                }
            }
            _ => return Err(malformed(self.pos, "expected element symbol")),
        }
        let raw = &self.text[sym_start..self.pos];
        let element = if aromatic {
            match raw {
                "c" => idx::C,
                "n" => idx::N,
                "o" => idx::O,
                "p" => idx::P,
                "s" => idx::S,
                _ => return Err(SmilesError::UnsupportedElement(raw.to_string())),
            }
        } else {
            ElementTable::index_of(raw)
                .ok_or_else(|| SmilesError::UnsupportedElement(raw.to_string()))?
        };
        while self.peek() == Some(b'@') {
            self.pos += 1;
        }
        let mut hydrogens = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            hydrogens = match self.read_number() {
                Some(n) => u8::try_from(n).map_err(|_| malformed(self.pos, "hydrogen count"))?,
                None => 1,
            };
        }
        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.read_number() {
                charge = unit * i32::try_from(n).unwrap_or(i32::MAX);
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
            }
        }
        if self.peek() == Some(b':') {
            self.pos += 1;
            if self.read_number().is_none() {
                return Err(malformed(self.pos, "atom class"));
            }
        }
        if self.peek() != Some(b']') {
            return Err(malformed(self.pos, "unterminated bracket atom"));
        }
        self.pos += 1;
        let charge = i8::try_from(charge)
            .ok()
            .filter(|c| c.abs() <= 4)
            .ok_or_else(|| malformed(open, "formal charge out of range"))?;
        Ok(PendingAtom {
            atom: Atom {
                element,
                charge,
                aromatic,
                hydrogens,
            },
            bracket: true,
        })
    }

    fn run(mut self) -> Result<MolGraph, SmilesError> {
        let mut prev: Option<usize> = None;
        let mut branches: Vec<(Option<usize>, usize)> = Vec::new();
        let mut pending_bond: Option<(BondOrder, usize)> = None;

        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            let here = self.pos;
            match c {
                b'(' => {
                    if prev.is_none() || pending_bond.is_some() {
                        return Err(SmilesError::UnbalancedBranch(here));
                    }
                    branches.push((prev, here));
                    self.pos += 1;
                }
                b')' => {
                    if pending_bond.is_some() {
                        return Err(malformed(here, "bond without atom"));
                    }
                    let (p, _) = branches.pop().ok_or(SmilesError::UnbalancedBranch(here))?;
                    prev = p;
                    self.pos += 1;
                }
                b'.' => return Err(SmilesError::Disconnected),
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if pending_bond.is_some() || prev.is_none() {
                        return Err(malformed(here, "misplaced bond"));
                    }
                    let order = self.parse_bond().expect("bond symbol");
                    pending_bond = Some((order, here));
                }
                b'0'..=b'9' | b'%' => {
                    let atom = prev.ok_or_else(|| malformed(here, "ring bond before any atom"))?;
                    let label = if c == b'%' {
                        self.pos += 1;
                        let start = self.pos;
                        for _ in 0..2 {
                            if !matches!(self.peek(), Some(b'0'..=b'9')) {
                                return Err(malformed(here, "expected two digits after %"));
                            }
                            self.pos += 1;
                        }
                        self.text[start..self.pos].parse::<u32>().expect("digits")
                    } else {
                        self.pos += 1;
                        u32::from(c - b'0')
                    };
                    let bond_here = pending_bond.take().map(|(o, _)| o);
                    match self.rings.remove(&label) {
                        Some((other, bond_there, _)) => {
                            let order = match (bond_there, bond_here) {
                                (Some(a), Some(b)) if a != b => {
                                    return Err(SmilesError::InvalidRing(label, here))
                                }
                                (a, b) => a.or(b),
                            };
                            self.add_bond(other, atom, order, here)
                                .map_err(|_| SmilesError::InvalidRing(label, here))?;
                        }
                        None => {
                            self.rings.insert(label, (atom, bond_here, here));
                        }
                    }
                }
                _ => {
                    let atom = if c == b'[' {
                        self.bracket_atom()?
                    } else {
                        match self.organic_atom()? {
                            Some(a) => a,
                            None => {
                                return Err(match c {
                                    b'A'..=b'Z' | b'a'..=b'z' => SmilesError::UnsupportedElement(
                                        (c as char).to_string(),
                                    ),
                                    _ => malformed(here, "unexpected character"),
                                })
                            }
                        }
                    };
                    let id = self.atoms.len();
                    self.atoms.push(atom);
                    if let Some(p) = prev {
                        let explicit = pending_bond.take().map(|(o, _)| o);
                        self.add_bond(p, id, explicit, here)?;
                    }
                    prev = Some(id);
                }
            }
        }
        if let Some(&(_, pos)) = branches.last() {
            return Err(SmilesError::UnbalancedBranch(pos));
        }
        if let Some((&label, _)) = self.rings.iter().next() {
            return Err(SmilesError::UnclosedRing(label));
        }
        if let Some((_, pos)) = pending_bond {
            return Err(malformed(pos, "dangling bond"));
        }
        if self.atoms.is_empty() {
            return Err(SmilesError::Empty);
        }
        self.assign_hydrogens()?;
        let atoms = self.atoms.into_iter().map(|p| p.atom).collect();
        let graph = MolGraph::from_parts(atoms, self.bonds);
        if !graph.is_connected() {
            return Err(SmilesError::Disconnected);
        }
        Ok(graph)
    }

    fn assign_hydrogens(&mut self) -> Result<(), SmilesError> {
        let mut bond_valence = vec![0u32; self.atoms.len()];
        let mut has_aromatic_bond = vec![false; self.atoms.len()];
        for b in &self.bonds {
            for end in [b.a, b.b] {
                bond_valence[end] += b.order.valence();
                if b.order == BondOrder::Aromatic {
                    has_aromatic_bond[end] = true;
                }
            }
        }
        for (i, p) in self.atoms.iter_mut().enumerate() {
            let symbol = crate::elements::SYMBOLS[p.atom.element];
            let allowed = allowed_valences(p.atom.element, p.atom.charge);
            let max = allowed.iter().copied().max().unwrap_or(0);
            let used = bond_valence[i];
            if p.bracket {
                if used + u32::from(p.atom.hydrogens) > max {
                    return Err(SmilesError::Valence(i, symbol.to_string()));
                }
                continue;
            }
            let implicit = if p.atom.aromatic && has_aromatic_bond[i] {
                // Only the lowest valence applies to aromatic atoms; one bond
                // order unit is taken by the delocalized system.
                let lowest = allowed[0];
                if used < lowest {
                    lowest - used - 1
                } else if used <= max {
                    0
                } else {
                    return Err(SmilesError::Valence(i, symbol.to_string()));
                }
            } else {
                match allowed.iter().find(|&&v| v >= used) {
                    Some(&v) => v - used,
                    None => return Err(SmilesError::Valence(i, symbol.to_string())),
                }
            };
            p.atom.hydrogens = implicit as u8;
        }
        Ok(())
    }
}

pub fn parse_smiles(text: &str) -> Result<MolGraph, SmilesError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(SmilesError::Empty);
    }
    Parser {
        text,
        bytes: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        rings: BTreeMap::new(),
    }
    .run()
}
