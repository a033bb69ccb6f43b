//! Element masses and molecular formulas.
//!
//! A [`Formula`] is a vector of atom counts over a fixed ten-element
//! alphabet. Counts are stored as `u8`; molecules in scope stay well below
//! 1000 Da, so 255 atoms of a single element is never reached in practice and
//! overflowing arithmetic is reported as an error.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Number of supported elements.
pub const N_ELEMENTS: usize = 10;

/// Supported element symbols, in storage order.
pub const SYMBOLS: [&str; N_ELEMENTS] = ["C", "H", "N", "O", "P", "S", "F", "Cl", "Br", "I"];

/// Monoisotopic masses (Da), aligned with [`SYMBOLS`].
pub const MONOISOTOPIC_MASSES: [f64; N_ELEMENTS] = [
    12.0,
    1.007825,
    14.003074,
    15.994915,
    30.973762,
    31.972071,
    18.998403,
    34.968853,
    78.918338,
    126.904473,
];

/// Storage indices of the individual elements.
pub mod idx {
    pub const C: usize = 0;
    pub const H: usize = 1;
    pub const N: usize = 2;
    pub const O: usize = 3;
    pub const P: usize = 4;
    pub const S: usize = 5;
    pub const F: usize = 6;
    pub const CL: usize = 7;
    pub const BR: usize = 8;
    pub const I: usize = 9;
}

/// Mass difference between ¹³C and ¹²C.
pub const ISOTOPE_SPACING: f64 = 1.003355;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("empty formula string")]
    Empty,
    #[error("unsupported element symbol `{0}`")]
    UnsupportedElement(String),
    #[error("zero multiplicity for `{0}`")]
    ZeroMultiplicity(String),
    #[error("malformed formula near byte {0}")]
    Malformed(usize),
    #[error("element count exceeds 255")]
    Overflow,
    #[error("subtraction underflow: {0} is not a subformula of {1}")]
    Underflow(Formula, Formula),
}

/// The element mass table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementTable {
    masses: [f64; N_ELEMENTS],
}

impl Default for ElementTable {
    fn default() -> Self {
        Self::standard()
    }
}

impl ElementTable {
    pub const fn standard() -> Self {
        Self {
            masses: MONOISOTOPIC_MASSES,
        }
    }

    pub fn symbols(&self) -> &'static [&'static str; N_ELEMENTS] {
        &SYMBOLS
    }

    pub fn masses(&self) -> &[f64; N_ELEMENTS] {
        &self.masses
    }

    pub fn mass_of(&self, element: usize) -> f64 {
        self.masses[element]
    }

    pub fn index_of(symbol: &str) -> Option<usize> {
        SYMBOLS.iter().position(|s| *s == symbol)
    }

    /// Two-column `symbol<TAB>mass` listing.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("symbol\tmonoisotopic_mass\n");
        for (s, m) in SYMBOLS.iter().zip(self.masses.iter()) {
            out.push_str(&format!("{s}\t{m:.6}\n"));
        }
        out
    }
}

/// Atom counts over the supported alphabet.
///
/// The derived `Ord` is lexicographic over counts in storage order; it is
/// only used as a deterministic tie-breaker. The chemical partial order is
/// [`Formula::is_subformula_of`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Formula {
    counts: [u8; N_ELEMENTS],
}

impl Formula {
    pub const fn empty() -> Self {
        Self {
            counts: [0; N_ELEMENTS],
        }
    }

    pub const fn from_counts(counts: [u8; N_ELEMENTS]) -> Self {
        Self { counts }
    }

    /// Build from `(symbol, count)` pairs.
    pub fn from_pairs(pairs: &[(&str, u32)]) -> Result<Self, FormulaError> {
        let mut f = Self::empty();
        for &(sym, n) in pairs {
            let i = ElementTable::index_of(sym)
                .ok_or_else(|| FormulaError::UnsupportedElement(sym.to_string()))?;
            f.add_count(i, n)?;
        }
        Ok(f)
    }

    pub fn counts(&self) -> &[u8; N_ELEMENTS] {
        &self.counts
    }

    pub fn count(&self, element: usize) -> u32 {
        u32::from(self.counts[element])
    }

    pub fn set_count(&mut self, element: usize, n: u8) {
        self.counts[element] = n;
    }

    pub(crate) fn add_count(&mut self, element: usize, n: u32) -> Result<(), FormulaError> {
        let total = u32::from(self.counts[element]) + n;
        self.counts[element] = u8::try_from(total).map_err(|_| FormulaError::Overflow)?;
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    pub fn atom_count(&self) -> u32 {
        self.counts.iter().map(|&c| u32::from(c)).sum()
    }

    /// `self ≤ other` elementwise.
    pub fn is_subformula_of(&self, other: &Formula) -> bool {
        self.counts
            .iter()
            .zip(other.counts.iter())
            .all(|(a, b)| a <= b)
    }

    pub fn checked_add(&self, other: &Formula) -> Result<Formula, FormulaError> {
        let mut out = *self;
        for (i, &c) in other.counts.iter().enumerate() {
            out.add_count(i, u32::from(c))?;
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Formula) -> Result<Formula, FormulaError> {
        if !other.is_subformula_of(self) {
            return Err(FormulaError::Underflow(*other, *self));
        }
        let mut out = *self;
        for (o, &c) in out.counts.iter_mut().zip(other.counts.iter()) {
            *o -= c;
        }
        Ok(out)
    }

    /// Theoretical (monoisotopic) mass against the standard table.
    pub fn mass(&self) -> f64 {
        monoisotopic_mass(self, &ElementTable::standard())
    }

    /// Ring-and-double-bond equivalents, `C − (H+X)/2 + (N+P)/2 + 1`.
    pub fn rdbe(&self) -> f64 {
        let c = f64::from(self.count(idx::C));
        let monovalent = self.count(idx::H)
            + self.count(idx::F)
            + self.count(idx::CL)
            + self.count(idx::BR)
            + self.count(idx::I);
        let trivalent = self.count(idx::N) + self.count(idx::P);
        c - f64::from(monovalent) / 2.0 + f64::from(trivalent) / 2.0 + 1.0
    }
}

pub fn monoisotopic_mass(f: &Formula, table: &ElementTable) -> f64 {
    f.counts
        .iter()
        .zip(table.masses.iter())
        .map(|(&c, &m)| f64::from(c) * m)
        .sum()
}

pub fn formula_sub(f: &Formula, g: &Formula) -> Result<Formula, FormulaError> {
    f.checked_sub(g)
}

/// Parse `C8H10N4O2`-style text. Repeated symbols accumulate.
pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    if text.is_empty() {
        return Err(FormulaError::Empty);
    }
    let bytes = text.as_bytes();
    let mut f = Formula::empty();
    let mut pos = 0;
    while pos < bytes.len() {
        let start = pos;
        if !bytes[pos].is_ascii_uppercase() {
            return Err(FormulaError::Malformed(pos));
        }
        pos += 1;
        while pos < bytes.len() && bytes[pos].is_ascii_lowercase() {
            pos += 1;
        }
        let sym = &text[start..pos];
        let element = ElementTable::index_of(sym)
            .ok_or_else(|| FormulaError::UnsupportedElement(sym.to_string()))?;
        let digits_start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        let n = if digits_start == pos {
            1
        } else {
            let n: u32 = text[digits_start..pos]
                .parse()
                .map_err(|_| FormulaError::Overflow)?;
            if n == 0 {
                return Err(FormulaError::ZeroMultiplicity(sym.to_string()));
            }
            n
        };
        f.add_count(element, n)?;
    }
    Ok(f)
}

// Carbon, hydrogen, then the rest alphabetically.
const HILL_ORDER: [usize; N_ELEMENTS] = [
    idx::C,
    idx::H,
    idx::BR,
    idx::CL,
    idx::F,
    idx::I,
    idx::N,
    idx::O,
    idx::P,
    idx::S,
];

pub fn format_formula(f: &Formula) -> String {
    let mut out = String::new();
    for &i in &HILL_ORDER {
        match f.counts[i] {
            0 => {}
            1 => out.push_str(SYMBOLS[i]),
            n => {
                out.push_str(SYMBOLS[i]);
                out.push_str(&n.to_string());
            }
        }
    }
    out
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_formula(self))
    }
}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Formula({})", format_formula(self))
    }
}

impl FromStr for Formula {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}
