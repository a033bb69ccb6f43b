use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::MolGraphError;
use crate::elements::{idx, Formula};

pub const MAX_COLLISION_ENERGY: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CovariateError {
    #[error("collision energy {0} outside [0, 200]")]
    EnergyOutOfRange(String),
    #[error("unsupported precursor type `{0}`")]
    PrecursorType(String),
    #[error("unrecognized boolean `{0}`")]
    Bool(String),
}

/// Ionization mode and adduct composition of the precursor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum PrecursorType {
    /// `[M+H]+`
    #[default]
    Protonated,
    /// `[M-H]-`
    Deprotonated,
}

impl PrecursorType {
    pub const ALL: [PrecursorType; 2] = [PrecursorType::Protonated, PrecursorType::Deprotonated];

    pub fn as_str(self) -> &'static str {
        match self {
            PrecursorType::Protonated => "[M+H]+",
            PrecursorType::Deprotonated => "[M-H]-",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Charge-carrier adjustment applied to a neutral formula.
    pub fn apply(self, neutral: &Formula) -> Result<Formula, MolGraphError> {
        let mut f = *neutral;
        match self {
            PrecursorType::Protonated => f.add_count(idx::H, 1)?,
            PrecursorType::Deprotonated => {
                let h = f.count(idx::H);
                if h == 0 {
                    return Err(MolGraphError::NoHydrogen);
                }
                f.set_count(idx::H, (h - 1) as u8);
            }
        }
        Ok(f)
    }
}

impl fmt::Display for PrecursorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrecursorType {
    type Err = CovariateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| if c == '\u{2212}' { '-' } else { c })
            .filter(|c| !c.is_whitespace())
            .collect();
        match norm.as_str() {
            "[M+H]+" | "M+H" | "[M+H]" => Ok(PrecursorType::Protonated),
            "[M-H]-" | "M-H" | "[M-H]" => Ok(PrecursorType::Deprotonated),
            _ => Err(CovariateError::PrecursorType(s.to_string())),
        }
    }
}

/// Instrument model. Names outside the known set map to `Unknown`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Instrument {
    OrbitrapFusionLumos,
    EliteOrbitrap,
    VelosOrbitrap,
    #[default]
    Unknown,
}

impl Instrument {
    pub const ALL: [Instrument; 4] = [
        Instrument::OrbitrapFusionLumos,
        Instrument::EliteOrbitrap,
        Instrument::VelosOrbitrap,
        Instrument::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Instrument::OrbitrapFusionLumos => "Orbitrap Fusion Lumos",
            Instrument::EliteOrbitrap => "Thermo Finnigan Elite Orbitrap",
            Instrument::VelosOrbitrap => "Thermo Finnigan Velos Orbitrap",
            Instrument::Unknown => "Unknown",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn parse_lenient(s: &str) -> Self {
        let lower = s.trim().to_ascii_lowercase();
        if lower.contains("lumos") {
            Instrument::OrbitrapFusionLumos
        } else if lower.contains("elite") {
            Instrument::EliteOrbitrap
        } else if lower.contains("velos") {
            Instrument::VelosOrbitrap
        } else {
            Instrument::Unknown
        }
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Experimental conditions accompanying a spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariates {
    pub collision_energy: f64,
    pub precursor_type: PrecursorType,
    pub instrument: Instrument,
    pub has_isotopic_peaks: bool,
}

impl Default for Covariates {
    fn default() -> Self {
        Self {
            collision_energy: 35.0,
            precursor_type: PrecursorType::Protonated,
            instrument: Instrument::Unknown,
            has_isotopic_peaks: false,
        }
    }
}

impl Covariates {
    pub fn new(
        collision_energy: f64,
        precursor_type: PrecursorType,
        instrument: Instrument,
        has_isotopic_peaks: bool,
    ) -> Result<Self, CovariateError> {
        check_energy(collision_energy)?;
        Ok(Self {
            collision_energy,
            precursor_type,
            instrument,
            has_isotopic_peaks,
        })
    }

    pub fn with_energy(mut self, collision_energy: f64) -> Result<Self, CovariateError> {
        check_energy(collision_energy)?;
        self.collision_energy = collision_energy;
        Ok(self)
    }
}

pub(crate) fn check_energy(e: f64) -> Result<(), CovariateError> {
    if (0.0..=MAX_COLLISION_ENERGY).contains(&e) {
        Ok(())
    } else {
        Err(CovariateError::EnergyOutOfRange(e.to_string()))
    }
}

pub(crate) fn parse_bool(s: &str) -> Result<bool, CovariateError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" | "t" => Ok(true),
        "false" | "0" | "no" | "n" | "f" => Ok(false),
        _ => Err(CovariateError::Bool(s.to_string())),
    }
}
