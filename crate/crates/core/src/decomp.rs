//! Product mass decomposition.
//!
//! Enumerates every subformula of a precursor whose theoretical mass lies
//! within the tolerance window of an observed m/z and which passes the
//! feasibility constraints. The search is a bounded depth-first walk over
//! elements from heaviest to lightest; hydrogen is solved in closed form at
//! the leaves.

use thiserror::Error;

use crate::elements::{idx, Formula, MONOISOTOPIC_MASSES, N_ELEMENTS};
use crate::spectra::SpectrumRecord;

/// Absolute floor (Da) of the tolerance window.
pub const MIN_TOLERANCE_DA: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecompError {
    #[error("tolerance must be positive (got {0} ppm)")]
    Tolerance(f64),
    #[error("invalid feasibility constraints: {0}")]
    Constraints(&'static str),
    #[error("record `{0}` has no precursor formula")]
    NoPrecursor(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityConstraints {
    pub rdbe_min: f64,
    pub rdbe_max: f64,
    /// Applies only when carbon is present.
    pub max_h_to_c: f64,
}

impl Default for FeasibilityConstraints {
    fn default() -> Self {
        Self {
            rdbe_min: -0.5,
            rdbe_max: 40.0,
            max_h_to_c: 6.0,
        }
    }
}

impl FeasibilityConstraints {
    pub fn admits(&self, f: &Formula) -> bool {
        let rdbe = f.rdbe();
        if rdbe < self.rdbe_min || rdbe > self.rdbe_max {
            return false;
        }
        let c = f.count(idx::C);
        c == 0 || f64::from(f.count(idx::H)) <= self.max_h_to_c * f64::from(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompConfig {
    pub epsilon_ppm: f64,
    pub constraints: FeasibilityConstraints,
}

impl Default for DecompConfig {
    fn default() -> Self {
        Self {
            epsilon_ppm: 10.0,
            constraints: FeasibilityConstraints::default(),
        }
    }
}

impl DecompConfig {
    pub fn with_ppm(epsilon_ppm: f64) -> Result<Self, DecompError> {
        let cfg = Self {
            epsilon_ppm,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DecompError> {
        if !(self.epsilon_ppm > 0.0 && self.epsilon_ppm.is_finite()) {
            return Err(DecompError::Tolerance(self.epsilon_ppm));
        }
        let c = &self.constraints;
        if !(c.rdbe_min <= c.rdbe_max) {
            return Err(DecompError::Constraints("rdbe_min > rdbe_max"));
        }
        if !(c.max_h_to_c > 0.0) {
            return Err(DecompError::Constraints("max_h_to_c must be positive"));
        }
        Ok(())
    }

    /// Half-width (Da) of the window around `m`.
    pub fn tolerance(&self, m: f64) -> f64 {
        (self.epsilon_ppm * 1e-6 * m).max(MIN_TOLERANCE_DA)
    }

    /// Whether a formula of mass `mass` falls in the window around `m`.
    pub fn in_window(&self, mass: f64, m: f64) -> bool {
        (mass - m).abs() <= self.tolerance(m)
    }
}

/// Heaviest first; hydrogen is handled separately.
const SEARCH_ORDER: [usize; N_ELEMENTS - 1] = [
    idx::I,
    idx::BR,
    idx::CL,
    idx::S,
    idx::P,
    idx::F,
    idx::O,
    idx::N,
    idx::C,
];

// Slack on the pruning bounds so that rounding never discards a formula the
// final exact check would accept.
const BOUND_SLACK: f64 = 1e-9;

struct Search<'a> {
    precursor: &'a Formula,
    cfg: &'a DecompConfig,
    target: f64,
    lo: f64,
    hi: f64,
    /// Maximum mass still reachable from elements at positions `d..`.
    rest_max: [f64; N_ELEMENTS],
    current: Formula,
    out: Vec<Formula>,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize, mass: f64) {
        if depth == SEARCH_ORDER.len() {
            self.solve_hydrogen(mass);
            return;
        }
        let e = SEARCH_ORDER[depth];
        let mu = MONOISOTOPIC_MASSES[e];
        let cap = self.precursor.count(e);
        let rest = self.rest_max[depth + 1];
        let min_n = ((self.lo - mass - rest) / mu).ceil().max(0.0);
        if min_n > f64::from(cap) {
            return;
        }
        let max_n = ((self.hi - mass) / mu).floor();
        if max_n < 0.0 {
            return;
        }
        let max_n = (max_n as u32).min(cap);
        for n in (min_n as u32)..=max_n {
            self.current.set_count(e, n as u8);
            self.descend(depth + 1, mass + f64::from(n) * mu);
        }
        self.current.set_count(e, 0);
    }

    fn solve_hydrogen(&mut self, mass: f64) {
        let mu = MONOISOTOPIC_MASSES[idx::H];
        let cap = self.precursor.count(idx::H);
        let lo = ((self.lo - mass) / mu).ceil().max(0.0);
        let hi = ((self.hi - mass) / mu).floor();
        if hi < 0.0 || lo > f64::from(cap) {
            return;
        }
        for h in (lo as u32)..=(hi as u32).min(cap) {
            self.current.set_count(idx::H, h as u8);
            let f = self.current;
            if self.cfg.in_window(f.mass(), self.target) && self.cfg.constraints.admits(&f) {
                self.out.push(f);
            }
        }
        self.current.set_count(idx::H, 0);
    }
}

/// All feasible subformulas of `precursor` within tolerance of `m`, sorted by
/// absolute mass error and then by formula.
pub fn decompose(m: f64, precursor: &Formula, cfg: &DecompConfig) -> Vec<Formula> {
    if !(m > 0.0 && m.is_finite()) {
        return Vec::new();
    }
    let tol = cfg.tolerance(m);
    let mut rest_max = [0.0; N_ELEMENTS];
    rest_max[SEARCH_ORDER.len()] = f64::from(precursor.count(idx::H)) * MONOISOTOPIC_MASSES[idx::H];
    for d in (0..SEARCH_ORDER.len()).rev() {
        let e = SEARCH_ORDER[d];
        rest_max[d] = rest_max[d + 1] + f64::from(precursor.count(e)) * MONOISOTOPIC_MASSES[e];
    }
    let mut search = Search {
        precursor,
        cfg,
        target: m,
        lo: m - tol - BOUND_SLACK,
        hi: m + tol + BOUND_SLACK,
        rest_max,
        current: Formula::empty(),
        out: Vec::new(),
    };
    search.descend(0, 0.0);
    let mut out = search.out;
    out.sort_by(|a, b| {
        (a.mass() - m)
            .abs()
            .total_cmp(&(b.mass() - m).abs())
            .then_with(|| a.cmp(b))
    });
    out
}

/// Replace every peak's annotation list by its decomposition.
pub fn annotate_spectrum(s: &SpectrumRecord, cfg: &DecompConfig) -> Result<SpectrumRecord, DecompError> {
    let precursor = s
        .precursor
        .ok_or_else(|| DecompError::NoPrecursor(s.id.clone()))?;
    let annotations = s
        .peaks()
        .iter()
        .map(|p| decompose(p.mz, &precursor, cfg))
        .collect();
    let mut out = s.clone();
    out.set_annotations(Some(annotations));
    Ok(out)
}

/// Mass error of `f` relative to `m`, in ppm.
pub fn ppm_error(f: &Formula, m: f64) -> f64 {
    (f.mass() - m) / m * 1e6
}
