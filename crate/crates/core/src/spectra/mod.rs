//! Spectrum data model, normalization and text formats.

mod mgf;
mod msp;
pub mod numfmt;

pub use mgf::{parse_mgf, write_mgf};
pub use msp::{parse_msp, write_msp};

use thiserror::Error;

use crate::elements::{Formula, FormulaError};
use crate::molgraph::CovariateError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectraError {
    #[error("line {line}: missing `Num Peaks` header")]
    MissingNumPeaks { line: usize },
    #[error("line {line}: declared {expected} peaks but found {found}")]
    PeakCountMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse m/z `{value}`")]
    BadMz { line: usize, value: String },
    #[error("line {line}: cannot parse intensity `{value}`")]
    BadIntensity { line: usize, value: String },
    #[error("line {line}: record has no PrecursorFormula header")]
    MissingPrecursor { line: usize },
    #[error("line {line}: bad header value: {msg}")]
    BadHeader { line: usize, msg: String },
    #[error("line {line}: bad annotation: {source}")]
    BadAnnotation {
        line: usize,
        #[source]
        source: FormulaError,
    },
    #[error("line {line}: BEGIN IONS block is not terminated")]
    Unterminated { line: usize },
    #[error("line {line}: missing PEPMASS")]
    MissingPepmass { line: usize },
    #[error("line {line}: unsupported charge `{value}` (only singly charged ions)")]
    UnsupportedCharge { line: usize, value: String },
    #[error("line {line}: unexpected content `{text}`")]
    Unexpected { line: usize, text: String },
    #[error("spectrum has no positive intensity")]
    EmptySpectrum,
    #[error("invalid peak (m/z {mz}, height {height})")]
    InvalidPeak { mz: f64, height: f64 },
}

impl SpectraError {
    /// Shift the reported line number, for text embedded after a header.
    pub fn with_line_offset(self, by: usize) -> Self {
        use SpectraError::*;
        match self {
            MissingNumPeaks { line } => MissingNumPeaks { line: line + by },
            PeakCountMismatch { line, expected, found } => PeakCountMismatch {
                line: line + by,
                expected,
                found,
            },
            BadMz { line, value } => BadMz { line: line + by, value },
            BadIntensity { line, value } => BadIntensity { line: line + by, value },
            MissingPrecursor { line } => MissingPrecursor { line: line + by },
            BadHeader { line, msg } => BadHeader { line: line + by, msg },
            BadAnnotation { line, source } => BadAnnotation { line: line + by, source },
            Unterminated { line } => Unterminated { line: line + by },
            MissingPepmass { line } => MissingPepmass { line: line + by },
            UnsupportedCharge { line, value } => UnsupportedCharge { line: line + by, value },
            Unexpected { line, text } => Unexpected { line: line + by, text },
            other => other,
        }
    }

    pub(crate) fn header(line: usize, e: impl std::fmt::Display) -> Self {
        SpectraError::BadHeader {
            line,
            msg: e.to_string(),
        }
    }
}

impl From<CovariateError> for SpectraError {
    fn from(e: CovariateError) -> Self {
        SpectraError::header(0, e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub mz: f64,
    pub height: f64,
}

impl Peak {
    pub fn new(mz: f64, height: f64) -> Result<Self, SpectraError> {
        if mz > 0.0 && mz.is_finite() && height >= 0.0 && height.is_finite() {
            Ok(Self { mz, height })
        } else {
            Err(SpectraError::InvalidPeak { mz, height })
        }
    }
}

pub use crate::molgraph::Covariates;

/// A centroided spectrum with its precursor and acquisition covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRecord {
    pub id: String,
    peaks: Vec<Peak>,
    pub precursor: Option<Formula>,
    /// Observed precursor m/z when the source gives one (MGF `PEPMASS`).
    pub precursor_mz: Option<f64>,
    pub covariates: Covariates,
    /// Per-peak candidate formulas, aligned with `peaks()`.
    annotations: Option<Vec<Vec<Formula>>>,
    /// Header fields without a dedicated slot, in file order.
    pub metadata: Vec<(String, String)>,
}

impl SpectrumRecord {
    /// Peaks are sorted by m/z; peaks at identical m/z are merged by summing
    /// heights.
    pub fn new(
        id: impl Into<String>,
        peaks: Vec<Peak>,
        precursor: Option<Formula>,
        covariates: Covariates,
    ) -> Self {
        let mut r = Self {
            id: id.into(),
            peaks,
            precursor,
            precursor_mz: None,
            covariates,
            annotations: None,
            metadata: Vec::new(),
        };
        r.sort_and_merge();
        r
    }

    /// Like [`SpectrumRecord::new`] with per-peak annotations (same length as
    /// `peaks`).
    pub fn with_annotations(
        id: impl Into<String>,
        peaks: Vec<Peak>,
        annotations: Vec<Vec<Formula>>,
        precursor: Option<Formula>,
        covariates: Covariates,
    ) -> Self {
        assert_eq!(peaks.len(), annotations.len(), "one annotation list per peak");
        let mut r = Self {
            id: id.into(),
            peaks,
            precursor,
            precursor_mz: None,
            covariates,
            annotations: Some(annotations),
            metadata: Vec::new(),
        };
        r.sort_and_merge();
        r
    }

    fn sort_and_merge(&mut self) {
        let n = self.peaks.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.peaks[a].mz.total_cmp(&self.peaks[b].mz));
        let mut peaks: Vec<Peak> = Vec::with_capacity(n);
        let mut anns: Option<Vec<Vec<Formula>>> = self.annotations.as_ref().map(|_| Vec::new());
        for i in order {
            let p = self.peaks[i];
            let merge = peaks.last().is_some_and(|last| last.mz == p.mz);
            if merge {
                peaks.last_mut().unwrap().height += p.height;
            } else {
                peaks.push(p);
            }
            if let (Some(out), Some(src)) = (anns.as_mut(), self.annotations.as_ref()) {
                if merge {
                    let tgt = out.last_mut().unwrap();
                    for f in &src[i] {
                        if !tgt.contains(f) {
                            tgt.push(*f);
                        }
                    }
                } else {
                    out.push(src[i].clone());
                }
            }
        }
        self.peaks = peaks;
        self.annotations = anns;
    }

    pub fn peaks(&self) -> &[Peak] {
        &self.peaks
    }

    pub fn annotations(&self) -> Option<&[Vec<Formula>]> {
        self.annotations.as_deref()
    }

    pub fn set_annotations(&mut self, annotations: Option<Vec<Vec<Formula>>>) {
        if let Some(a) = &annotations {
            assert_eq!(a.len(), self.peaks.len(), "one annotation list per peak");
        }
        self.annotations = annotations;
    }

    /// Annotation list of peak `i` (empty when unannotated).
    pub fn peak_annotations(&self, i: usize) -> &[Formula] {
        self.annotations
            .as_ref()
            .map(|a| a[i].as_slice())
            .unwrap_or(&[])
    }

    pub fn total_height(&self) -> f64 {
        self.peaks.iter().map(|p| p.height).sum()
    }

    /// Declared precursor m/z, falling back to the precursor formula mass.
    pub fn precursor_mass(&self) -> Option<f64> {
        self.precursor_mz
            .or_else(|| self.precursor.as_ref().map(Formula::mass))
    }

    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(key))
            .map(|(_, v)| v.as_str())
    }

    /// Scale heights to sum to one.
    pub fn normalized(&self) -> Result<SpectrumRecord, SpectraError> {
        normalize(self)
    }
}

pub fn normalize(s: &SpectrumRecord) -> Result<SpectrumRecord, SpectraError> {
    let total = s.total_height();
    if s.peaks.is_empty() || total <= 0.0 || !total.is_finite() {
        return Err(SpectraError::EmptySpectrum);
    }
    let mut out = s.clone();
    for p in &mut out.peaks {
        p.height /= total;
    }
    Ok(out)
}

/// Split a text stream into lines, accepting LF and CRLF.
pub(crate) fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
}

pub(crate) fn parse_annotation_token(line: usize, token: &str) -> Result<Vec<Formula>, SpectraError> {
    let token = token.trim_matches('"');
    token
        .split('/')
        .map(|s| {
            crate::elements::parse_formula(s)
                .map_err(|source| SpectraError::BadAnnotation { line, source })
        })
        .collect()
}
